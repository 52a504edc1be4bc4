#pragma once

#include "bido/matrix.hpp"
#include "bido/training.hpp"

namespace bido {

// Small fixed scene for end-to-end gradient checks: a 39-parameter two-tap
// network (3 -> 4 -> 3 -> 2) with a six-sample batch.
struct ObjectiveProbe {
    ClassifierModel model;
    Matrix inputs;
    Matrix labels;
    BiDOConfig config;
};

ObjectiveProbe make_objective_probe(DependencyMeasure measure, double lambda_x, double lambda_y,
                                    std::uint64_t seed);

/// Composite objective evaluated at the given flat parameter vector.
double probe_objective(const ObjectiveProbe& probe, const Vector& flat_params);

/// Analytic gradient at the probe's current parameters, flattened.
Vector probe_gradient(const ObjectiveProbe& probe);

GradientCheckReport check_objective_gradient(const ObjectiveProbe& probe, double step,
                                             double tolerance);

// Smallest relative singular gap (sigma1 - sigma2) / sigma1 over all centered
// Gram products the COCO terms of the probe touch, computed via the dense SVD
// oracle. Used to select well-conditioned probes.
double min_coco_singular_gap(const ObjectiveProbe& probe);

}  // namespace bido
