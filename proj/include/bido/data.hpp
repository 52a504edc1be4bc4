#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bido/matrix.hpp"

namespace bido {

enum class SplitTag { train, val, test };
enum class Provenance { mnist_idx, synthetic_blobs, synthetic_digits };

const char* to_string(SplitTag t);
const char* to_string(Provenance p);

// Labeled feature vectors in [0,1]^d with one-hot labels. Immutable after
// construction.
struct Dataset {
    Matrix inputs;           // N x d
    Matrix labels;           // N x k, one-hot rows
    std::vector<int> label_ids;
    int class_count = 0;
    SplitTag split = SplitTag::train;
    Provenance provenance = Provenance::synthetic_blobs;

    Eigen::Index size() const { return inputs.rows(); }
    int dim() const { return static_cast<int>(inputs.cols()); }
};

Dataset make_dataset(Matrix inputs, std::vector<int> label_ids, int class_count,
                     SplitTag split, Provenance provenance);

// Big-endian IDX files (magic 0x00000803 for images, 0x00000801 for labels).
// Gzip-compressed files are detected by magic bytes and inflated
// transparently. Pixels are scaled to [0,1] by /255; labels one-hot, k = 10.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// Seeded Gaussian clusters with centers at least `separation` cluster
// standard deviations apart, clipped to [0,1]^d. Cluster std is 0.05.
Dataset synthetic_blobs(int classes, int per_class, int dim, double separation,
                        std::uint64_t seed);

// 28x28 seven-segment digit renderings with per-sample offset, intensity
// jitter and Gaussian pixel noise; 10 classes. A fast stand-in corpus with
// MNIST-like shape.
Dataset synthetic_digits(int per_class, double noise, std::uint64_t seed);

// Stratified, seed-deterministic split; fractions must sum to 1. Per-class
// counts are preserved within +-1 sample. A class with fewer samples than
// non-zero parts is an error.
std::array<Dataset, 3> split(const Dataset& dataset, const std::array<double, 3>& fractions,
                             std::uint64_t seed);

/// Raw dump: little-endian u64 header length, JSON header, contiguous
/// little-endian 64-bit floats. Inputs round-trip bit-exactly.
void save_dataset_dump(const Dataset& dataset, const std::string& path);
Dataset load_dataset_dump(const std::string& path);

// Seeded epoch shuffling; every retained index is visited exactly once per
// epoch. The trailing batch is dropped when smaller than 2 and the drop flag
// is set.
class BatchIterator {
  public:
    BatchIterator(const Dataset& dataset, int batch_size, std::uint64_t seed,
                  bool drop_small = true);

    /// Index batches for one epoch, deterministic in (seed, epoch).
    std::vector<std::vector<Eigen::Index>> epoch_batches(int epoch) const;

    Matrix gather_inputs(const std::vector<Eigen::Index>& batch) const;
    Matrix gather_labels(const std::vector<Eigen::Index>& batch) const;

  private:
    const Dataset* dataset_;
    int batch_size_;
    std::uint64_t seed_;
    bool drop_small_;
};

}  // namespace bido
