#include "bido/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bido/errors.hpp"

namespace bido {

using nlohmann::json;

const char* to_string(SplitTag t) {
    switch (t) {
        case SplitTag::train: return "train";
        case SplitTag::val: return "val";
        case SplitTag::test: return "test";
    }
    return "?";
}

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::mnist_idx: return "mnist_idx";
        case Provenance::synthetic_blobs: return "synthetic_blobs";
        case Provenance::synthetic_digits: return "synthetic_digits";
    }
    return "?";
}

namespace {

SplitTag split_from(const std::string& s) {
    if (s == "train") return SplitTag::train;
    if (s == "val") return SplitTag::val;
    if (s == "test") return SplitTag::test;
    throw FormatError("dataset dump: unknown split '" + s + "'");
}

Provenance provenance_from(const std::string& s) {
    if (s == "mnist_idx") return Provenance::mnist_idx;
    if (s == "synthetic_blobs") return Provenance::synthetic_blobs;
    if (s == "synthetic_digits") return Provenance::synthetic_digits;
    throw FormatError("dataset dump: unknown provenance '" + s + "'");
}

Matrix one_hot(const std::vector<int>& ids, int class_count) {
    Matrix labels = Matrix::Zero(static_cast<Eigen::Index>(ids.size()), class_count);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= class_count) {
            throw ParameterError("one_hot: label id out of range");
        }
        labels(static_cast<Eigen::Index>(i), ids[i]) = 1.0;
    }
    return labels;
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open file: " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& compressed) {
    z_stream strm{};
    if (inflateInit2(&strm, 15 + 32) != Z_OK) {
        throw FormatError("gzip: inflateInit failed");
    }
    std::vector<unsigned char> out;
    out.reserve(compressed.size() * 4);
    std::vector<unsigned char> buffer(1 << 16);
    strm.next_in = const_cast<unsigned char*>(compressed.data());
    strm.avail_in = static_cast<uInt>(compressed.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        strm.next_out = buffer.data();
        strm.avail_out = static_cast<uInt>(buffer.size());
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw FormatError("gzip: corrupt stream");
        }
        out.insert(out.end(), buffer.data(), buffer.data() + (buffer.size() - strm.avail_out));
    }
    inflateEnd(&strm);
    return out;
}

std::vector<unsigned char> read_maybe_gzipped(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) {
        return gunzip(bytes);
    }
    return bytes;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t at) {
    if (at + 4 > bytes.size()) throw FormatError("IDX: truncated header");
    return (static_cast<std::uint32_t>(bytes[at]) << 24) |
           (static_cast<std::uint32_t>(bytes[at + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[at + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[at + 3]);
}

}  // namespace

Dataset make_dataset(Matrix inputs, std::vector<int> label_ids, int class_count,
                     SplitTag split_tag, Provenance provenance) {
    if (inputs.rows() != static_cast<Eigen::Index>(label_ids.size())) {
        throw DimensionError("make_dataset: inputs/labels length mismatch");
    }
    Dataset d;
    d.labels = one_hot(label_ids, class_count);
    d.inputs = std::move(inputs);
    d.label_ids = std::move(label_ids);
    d.class_count = class_count;
    d.split = split_tag;
    d.provenance = provenance;
    return d;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_maybe_gzipped(images_path);
    const auto lbl = read_maybe_gzipped(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0);
    if (img_magic != 0x00000803u) {
        std::ostringstream os;
        os << "IDX image file: bad magic 0x" << std::hex << img_magic << " (expected 0x803)";
        throw FormatError(os.str());
    }
    const std::uint32_t lbl_magic = read_be32(lbl, 0);
    if (lbl_magic != 0x00000801u) {
        std::ostringstream os;
        os << "IDX label file: bad magic 0x" << std::hex << lbl_magic << " (expected 0x801)";
        throw FormatError(os.str());
    }
    const std::uint32_t count = read_be32(img, 4);
    const std::uint32_t rows = read_be32(img, 8);
    const std::uint32_t cols = read_be32(img, 12);
    const std::uint32_t lbl_count = read_be32(lbl, 4);
    if (count != lbl_count) {
        std::ostringstream os;
        os << "IDX: image count " << count << " != label count " << lbl_count;
        throw ConsistencyError(os.str());
    }
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (img.size() != 16 + static_cast<std::size_t>(count) * pixels) {
        throw FormatError("IDX image file: payload size mismatch");
    }
    if (lbl.size() != 8 + count) throw FormatError("IDX label file: payload size mismatch");

    Matrix inputs(count, static_cast<Eigen::Index>(pixels));
    std::vector<int> ids(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const unsigned char* px = img.data() + 16 + static_cast<std::size_t>(i) * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            inputs(i, static_cast<Eigen::Index>(p)) = static_cast<double>(px[p]) / 255.0;
        }
        const unsigned char label = lbl[8 + i];
        if (label > 9) throw FormatError("IDX label file: label out of range 0..9");
        ids[i] = label;
    }
    return make_dataset(std::move(inputs), std::move(ids), 10, SplitTag::train,
                        Provenance::mnist_idx);
}

Dataset synthetic_blobs(int classes, int per_class, int dim, double separation,
                        std::uint64_t seed) {
    if (classes < 2 || per_class < 2) throw ParameterError("synthetic_blobs: k>=2, n>=2");
    if (dim < 1) throw ParameterError("synthetic_blobs: dim >= 1");
    constexpr double kClusterStd = 0.05;
    const double min_dist = separation * kClusterStd;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> center_dist(0.1, 0.9);
    std::vector<Vector> centers;
    int attempts = 0;
    while (static_cast<int>(centers.size()) < classes) {
        if (++attempts > 20000) {
            throw GenerationError(
                "synthetic_blobs: could not place centers at the requested separation");
        }
        Vector c(dim);
        for (int j = 0; j < dim; ++j) c(j) = center_dist(rng);
        bool ok = true;
        for (const auto& other : centers) {
            if ((c - other).norm() < min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back(std::move(c));
    }

    std::normal_distribution<double> noise(0.0, kClusterStd);
    Matrix inputs(static_cast<Eigen::Index>(classes) * per_class, dim);
    std::vector<int> ids(static_cast<std::size_t>(classes) * per_class);
    Eigen::Index row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            for (int j = 0; j < dim; ++j) {
                inputs(row, j) = std::clamp(centers[c](j) + noise(rng), 0.0, 1.0);
            }
            ids[static_cast<std::size_t>(row)] = c;
        }
    }
    return make_dataset(std::move(inputs), std::move(ids), classes, SplitTag::train,
                        Provenance::synthetic_blobs);
}

namespace {

// Seven-segment layout inside a 28x28 canvas. Segments are axis-aligned bars
// of width 3.
struct SegmentBox {
    int r0, r1, c0, c1;  // inclusive
};

const std::array<SegmentBox, 7> kSegments = {{
    {4, 6, 9, 19},    // A: top
    {4, 14, 17, 19},  // B: top-right
    {13, 23, 17, 19}, // C: bottom-right
    {21, 23, 9, 19},  // D: bottom
    {13, 23, 9, 11},  // E: bottom-left
    {4, 14, 9, 11},   // F: top-left
    {12, 14, 9, 19},  // G: middle
}};

const std::array<std::uint8_t, 10> kDigitSegments = {{
    0b0111111,  // 0: ABCDEF
    0b0000110,  // 1: BC
    0b1011011,  // 2: ABDEG
    0b1001111,  // 3: ABCDG
    0b1100110,  // 4: BCFG
    0b1101101,  // 5: ACDFG
    0b1111101,  // 6: ACDEFG
    0b0000111,  // 7: ABC
    0b1111111,  // 8: all
    0b1101111,  // 9: ABCDFG
}};

}  // namespace

Dataset synthetic_digits(int per_class, double noise, std::uint64_t seed) {
    if (per_class < 2) throw ParameterError("synthetic_digits: per_class >= 2");
    if (noise < 0.0) throw ParameterError("synthetic_digits: noise >= 0");
    constexpr int kSide = 28;
    constexpr int kDim = kSide * kSide;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> offset(-2, 2);
    std::uniform_real_distribution<double> intensity(0.75, 1.0);
    std::normal_distribution<double> pixel_noise(0.0, noise);

    Matrix inputs = Matrix::Zero(static_cast<Eigen::Index>(10) * per_class, kDim);
    std::vector<int> ids(static_cast<std::size_t>(10) * per_class);
    Eigen::Index row = 0;
    for (int digit = 0; digit < 10; ++digit) {
        for (int s = 0; s < per_class; ++s, ++row) {
            const int dr = offset(rng);
            const int dc = offset(rng);
            const double level = intensity(rng);
            for (int seg = 0; seg < 7; ++seg) {
                if (!(kDigitSegments[static_cast<std::size_t>(digit)] >> seg & 1)) continue;
                const auto& box = kSegments[static_cast<std::size_t>(seg)];
                for (int r = box.r0; r <= box.r1; ++r) {
                    for (int c = box.c0; c <= box.c1; ++c) {
                        const int rr = r + dr;
                        const int cc = c + dc;
                        if (rr < 0 || rr >= kSide || cc < 0 || cc >= kSide) continue;
                        inputs(row, rr * kSide + cc) = level;
                    }
                }
            }
            if (noise > 0.0) {
                for (int p = 0; p < kDim; ++p) {
                    inputs(row, p) = std::clamp(inputs(row, p) + pixel_noise(rng), 0.0, 1.0);
                }
            }
            ids[static_cast<std::size_t>(row)] = digit;
        }
    }
    return make_dataset(std::move(inputs), std::move(ids), 10, SplitTag::train,
                        Provenance::synthetic_digits);
}

std::array<Dataset, 3> split(const Dataset& dataset, const std::array<double, 3>& fractions,
                             std::uint64_t seed) {
    double total = 0.0;
    for (double f : fractions) {
        if (f < 0.0) throw ParameterError("split: fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParameterError("split: fractions must sum to 1");
    int nonzero_parts = 0;
    for (double f : fractions) nonzero_parts += f > 0.0 ? 1 : 0;

    std::vector<std::vector<Eigen::Index>> per_class(static_cast<std::size_t>(dataset.class_count));
    for (Eigen::Index i = 0; i < dataset.size(); ++i) {
        per_class[static_cast<std::size_t>(dataset.label_ids[static_cast<std::size_t>(i)])]
            .push_back(i);
    }
    for (const auto& members : per_class) {
        if (static_cast<int>(members.size()) < nonzero_parts) {
            throw ParameterError("split: a class has fewer samples than split parts");
        }
    }

    std::mt19937_64 rng(seed);
    std::array<std::vector<Eigen::Index>, 3> part_indices;
    for (auto& members_const : per_class) {
        auto members = members_const;
        std::shuffle(members.begin(), members.end(), rng);
        const auto n = members.size();
        // Largest-remainder allocation keeps per-class counts within +-1.
        std::array<std::size_t, 3> take{};
        std::array<double, 3> remainder{};
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double quota = fractions[static_cast<std::size_t>(p)] * static_cast<double>(n);
            take[static_cast<std::size_t>(p)] = static_cast<std::size_t>(std::floor(quota));
            remainder[static_cast<std::size_t>(p)] =
                quota - std::floor(quota);
            assigned += take[static_cast<std::size_t>(p)];
        }
        while (assigned < n) {
            int best = 0;
            double best_rem = -1.0;
            for (int p = 0; p < 3; ++p) {
                if (fractions[static_cast<std::size_t>(p)] > 0.0 &&
                    remainder[static_cast<std::size_t>(p)] > best_rem) {
                    best_rem = remainder[static_cast<std::size_t>(p)];
                    best = p;
                }
            }
            remainder[static_cast<std::size_t>(best)] = -2.0;
            ++take[static_cast<std::size_t>(best)];
            ++assigned;
        }
        std::size_t at = 0;
        for (int p = 0; p < 3; ++p) {
            for (std::size_t i = 0; i < take[static_cast<std::size_t>(p)]; ++i) {
                part_indices[static_cast<std::size_t>(p)].push_back(members[at++]);
            }
        }
    }

    std::array<Dataset, 3> out;
    const std::array<SplitTag, 3> tags = {SplitTag::train, SplitTag::val, SplitTag::test};
    for (int p = 0; p < 3; ++p) {
        auto& indices = part_indices[static_cast<std::size_t>(p)];
        std::sort(indices.begin(), indices.end());
        Matrix inputs(static_cast<Eigen::Index>(indices.size()), dataset.inputs.cols());
        std::vector<int> ids(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            inputs.row(static_cast<Eigen::Index>(i)) = dataset.inputs.row(indices[i]);
            ids[i] = dataset.label_ids[static_cast<std::size_t>(indices[i])];
        }
        out[static_cast<std::size_t>(p)] = make_dataset(std::move(inputs), std::move(ids),
                                                        dataset.class_count,
                                                        tags[static_cast<std::size_t>(p)],
                                                        dataset.provenance);
    }
    return out;
}

void save_dataset_dump(const Dataset& dataset, const std::string& path) {
    json header;
    header["format"] = "bido-dataset";
    header["version"] = 1;
    header["rows"] = dataset.size();
    header["dim"] = dataset.dim();
    header["classes"] = dataset.class_count;
    header["split"] = to_string(dataset.split);
    header["provenance"] = to_string(dataset.provenance);
    header["labels"] = dataset.label_ids;
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("save_dataset_dump: cannot open " + path);
    const std::uint64_t len = header_str.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(reinterpret_cast<const char*>(dataset.inputs.data()),
              static_cast<std::streamsize>(sizeof(double) *
                                           static_cast<std::size_t>(dataset.inputs.size())));
}

Dataset load_dataset_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("load_dataset_dump: cannot open " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw FormatError("load_dataset_dump: truncated header length");
    std::string header_str(len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError("load_dataset_dump: truncated header");
    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw FormatError(std::string("load_dataset_dump: bad header JSON: ") + e.what());
    }
    if (header.value("format", "") != "bido-dataset" || header.value("version", 0) != 1) {
        throw FormatError("load_dataset_dump: unrecognized container");
    }
    const auto rows = header.at("rows").get<Eigen::Index>();
    const auto dim = header.at("dim").get<Eigen::Index>();
    Matrix inputs(rows, dim);
    in.read(reinterpret_cast<char*>(inputs.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows * dim)));
    if (!in) throw FormatError("load_dataset_dump: truncated payload");
    auto ids = header.at("labels").get<std::vector<int>>();
    Dataset d = make_dataset(std::move(inputs), std::move(ids),
                             header.at("classes").get<int>(),
                             split_from(header.at("split").get<std::string>()),
                             provenance_from(header.at("provenance").get<std::string>()));
    return d;
}

BatchIterator::BatchIterator(const Dataset& dataset, int batch_size, std::uint64_t seed,
                             bool drop_small)
    : dataset_(&dataset), batch_size_(batch_size), seed_(seed), drop_small_(drop_small) {
    if (batch_size < 1) throw ParameterError("BatchIterator: batch size >= 1");
}

std::vector<std::vector<Eigen::Index>> BatchIterator::epoch_batches(int epoch) const {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(dataset_->size()));
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq seq{static_cast<std::uint64_t>(seed_), static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::vector<Eigen::Index>> batches;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(batch_size_)) {
        const std::size_t end = std::min(at + static_cast<std::size_t>(batch_size_), order.size());
        std::vector<Eigen::Index> batch(order.begin() + static_cast<std::ptrdiff_t>(at),
                                        order.begin() + static_cast<std::ptrdiff_t>(end));
        if (drop_small_ && batch.size() < 2) continue;
        batches.push_back(std::move(batch));
    }
    return batches;
}

Matrix BatchIterator::gather_inputs(const std::vector<Eigen::Index>& batch) const {
    Matrix out(static_cast<Eigen::Index>(batch.size()), dataset_->inputs.cols());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = dataset_->inputs.row(batch[i]);
    }
    return out;
}

Matrix BatchIterator::gather_labels(const std::vector<Eigen::Index>& batch) const {
    Matrix out(static_cast<Eigen::Index>(batch.size()), dataset_->labels.cols());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = dataset_->labels.row(batch[i]);
    }
    return out;
}

}  // namespace bido
