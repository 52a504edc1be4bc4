#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "bido/data.hpp"
#include "bido/errors.hpp"

using namespace bido;

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                                    static_cast<unsigned char>(v >> 16),
                                    static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

struct IdxFixture {
    std::string images = "/tmp/bido_test_images.idx";
    std::string labels = "/tmp/bido_test_labels.idx";

    IdxFixture(std::uint32_t magic_img, std::uint32_t magic_lbl, std::uint32_t n_img,
               std::uint32_t n_lbl) {
        std::ofstream img(images, std::ios::binary);
        write_be32(img, magic_img);
        write_be32(img, n_img);
        write_be32(img, 2);
        write_be32(img, 2);
        for (std::uint32_t i = 0; i < n_img; ++i) {
            const unsigned char px[4] = {0, 255, static_cast<unsigned char>(i * 10), 128};
            img.write(reinterpret_cast<const char*>(px), 4);
        }
        img.close();
        std::ofstream lbl(labels, std::ios::binary);
        write_be32(lbl, magic_lbl);
        write_be32(lbl, n_lbl);
        for (std::uint32_t i = 0; i < n_lbl; ++i) {
            const unsigned char v = static_cast<unsigned char>(i % 10);
            lbl.write(reinterpret_cast<const char*>(&v), 1);
        }
    }
    ~IdxFixture() {
        std::remove(images.c_str());
        std::remove(labels.c_str());
    }
};

}  // namespace

TEST_CASE("IDX loader parses pixels and labels") {
    IdxFixture fx(0x803, 0x801, 3, 3);
    const Dataset d = load_mnist_idx(fx.images, fx.labels);
    CHECK(d.size() == 3);
    CHECK(d.dim() == 4);
    CHECK(d.class_count == 10);
    CHECK(d.inputs(0, 0) == 0.0);
    CHECK(d.inputs(0, 1) == 1.0);
    CHECK(d.inputs(0, 3) == doctest::Approx(128.0 / 255.0));
    CHECK(d.label_ids[2] == 2);
    for (Eigen::Index r = 0; r < 3; ++r) CHECK(d.labels.row(r).sum() == 1.0);
}

TEST_CASE("IDX loader rejects bad magic and count mismatch") {
    {
        IdxFixture fx(0x803, 0x803, 3, 3);  // image magic in the label slot
        CHECK_THROWS_AS(load_mnist_idx(fx.images, fx.labels), FormatError);
    }
    {
        IdxFixture fx(0x801, 0x801, 3, 3);
        CHECK_THROWS_AS(load_mnist_idx(fx.images, fx.labels), FormatError);
    }
    {
        IdxFixture fx(0x803, 0x801, 3, 4);
        CHECK_THROWS_AS(load_mnist_idx(fx.images, fx.labels), ConsistencyError);
    }
}

TEST_CASE("gzipped MNIST subset loads transparently" * doctest::skip(false)) {
    const std::string images = std::string(BIDO_SOURCE_DIR) + "/data/mnist/mnist10k-images-idx3-ubyte.gz";
    const std::string labels = std::string(BIDO_SOURCE_DIR) + "/data/mnist/mnist10k-labels-idx1-ubyte.gz";
    if (!std::filesystem::exists(images)) {
        MESSAGE("MNIST subset not present; skipping");
        return;
    }
    const Dataset d = load_mnist_idx(images, labels);
    CHECK(d.size() == 10000);
    CHECK(d.dim() == 784);
    CHECK(d.inputs.minCoeff() >= 0.0);
    CHECK(d.inputs.maxCoeff() <= 1.0);
    for (Eigen::Index r = 0; r < d.size(); ++r) {
        REQUIRE(d.labels.row(r).sum() == 1.0);
    }
}

TEST_CASE("synthetic blobs: determinism, range, separability setup") {
    const Dataset a = synthetic_blobs(3, 10, 4, 8.0, 42);
    const Dataset b = synthetic_blobs(3, 10, 4, 8.0, 42);
    CHECK((a.inputs - b.inputs).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.label_ids == b.label_ids);
    CHECK(a.inputs.minCoeff() >= 0.0);
    CHECK(a.inputs.maxCoeff() <= 1.0);
    CHECK(a.size() == 30);

    const Dataset c = synthetic_blobs(3, 10, 4, 8.0, 43);
    CHECK((a.inputs - c.inputs).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS_AS(synthetic_blobs(40, 5, 1, 60.0, 1), GenerationError);
    CHECK_THROWS_AS(synthetic_blobs(1, 5, 2, 8.0, 1), ParameterError);
}

TEST_CASE("synthetic digits: shape, determinism, distinct classes") {
    const Dataset a = synthetic_digits(5, 0.05, 7);
    CHECK(a.size() == 50);
    CHECK(a.dim() == 784);
    CHECK(a.class_count == 10);
    CHECK(a.inputs.minCoeff() >= 0.0);
    CHECK(a.inputs.maxCoeff() <= 1.0);
    const Dataset b = synthetic_digits(5, 0.05, 7);
    CHECK((a.inputs - b.inputs).cwiseAbs().maxCoeff() == 0.0);

    // Class prototypes differ pairwise (noise-free renderings).
    const Dataset clean = synthetic_digits(2, 0.0, 8);
    for (int c1 = 0; c1 < 10; ++c1) {
        for (int c2 = c1 + 1; c2 < 10; ++c2) {
            const double dist =
                (clean.inputs.row(c1 * 2) - clean.inputs.row(c2 * 2)).norm();
            CHECK(dist > 1.0);
        }
    }
}

TEST_CASE("stratified split: counts, determinism, edge fractions") {
    const Dataset d = synthetic_blobs(2, 50, 3, 6.0, 11);  // 100 samples, 50/50

    auto all = split(d, {1.0, 0.0, 0.0}, 5);
    CHECK(all[0].size() == 100);
    CHECK(all[1].size() == 0);
    CHECK(all[2].size() == 0);

    auto parts = split(d, {0.8, 0.1, 0.1}, 5);
    CHECK(parts[0].size() == 80);
    CHECK(parts[1].size() == 10);
    CHECK(parts[2].size() == 10);
    for (int p = 0; p < 3; ++p) {
        int count0 = 0;
        for (int id : parts[static_cast<std::size_t>(p)].label_ids) count0 += id == 0 ? 1 : 0;
        const int expect = p == 0 ? 40 : 5;
        CHECK(count0 == expect);
    }

    auto parts2 = split(d, {0.8, 0.1, 0.1}, 5);
    CHECK((parts[0].inputs - parts2[0].inputs).cwiseAbs().maxCoeff() == 0.0);

    const Dataset tiny = synthetic_blobs(2, 2, 3, 6.0, 12);
    CHECK_THROWS_AS(split(tiny, {0.4, 0.3, 0.3}, 1), ParameterError);
    CHECK_THROWS_AS(split(d, {0.5, 0.2, 0.2}, 1), ParameterError);  // sums to 0.9
}

TEST_CASE("split is disjoint and exhaustive") {
    const Dataset d = synthetic_blobs(3, 21, 2, 6.0, 13);
    auto parts = split(d, {0.6, 0.2, 0.2}, 9);
    CHECK(parts[0].size() + parts[1].size() + parts[2].size() == d.size());
    // Rows must come from the original set; count multiplicity via strings.
    std::multiset<std::string> original;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        original.insert(std::string(reinterpret_cast<const char*>(d.inputs.row(i).data()),
                                    sizeof(double) * static_cast<std::size_t>(d.dim())));
    }
    std::multiset<std::string> seen;
    for (const auto& part : parts) {
        for (Eigen::Index i = 0; i < part.size(); ++i) {
            seen.insert(std::string(reinterpret_cast<const char*>(part.inputs.row(i).data()),
                                    sizeof(double) * static_cast<std::size_t>(part.dim())));
        }
    }
    CHECK(original == seen);
}

TEST_CASE("dataset dump round-trips bit-exactly") {
    Dataset d = synthetic_blobs(2, 6, 3, 6.0, 14);
    d.inputs(0, 0) = 1.0 / 3.0;
    d.inputs(1, 1) = 5e-324;
    const std::string path = "/tmp/bido_test_dataset.bin";
    save_dataset_dump(d, path);
    const Dataset loaded = load_dataset_dump(path);
    REQUIRE(loaded.size() == d.size());
    for (Eigen::Index i = 0; i < d.inputs.size(); ++i) {
        const double a = *(d.inputs.data() + i);
        const double b = *(loaded.inputs.data() + i);
        CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
    }
    CHECK(loaded.label_ids == d.label_ids);
    CHECK(loaded.class_count == d.class_count);
    CHECK(loaded.provenance == d.provenance);
    std::remove(path.c_str());
}

TEST_CASE("batch iterator visits every index exactly once per epoch") {
    const Dataset d = synthetic_blobs(2, 13, 2, 6.0, 15);  // 26 samples
    BatchIterator it(d, 8, 3);
    for (int epoch = 0; epoch < 3; ++epoch) {
        const auto batches = it.epoch_batches(epoch);
        std::set<Eigen::Index> seen;
        std::size_t total = 0;
        for (const auto& batch : batches) {
            CHECK(batch.size() >= 2);
            total += batch.size();
            seen.insert(batch.begin(), batch.end());
        }
        CHECK(total == 26);
        CHECK(seen.size() == 26);
    }
    // 26 = 3*8 + 2: trailing batch has size 2 and is retained.
    CHECK(it.epoch_batches(0).size() == 4);

    // 25 = 3*8 + 1: trailing singleton dropped.
    const Dataset odd = synthetic_blobs(5, 5, 2, 4.0, 16);
    BatchIterator it2(odd, 8, 3);
    const auto batches = it2.epoch_batches(0);
    CHECK(batches.size() == 3);
    std::size_t total = 0;
    for (const auto& b : batches) total += b.size();
    CHECK(total == 24);
}
