#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowcert/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <unistd.h>

using namespace flowcert;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("flowcert_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                      std::size_t payload, unsigned char magic_type = 0x03) {
    std::vector<unsigned char> b = {0, 0, 0x08, magic_type};
    for (std::uint32_t v : {count, rows, cols}) {
        b.insert(b.end(), {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                           static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)});
    }
    for (std::size_t i = 0; i < payload; ++i) {
        b.push_back(static_cast<unsigned char>(i % 256));
    }
    return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t count, std::vector<unsigned char> ys) {
    std::vector<unsigned char> b = {0, 0, 0x08, 0x01, static_cast<unsigned char>(count >> 24),
                                    static_cast<unsigned char>(count >> 16),
                                    static_cast<unsigned char>(count >> 8),
                                    static_cast<unsigned char>(count)};
    b.insert(b.end(), ys.begin(), ys.end());
    return b;
}

}  // namespace

TEST_CASE("toy clusters at the reference size") {
    const auto [train, test] = gaussian_clusters(ToyConfig{});
    CHECK(train.m() == 500);
    CHECK(test.m() == 39500);
    CHECK(train.input_dim() == 5);
    CHECK(train.split == Split::train);
    CHECK(test.split == Split::test);

    double worst = 0.0;
    for (const auto* d : {&train, &test}) {
        for (Eigen::Index i = 0; i < d->inputs.rows(); ++i) {
            worst = std::max(worst, std::abs(d->inputs.row(i).norm() - 1.0));
        }
    }
    CHECK(worst < 1e-12);

    const auto neg = std::count(train.labels.begin(), train.labels.end(), -1) +
                     std::count(test.labels.begin(), test.labels.end(), -1);
    CHECK(neg == 20000);
    train.validate();
    test.validate();

    // The constant predictor is right on about half of the test set.
    const double plus = static_cast<double>(std::count(test.labels.begin(), test.labels.end(), 1)) /
                        static_cast<double>(test.m());
    CHECK(std::abs(plus - 0.5) < 0.02);
}

TEST_CASE("toy clusters are reproducible and seed dependent") {
    ToyConfig c;
    c.cluster_size = 200;
    c.train_size = 100;
    const auto a = gaussian_clusters(c);
    const auto b = gaussian_clusters(c);
    CHECK(a.first.inputs == b.first.inputs);
    CHECK(a.second.labels == b.second.labels);
    CHECK(content_hash(a.first) == content_hash(b.first));
    c.seed = 1;
    CHECK(content_hash(gaussian_clusters(c).first) != content_hash(a.first));
}

TEST_CASE("multiclass toy labels are cluster indices") {
    ToyConfig c;
    c.cluster_size = 100;
    c.train_size = 200;
    c.multiclass = true;
    const auto [train, test] = gaussian_clusters(c);
    CHECK(!train.binary);
    CHECK(train.num_classes == 8);
    std::vector<int> counts(8, 0);
    for (const auto* d : {&train, &test}) {
        for (int y : d->labels) {
            counts[static_cast<std::size_t>(y)]++;
        }
    }
    CHECK(std::all_of(counts.begin(), counts.end(), [](int n) { return n == 100; }));
    CHECK(class_ids(train) == train.labels);
}

TEST_CASE("manifest records seed and hash") {
    ToyConfig c;
    c.cluster_size = 50;
    c.train_size = 20;
    c.seed = 42;
    const auto [train, test] = gaussian_clusters(c);
    const std::string text = manifest_text(train);
    CHECK(text.find("seed=42\n") != std::string::npos);
    CHECK(text.find("labels=first_half_negative\n") != std::string::npos);
    CHECK(text.find("content_hash=") != std::string::npos);
}

TEST_CASE("IDX parsing") {
    TempDir tmp;
    const fs::path img = tmp.path / "img", lab = tmp.path / "lab";

    SUBCASE("two 28x28 images") {
        write_bytes(img, idx_images(2, 28, 28, 1568));
        write_bytes(lab, idx_labels(2, {3, 7}));
        const LabeledDataset d = load_idx(img, lab);
        CHECK(d.m() == 2);
        CHECK(d.input_dim() == 784);
        CHECK(d.labels == std::vector<int>{3, 7});
        CHECK(d.inputs(0, 255) == 1.0);
        CHECK(d.inputs(0, 0) == 0.0);
        CHECK(d.inputs(0, 51) == doctest::Approx(0.2));
        CHECK(!d.binary);
    }
    SUBCASE("wrong magic") {
        write_bytes(img, idx_images(2, 28, 28, 1568, 0x02));
        write_bytes(lab, idx_labels(2, {3, 7}));
        CHECK_THROWS_AS(load_idx(img, lab), ConfigError);
    }
    SUBCASE("truncated payload") {
        write_bytes(img, idx_images(2, 28, 28, 1500));
        write_bytes(lab, idx_labels(2, {3, 7}));
        CHECK_THROWS_AS(load_idx(img, lab), ConfigError);
        write_bytes(img, {0, 0, 8});
        CHECK_THROWS_AS(load_idx(img, lab), ConfigError);
    }
    SUBCASE("count mismatch") {
        write_bytes(img, idx_images(2, 28, 28, 1568));
        write_bytes(lab, idx_labels(3, {3, 7, 1}));
        CHECK_THROWS_AS(load_idx(img, lab), ConfigError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS(load_idx(tmp.path / "nope", lab));
    }
}

TEST_CASE("IDX write then read is the identity") {
    TempDir tmp;
    LabeledDataset d;
    d.inputs.resize(3, 6);
    for (Eigen::Index i = 0; i < d.inputs.size(); ++i) {
        d.inputs.data()[i] = static_cast<double>((i * 37) % 256) / 255.0;
    }
    d.labels = {0, 9, 4};
    d.binary = false;
    d.num_classes = 10;
    write_idx(d, 2, 3, tmp.path / "i", tmp.path / "l");
    const LabeledDataset back = load_idx(tmp.path / "i", tmp.path / "l");
    CHECK(back.inputs == d.inputs);
    CHECK(back.labels == d.labels);
}

TEST_CASE("head and select_rows") {
    ToyConfig c;
    c.cluster_size = 10;
    c.train_size = 30;
    const auto train = gaussian_clusters(c).first;
    const LabeledDataset h = head(train, 5);
    CHECK(h.m() == 5);
    CHECK(h.inputs == train.inputs.topRows(5));
    CHECK(head(train, 0).m() == 30);
    const std::vector<std::size_t> rows = {4, 1};
    const LabeledDataset s = select_rows(train, rows);
    CHECK(s.labels == std::vector<int>{train.labels[4], train.labels[1]});
}

TEST_CASE("batch schedules") {
    ToyConfig c;
    c.cluster_size = 100;
    c.train_size = 500;
    const auto train = gaussian_clusters(c).first;

    SUBCASE("full batch degenerates to one repeated batch") {
        const BatchPlan p = batch_schedule(train, 500, 0.01, 4, 3);
        CHECK(p.batches_per_epoch == 1);
        for (const auto& b : p.batches) {
            CHECK(b.size() == 500);
            CHECK(b == p.batches.front());
        }
    }
    SUBCASE("segments tile the time axis") {
        const BatchPlan p = batch_schedule(train, 100, 0.002, 37, 3);
        CHECK(p.schedule.segments.size() == 37);
        CHECK(p.schedule.span() == doctest::Approx(37 * 0.002));
        p.schedule.validate(0.002);
        for (std::size_t k = 0; k < 37; ++k) {
            CHECK(p.schedule.segments[k].batch_id == k);
        }
    }
    SUBCASE("each epoch partitions the data") {
        const BatchPlan p = batch_schedule(train, 120, 1.0, 15, 5);
        CHECK(p.batches_per_epoch == 5);
        for (std::size_t e = 0; e < 3; ++e) {
            std::set<std::size_t> seen;
            std::size_t total = 0;
            for (std::size_t k = 0; k < 5; ++k) {
                const auto& b = p.batches[e * 5 + k];
                seen.insert(b.begin(), b.end());
                total += b.size();
            }
            CHECK(total == 500);
            CHECK(seen.size() == 500);
        }
        CHECK(p.batches[0] != p.batches[5]);  // reshuffled
        CHECK(batch_schedule(train, 120, 1.0, 15, 5).batches == p.batches);
    }
    SUBCASE("bad sizes") {
        CHECK_THROWS_AS(batch_schedule(train, 501, 0.1, 3, 0), ConfigError);
        CHECK_THROWS_AS(batch_schedule(train, 0, 0.1, 3, 0), ConfigError);
    }
}
