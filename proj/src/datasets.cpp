#include "flowcert/datasets.hpp"

#include "flowcert/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace flowcert {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
    if (bytes.size() < offset + 4) {
        throw ConfigError("truncated IDX header in " + path.string());
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b.data(), 4);
}

void shuffle(std::vector<std::size_t>& idx, NormalStream& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.below(i)]);
    }
}

std::string hex(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << v;
    return s.str();
}

}  // namespace

void LabeledDataset::validate() const {
    if (labels.empty()) {
        throw std::invalid_argument("dataset is empty");
    }
    if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
        throw std::invalid_argument("dataset inputs and labels disagree");
    }
    for (int y : labels) {
        const bool ok = binary ? (y == -1 || y == 1)
                               : (y >= 0 && static_cast<std::size_t>(y) < num_classes);
        if (!ok) {
            throw std::invalid_argument("label outside the dataset's label set");
        }
    }
}

std::pair<LabeledDataset, LabeledDataset> gaussian_clusters(const ToyConfig& config) {
    if (config.clusters < 2 || config.dim == 0 || config.cluster_size == 0) {
        throw ConfigError("toy data needs at least two clusters and positive sizes");
    }
    const std::size_t total = config.clusters * config.cluster_size;
    if (config.train_size == 0 || config.train_size >= total) {
        throw ConfigError("toy train size must be in [1, total points)");
    }
    NormalStream rng(config.seed);
    const auto d = static_cast<Eigen::Index>(config.dim);
    Matrix means(static_cast<Eigen::Index>(config.clusters), d);
    for (Eigen::Index c = 0; c < means.rows(); ++c) {
        for (Eigen::Index j = 0; j < d; ++j) {
            means(c, j) = rng.next();
        }
    }
    const double sd = std::sqrt(config.variance);
    Matrix points(static_cast<Eigen::Index>(total), d);
    std::vector<int> labels(total);
    for (std::size_t c = 0; c < config.clusters; ++c) {
        const int label = config.multiclass ? static_cast<int>(c)
                                            : (c < config.clusters / 2 ? -1 : 1);
        for (std::size_t i = 0; i < config.cluster_size; ++i) {
            const auto row = static_cast<Eigen::Index>(c * config.cluster_size + i);
            for (Eigen::Index j = 0; j < d; ++j) {
                points(row, j) = means(static_cast<Eigen::Index>(c), j) + sd * rng.next();
            }
            points.row(row).normalize();
            labels[static_cast<std::size_t>(row)] = label;
        }
    }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);

    auto take = [&](std::size_t from, std::size_t to, Split split) {
        LabeledDataset out;
        out.inputs.resize(static_cast<Eigen::Index>(to - from), d);
        out.labels.resize(to - from);
        for (std::size_t i = from; i < to; ++i) {
            out.inputs.row(static_cast<Eigen::Index>(i - from)) =
                points.row(static_cast<Eigen::Index>(order[i]));
            out.labels[i - from] = labels[order[i]];
        }
        out.binary = !config.multiclass;
        out.num_classes = config.multiclass ? config.clusters : 2;
        out.split = split;
        out.manifest = {
            {"source", "gaussian_clusters"},
            {"split", split == Split::train ? "train" : "test"},
            {"seed", std::to_string(config.seed)},
            {"rng", std::string(kRngVersion)},
            {"clusters", std::to_string(config.clusters)},
            {"dim", std::to_string(config.dim)},
            {"cluster_size", std::to_string(config.cluster_size)},
            {"variance", std::to_string(config.variance)},
            {"train_size", std::to_string(config.train_size)},
            {"labels", config.multiclass ? "cluster_index" : "first_half_negative"},
        };
        return out;
    };
    return {take(0, config.train_size, Split::train), take(config.train_size, total, Split::test)};
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    const std::vector<unsigned char> img = read_file(images);
    const std::vector<unsigned char> lab = read_file(labels);
    if (read_be32(img, 0, images) != kImageMagic) {
        throw ConfigError("bad IDX image magic in " + images.string());
    }
    if (read_be32(lab, 0, labels) != kLabelMagic) {
        throw ConfigError("bad IDX label magic in " + labels.string());
    }
    const std::size_t count = read_be32(img, 4, images);
    const std::size_t rows = read_be32(img, 8, images);
    const std::size_t cols = read_be32(img, 12, images);
    const std::size_t label_count = read_be32(lab, 4, labels);
    if (count != label_count) {
        throw ConfigError("IDX image and label counts differ");
    }
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels) {
        throw ConfigError("truncated IDX image payload in " + images.string());
    }
    if (lab.size() < 8 + count) {
        throw ConfigError("truncated IDX label payload in " + labels.string());
    }
    LabeledDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
    out.labels.resize(count);
    int max_label = 1;
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
                static_cast<double>(img[16 + i * pixels + p]) / 255.0;
        }
        out.labels[i] = lab[8 + i];
        max_label = std::max(max_label, out.labels[i]);
    }
    out.binary = false;
    out.num_classes = static_cast<std::size_t>(max_label) + 1;
    out.manifest = {{"source", "idx"}, {"images", images.string()}, {"labels", labels.string()}};
    return out;
}

void write_idx(const LabeledDataset& data, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels) {
    data.validate();
    if (data.input_dim() != rows * cols) {
        throw std::invalid_argument("image shape does not match the input dimension");
    }
    std::ofstream img(images, std::ios::binary);
    std::ofstream lab(labels, std::ios::binary);
    if (!img || !lab) {
        throw ConfigError("cannot open IDX output files");
    }
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(data.m()));
    write_be32(img, static_cast<std::uint32_t>(rows));
    write_be32(img, static_cast<std::uint32_t>(cols));
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i) {
        for (Eigen::Index p = 0; p < data.inputs.cols(); ++p) {
            const double v = std::clamp(data.inputs(i, p), 0.0, 1.0);
            img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
    }
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(data.m()));
    for (int y : class_ids(data)) {
        lab.put(static_cast<char>(static_cast<unsigned char>(y)));
    }
}

LabeledDataset head(const LabeledDataset& data, std::size_t count) {
    if (count == 0 || count >= data.m()) {
        return data;
    }
    std::vector<std::size_t> rows(count);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    LabeledDataset out = select_rows(data, rows);
    out.manifest.emplace_back("subset_head", std::to_string(count));
    return out;
}

LabeledDataset select_rows(const LabeledDataset& data, std::span<const std::size_t> rows) {
    LabeledDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), data.inputs.cols());
    out.labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.inputs.row(static_cast<Eigen::Index>(i)) =
            data.inputs.row(static_cast<Eigen::Index>(rows[i]));
        out.labels[i] = data.labels[rows[i]];
    }
    out.binary = data.binary;
    out.num_classes = data.num_classes;
    out.split = data.split;
    out.manifest = data.manifest;
    return out;
}

std::vector<int> class_ids(const LabeledDataset& data) {
    if (!data.binary) {
        return data.labels;
    }
    std::vector<int> out(data.labels.size());
    std::transform(data.labels.begin(), data.labels.end(), out.begin(),
                   [](int y) { return y > 0 ? 1 : 0; });
    return out;
}

std::uint64_t content_hash(const LabeledDataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* ptr, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(ptr);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t rows = static_cast<std::uint64_t>(data.inputs.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(data.inputs.cols());
    mix(&rows, sizeof rows);
    mix(&cols, sizeof cols);
    mix(data.inputs.data(), static_cast<std::size_t>(data.inputs.size()) * sizeof(double));
    mix(data.labels.data(), data.labels.size() * sizeof(int));
    return h;
}

std::string manifest_text(const LabeledDataset& data) {
    std::ostringstream out;
    for (const auto& [key, value] : data.manifest) {
        out << key << '=' << value << '\n';
    }
    out << "m=" << data.m() << '\n';
    out << "input_dim=" << data.input_dim() << '\n';
    out << "content_hash=" << hex(content_hash(data)) << '\n';
    return out.str();
}

BatchPlan batch_schedule(const LabeledDataset& data, std::size_t batch_size,
                         double segment_duration, std::size_t total_segments, std::uint64_t seed) {
    const std::size_t m = data.m();
    if (batch_size == 0 || batch_size > m) {
        throw ConfigError("batch size must be in [1, m]");
    }
    if (!(segment_duration > 0.0) || total_segments == 0) {
        throw ConfigError("batch schedule needs a positive duration and segment count");
    }
    BatchPlan plan;
    plan.batches_per_epoch = (m + batch_size - 1) / batch_size;
    NormalStream rng(seed);
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    plan.schedule.segments.reserve(total_segments);
    plan.batches.reserve(total_segments);
    for (std::size_t k = 0; k < total_segments; ++k) {
        const std::size_t slot = k % plan.batches_per_epoch;
        if (slot == 0 && plan.batches_per_epoch > 1) {
            shuffle(order, rng);
        }
        const std::size_t from = slot * batch_size;
        const std::size_t to = std::min(m, from + batch_size);
        plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(from),
                                  order.begin() + static_cast<std::ptrdiff_t>(to));
        plan.schedule.segments.push_back({static_cast<double>(k) * segment_duration,
                                          static_cast<double>(k + 1) * segment_duration, k});
    }
    return plan;
}

}  // namespace flowcert
