#pragma once

#include "flowcert/flow_engine.hpp"
#include "flowcert/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowcert {

enum class Split { train, test };

// Inputs are one example per row. Binary datasets carry labels in {-1,+1};
// otherwise labels are class ids 0..num_classes-1.
struct LabeledDataset {
    Matrix inputs;
    std::vector<int> labels;
    bool binary = true;
    std::size_t num_classes = 2;
    Split split = Split::train;
    std::vector<std::pair<std::string, std::string>> manifest;

    std::size_t m() const { return labels.size(); }
    std::size_t input_dim() const { return static_cast<std::size_t>(inputs.cols()); }
    void validate() const;
};

struct ToyConfig {
    std::uint64_t seed = 0;
    std::size_t clusters = 8;
    std::size_t dim = 5;
    std::size_t cluster_size = 5000;
    double variance = 0.1;
    std::size_t train_size = 500;
    // Label each point by its cluster index instead of the binary split.
    bool multiclass = false;
};

// Gaussian clusters projected to the unit sphere, split uniformly at random
// into train/test. The first half of the sampled means are labelled -1.
std::pair<LabeledDataset, LabeledDataset> gaussian_clusters(const ToyConfig& config);

// MNIST-style IDX files (ubyte images 0x00000803, labels 0x00000801).
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Writes inputs in [0,1] as ubyte pixels (rounded) with the given image shape.
void write_idx(const LabeledDataset& data, std::size_t rows, std::size_t cols,
               const std::filesystem::path& images, const std::filesystem::path& labels);

// First `count` examples (or all of them, when count is 0 or too large).
LabeledDataset head(const LabeledDataset& data, std::size_t count);
LabeledDataset select_rows(const LabeledDataset& data, std::span<const std::size_t> rows);

// Labels as class ids (binary -1/+1 become 0/1).
std::vector<int> class_ids(const LabeledDataset& data);

// FNV-1a over the raw input and label bytes.
std::uint64_t content_hash(const LabeledDataset& data);

// key=value lines, including the content hash.
std::string manifest_text(const LabeledDataset& data);

struct BatchPlan {
    BatchSchedule schedule;
    std::vector<std::vector<std::size_t>> batches;  // indexed by batch_id
    std::size_t batches_per_epoch = 0;
};

// One segment of length `segment_duration` per batch; epochs are reshuffled
// with `seed`. A trailing partial batch is kept so every epoch covers the
// whole index set.
BatchPlan batch_schedule(const LabeledDataset& data, std::size_t batch_size,
                         double segment_duration, std::size_t total_segments, std::uint64_t seed);

}  // namespace flowcert
