#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bknet/data.hpp"
#include "bknet/train.hpp"

namespace bknet {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetConfig {
    std::string kind = "synthetic";  // synthetic | cifar10-binary | idx-images
    // synthetic
    int train_count = 3000;
    int test_count = 600;
    double noise = 0.6;
    // cifar10-binary
    std::vector<std::string> train_paths;
    std::vector<std::string> test_paths;
    std::array<float, 3> mean{0.4914f, 0.4822f, 0.4465f};
    std::array<float, 3> stddev{0.2470f, 0.2435f, 0.2616f};
    // idx-images
    std::string train_images, train_labels, test_images, test_labels;
    float idx_mean = 0.5f, idx_std = 0.5f;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "run";
    int threads = 0;  // 0 = serial deterministic

    DatasetConfig dataset;
    std::string arch = "toy-cnn";
    int classes = 10;

    int d_default = 5;
    std::map<int, int> d_per_layer;
    bool center = false;

    TrainConfig pretrain;
    TrainConfig retrain_cfg;
    TrainConfig finetune_cfg;

    double prune_s = 1.0;
    bool std_nonzero_only = false;

    bool bench_enabled = false;
    int bench_batch = 1;
    int bench_repetitions = 9;
};

// Parses and validates the JSON config; unknown presets, missing dataset
// paths or out-of-range numbers raise ConfigError.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& json_text);
std::string config_to_json(const PipelineConfig& cfg);

// Materializes the configured dataset (deterministic for a given config).
DataSplit load_dataset(const PipelineConfig& cfg);

}  // namespace bknet
