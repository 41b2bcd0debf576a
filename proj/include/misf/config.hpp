#pragma once

#include <cstdint>
#include <string>

#include "misf/losses.hpp"
#include "misf/mask.hpp"

namespace misf {

// Fully resolved run configuration: training hyperparameters, loss weights,
// data source and model selection. Serializes to the same line-oriented
// `key = value` text it is parsed from; the hash covers the resolved form.
struct RunConfig {
    std::string variant = "misf";
    std::string preset = "misf-tiny";
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 0;  // 0 = preset default
    int64_t max_iters = 2000;
    uint64_t seed = 0;
    int64_t checkpoint_every = 500;
    std::string precision = "f32";
    LossWeights weights;
    std::string manifest;     // empty = procedural fixture data
    int fixture_count = 16;
    std::string bucket = "20-40";
    uint64_t fx_seed = 7;     // frozen feature extractor weights
    bool masked_l1 = false;
};

// One `key = value` per line; '#' comments; unknown keys rejected.
RunConfig parse_run_config(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);
uint64_t fnv1a(const std::string& s);

}  // namespace misf
