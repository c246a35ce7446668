#pragma once

#include "usod/data.hpp"
#include "usod/losses.hpp"
#include "usod/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace usod {

struct TrainConfig {
    int64_t batch_size = 4;
    int64_t iterations = 300;      ///< iter_max
    double base_lr = 1e-3;
    double backbone_lr_mult = 0.1;
    double poly_power = 0.9;
    int64_t warmup = -1;           ///< -1: 5% of iterations
    uint64_t seed = 0;
    double grad_clip = 0.0;        ///< 0 disables clipping
    int64_t eval_every = 100;      ///< 0 evaluates only at the end
    int64_t log_every = 1;

    int64_t resolved_warmup() const;
    void validate() const;
};

struct DataConfig {
    std::string source = "synthetic"; ///< synthetic | manifest
    int resolution = 64;
    int synth_count = 16;
    int holdout_count = 0;            ///< synthetic holdout drawn after the training seeds
    uint64_t synth_seed = 0;
    bool augment = false;

    void validate() const;
};

struct PathConfig {
    std::string train_manifest;
    std::string holdout_manifest;
    std::string output_dir = "runs/default";
};

/// Everything one experiment needs, stored as flat `dotted.key = value` lines.
struct ExperimentConfig {
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    DataConfig data;
    PathConfig paths;

    void validate() const;

    /// Sorted `key = value` lines covering every schema key.
    std::string to_text() const;
    /// 16 hex digits of FNV-1a over the canonical text, excluding paths.* keys.
    std::string hash() const;
    std::map<std::string, std::string> to_map() const;

    /// Applies `key=value` overrides on top of the current values. Unknown keys and malformed
    /// values raise ConfigError naming the key.
    void set(const std::string& key, const std::string& value);

    static ExperimentConfig parse(const std::string& text, const std::string& origin = "<string>");
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    /// Every key accepted by the schema, sorted.
    static std::vector<std::string> keys();
};

/// 64-bit FNV-1a.
uint64_t fnv1a(const std::string& text);

} // namespace usod
