#pragma once

#include "usod/config.hpp"
#include "usod/data.hpp"
#include "usod/metrics.hpp"
#include "usod/model.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace usod {

/// 1 - (iter / iter_max)^power, 0 from iter_max on.
double poly_factor(int64_t iter, int64_t iter_max, double power);
/// iter / warmup during warmup, 1 afterwards (and always 1 when warmup is 0).
double warmup_factor(int64_t iter, int64_t warmup);
/// Base-group learning rate: base_lr * warmup_factor * poly_factor. The backbone group uses
/// this times backbone_lr_mult.
double lr_at(int64_t iter, const TrainConfig& config);

/// Which prediction an evaluation scores.
enum class EvalHead { Final, S1, R3 };

/// Scores one head of the model on samples (eval mode, no grad, train-mode forward so refined
/// heads sit at feature resolution; every head is resized to the mask size before scoring).
metrics::MetricReport evaluate_model(SaliencyNet& model, const std::vector<data::Sample>& samples,
                                     EvalHead head = EvalHead::Final, int64_t batch_size = 8);

struct TrainResult {
    std::vector<double> loss_trace;      ///< total loss per completed iteration of this run
    double best_weighted_f = -1.0;
    int64_t best_iteration = -1;
    int64_t iterations_done = 0;
    std::string last_checkpoint;
    std::string best_checkpoint;
};

/// Adam with a backbone parameter group, warmup * poly schedule, multilevel supervision,
/// JSON-lines logging, periodic holdout evaluation and resumable checkpoints.
class Trainer {
public:
    Trainer(ExperimentConfig config, std::vector<data::Sample> train, std::vector<data::Sample> holdout = {});

    /// Restores parameters, optimizer, iteration counter and RNG streams. A checkpoint written
    /// under a different config hash raises ConfigError quoting both hashes.
    void resume(const std::string& checkpoint);

    /// Trains until train.iterations, or until iteration `until` when it is positive and smaller
    /// (the schedule still spans train.iterations). Non-finite losses write the offending batch
    /// next to the log and raise NonFiniteError. Checkpoint paths are empty when `write_files` is false.
    TrainResult run(bool write_files = true, int64_t until = -1);

    /// One optimization step on a batch; returns the loss report.
    LossReport step(const data::Batch& batch);

    void save_checkpoint(const std::string& path) const;

    SaliencyNet& model() { return model_; }
    torch::optim::Adam& optimizer() { return *optimizer_; }
    const ExperimentConfig& config() const { return config_; }
    int64_t iteration() const { return iteration_; }

private:
    data::Batch next_batch();
    void apply_lr();

    ExperimentConfig config_;
    std::vector<data::Sample> train_;
    std::vector<data::Sample> holdout_;
    SaliencyNet model_{nullptr};
    std::unique_ptr<torch::optim::Adam> optimizer_;
    int64_t iteration_ = 0;
    std::mt19937_64 sampler_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    int64_t epoch_ = 0;
    double best_weighted_f_ = -1.0;
    int64_t best_iteration_ = -1;
};

/// Loads or generates the train and holdout samples described by the data section.
std::pair<std::vector<data::Sample>, std::vector<data::Sample>> load_experiment_data(const ExperimentConfig& config);

/// Loads a checkpoint's parameters into a freshly built model (optimizer state ignored).
/// Raises ConfigError when the stored config hash differs.
SaliencyNet load_model(const ExperimentConfig& config, const std::string& checkpoint);

} // namespace usod
