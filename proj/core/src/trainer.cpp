#include "usod/trainer.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace usod {

namespace fs = std::filesystem;

double poly_factor(int64_t iter, int64_t iter_max, double power) {
    if (iter >= iter_max) return 0.0;
    return 1.0 - std::pow(static_cast<double>(iter) / static_cast<double>(iter_max), power);
}

double warmup_factor(int64_t iter, int64_t warmup) {
    if (warmup <= 0 || iter >= warmup) return 1.0;
    return static_cast<double>(iter) / static_cast<double>(warmup);
}

double lr_at(int64_t iter, const TrainConfig& config) {
    return config.base_lr * warmup_factor(iter, config.resolved_warmup()) *
           poly_factor(iter, config.iterations, config.poly_power);
}

namespace {

cv::Mat1d to_mat(const torch::Tensor& map) {
    auto t = map.detach().to(torch::kCPU, torch::kFloat64).squeeze().contiguous();
    cv::Mat1d out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
    std::memcpy(out.data, t.data_ptr<double>(), out.total() * sizeof(double));
    return out;
}

cv::Mat1d mask_mat(const cv::Mat& mask) {
    cv::Mat1d out;
    mask.convertTo(out, CV_64F);
    return out;
}

} // namespace

metrics::MetricReport evaluate_model(SaliencyNet& model, const std::vector<data::Sample>& samples, EvalHead head,
                                     int64_t batch_size) {
    const bool was_training = model->is_training();
    model->eval();
    torch::NoGradGuard no_grad;
    std::vector<metrics::ImageMetrics> images;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(samples.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<data::Sample> chunk(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                        samples.begin() + static_cast<std::ptrdiff_t>(end));
        auto batch = data::make_batch(chunk);
        auto out = model->forward(batch.images);
        torch::Tensor logits;
        switch (head) {
        case EvalHead::Final: logits = out.final_logits; break;
        case EvalHead::S1: logits = out.side[0]; break;
        case EvalHead::R3:
            if (out.refined.empty()) throw StateError("evaluate_model: the model has no refinement heads");
            logits = out.refined.back();
            break;
        }
        auto prob = torch::sigmoid(resize_like(logits, batch.masks));
        for (std::size_t i = 0; i < chunk.size(); ++i)
            images.push_back(metrics::evaluate_pair(chunk[i].name, to_mat(prob[static_cast<int64_t>(i)]),
                                                    mask_mat(chunk[i].mask)));
    }
    if (was_training) model->train();
    return metrics::MetricReport::from_images(std::move(images));
}

Trainer::Trainer(ExperimentConfig config, std::vector<data::Sample> train, std::vector<data::Sample> holdout)
    : config_(std::move(config)), train_(std::move(train)), holdout_(std::move(holdout)) {
    config_.validate();
    if (train_.empty()) throw InputError("trainer: empty training set");
    torch::manual_seed(config_.train.seed);
    model_ = SaliencyNet(config_.model);
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(model_->backbone_parameters());
    groups.emplace_back(model_->decoder_parameters());
    optimizer_ = std::make_unique<torch::optim::Adam>(groups, torch::optim::AdamOptions(config_.train.base_lr));
    sampler_.seed(config_.train.seed);
    order_.resize(train_.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), sampler_);
}

void Trainer::apply_lr() {
    const double lr = lr_at(iteration_, config_.train);
    auto& groups = optimizer_->param_groups();
    static_cast<torch::optim::AdamOptions&>(groups[0].options()).lr(lr * config_.train.backbone_lr_mult);
    static_cast<torch::optim::AdamOptions&>(groups[1].options()).lr(lr);
}

data::Batch Trainer::next_batch() {
    std::vector<data::Sample> picked;
    const int64_t n = std::min<int64_t>(config_.train.batch_size, static_cast<int64_t>(train_.size()));
    for (int64_t i = 0; i < n; ++i) {
        if (cursor_ >= order_.size()) {
            cursor_ = 0;
            ++epoch_;
            std::shuffle(order_.begin(), order_.end(), sampler_);
        }
        const std::size_t idx = order_[cursor_++];
        if (config_.data.augment) {
            // record seed = base + index, offset per epoch so each pass sees a fresh draw
            const uint64_t seed = config_.train.seed + idx + static_cast<uint64_t>(epoch_) * train_.size();
            picked.push_back(data::augment(train_[idx], seed));
        } else {
            picked.push_back(train_[idx]);
        }
    }
    return data::make_batch(picked);
}

LossReport Trainer::step(const data::Batch& batch) {
    model_->train();
    apply_lr();
    optimizer_->zero_grad();
    ForwardOptions options;
    options.partition_salt = static_cast<uint64_t>(iteration_);
    auto fail = [&](const std::string& what) {
        std::string dump;
        try {
            fs::create_directories(config_.paths.output_dir);
            dump = (fs::path(config_.paths.output_dir) / "nonfinite_batch.pt").string();
            torch::save(std::vector<torch::Tensor>{batch.images, batch.masks}, dump);
        } catch (const std::exception&) {
            dump = "<dump failed>";
        }
        std::ostringstream msg;
        msg << "non-finite values at iteration " << iteration_ << " (" << what << ") samples:";
        for (const auto& name : batch.names) msg << ' ' << name;
        msg << "; batch written to " << dump;
        throw NonFiniteError(msg.str());
    };
    LossReport report;
    try {
        auto out = model_->forward(batch.images, options);
        HeadSet heads{out.side, out.refined};
        report = total_loss(heads, batch.masks, config_.loss);
    } catch (const NonFiniteError& e) {
        fail(e.what());
    }
    if (!std::isfinite(report.total_value())) {
        std::ostringstream terms;
        for (const auto& t : report.terms) terms << t.kind << '[' << t.head << "]=" << t.value.item<double>() << ' ';
        fail(terms.str());
    }
    report.total.backward();
    if (config_.train.grad_clip > 0)
        torch::nn::utils::clip_grad_norm_(model_->parameters(), config_.train.grad_clip);
    optimizer_->step();
    ++iteration_;
    return report;
}

void Trainer::save_checkpoint(const std::string& path) const {
    torch::serialize::OutputArchive archive;
    torch::serialize::OutputArchive model_archive, optim_archive;
    model_->save(model_archive);
    optimizer_->save(optim_archive);
    archive.write("model", model_archive);
    archive.write("optimizer", optim_archive);
    archive.write("config_hash", c10::IValue(config_.hash()));
    archive.write("config_text", c10::IValue(config_.to_text()));
    archive.write("iteration", c10::IValue(iteration_));
    archive.write("epoch", c10::IValue(epoch_));
    archive.write("cursor", c10::IValue(static_cast<int64_t>(cursor_)));
    archive.write("best_weighted_f", c10::IValue(best_weighted_f_));
    archive.write("best_iteration", c10::IValue(best_iteration_));
    std::ostringstream sampler;
    sampler << sampler_;
    archive.write("sampler_state", c10::IValue(sampler.str()));
    std::vector<int64_t> order(order_.begin(), order_.end());
    archive.write("order", torch::tensor(order, torch::kInt64));
    archive.write("torch_rng", at::detail::getDefaultCPUGenerator().get_state());
    archive.save_to(path);
}

namespace {

std::string read_hash(torch::serialize::InputArchive& archive) {
    c10::IValue v;
    archive.read("config_hash", v);
    return v.toStringRef();
}

void check_hash(const std::string& stored, const ExperimentConfig& config, const std::string& path) {
    if (stored != config.hash())
        throw ConfigError("checkpoint '" + path + "' was written with config hash " + stored +
                          " but the current config hashes to " + config.hash());
}

} // namespace

void Trainer::resume(const std::string& checkpoint) {
    torch::serialize::InputArchive archive;
    archive.load_from(checkpoint);
    check_hash(read_hash(archive), config_, checkpoint);
    torch::serialize::InputArchive model_archive, optim_archive;
    archive.read("model", model_archive);
    archive.read("optimizer", optim_archive);
    model_->load(model_archive);
    optimizer_->load(optim_archive);
    c10::IValue v;
    archive.read("iteration", v);
    iteration_ = v.toInt();
    archive.read("epoch", v);
    epoch_ = v.toInt();
    archive.read("cursor", v);
    cursor_ = static_cast<std::size_t>(v.toInt());
    archive.read("best_weighted_f", v);
    best_weighted_f_ = v.toDouble();
    archive.read("best_iteration", v);
    best_iteration_ = v.toInt();
    archive.read("sampler_state", v);
    std::istringstream sampler(v.toStringRef());
    sampler >> sampler_;
    torch::Tensor order;
    archive.read("order", order);
    order_.assign(order.data_ptr<int64_t>(), order.data_ptr<int64_t>() + order.numel());
    torch::Tensor rng;
    archive.read("torch_rng", rng);
    auto generator = at::detail::getDefaultCPUGenerator();
    generator.set_state(rng);
}

TrainResult Trainer::run(bool write_files, int64_t until) {
    TrainResult result;
    const fs::path out_dir(config_.paths.output_dir);
    std::ofstream log;
    if (write_files) {
        fs::create_directories(out_dir);
        config_.save((out_dir / "config.txt").string());
        log.open(out_dir / "train_log.jsonl", iteration_ > 0 ? std::ios::app : std::ios::trunc);
    }
    const auto& eval_set = holdout_.empty() ? train_ : holdout_;
    const int64_t total = config_.train.iterations;
    const int64_t stop = until > 0 ? std::min(until, total) : total;
    while (iteration_ < stop) {
        const double lr = lr_at(iteration_, config_.train);
        auto batch = next_batch();
        auto report = step(batch);
        result.loss_trace.push_back(report.total_value());
        if (log.is_open() && (iteration_ % config_.train.log_every == 0 || iteration_ == stop)) {
            nlohmann::json line{{"iter", iteration_}, {"lr", lr}, {"total", report.total_value()}};
            for (const auto& t : report.terms) line["terms"][t.kind + ":" + t.head] = t.value.item<double>();
            log << line.dump() << '\n';
        }
        const bool eval_now = (config_.train.eval_every > 0 && iteration_ % config_.train.eval_every == 0) ||
                              iteration_ == stop;
        if (eval_now) {
            const auto report_eval = evaluate_model(model_, eval_set);
            const double wf = report_eval.aggregate.weighted_f;
            if (log.is_open())
                log << nlohmann::json{{"iter", iteration_}, {"eval", report_eval.to_json()["aggregate"]},
                                      {"split", holdout_.empty() ? "train" : "holdout"}}
                           .dump()
                    << '\n';
            if (wf > best_weighted_f_) {
                best_weighted_f_ = wf;
                best_iteration_ = iteration_;
                if (write_files) {
                    result.best_checkpoint = (out_dir / "best.pt").string();
                    save_checkpoint(result.best_checkpoint);
                }
            }
        }
    }
    if (write_files) {
        result.last_checkpoint = (out_dir / "last.pt").string();
        save_checkpoint(result.last_checkpoint);
        if (result.best_checkpoint.empty() && fs::exists(out_dir / "best.pt"))
            result.best_checkpoint = (out_dir / "best.pt").string();
    }
    result.best_weighted_f = best_weighted_f_;
    result.best_iteration = best_iteration_;
    result.iterations_done = iteration_;
    return result;
}

std::pair<std::vector<data::Sample>, std::vector<data::Sample>> load_experiment_data(const ExperimentConfig& config) {
    const auto& d = config.data;
    std::vector<data::Sample> train, holdout;
    if (d.source == "synthetic") {
        data::SynthSpec spec;
        spec.size = d.resolution;
        spec.seed = d.synth_seed;
        train = data::synth_generate(spec, d.synth_count);
        spec.seed = d.synth_seed + static_cast<uint64_t>(d.synth_count);
        holdout = data::synth_generate(spec, d.holdout_count);
        for (auto& s : holdout) s.name = "holdout" + s.name.substr(s.name.find('_'));
    } else {
        for (const auto& r : data::load_manifest(config.paths.train_manifest, "train"))
            train.push_back(data::read_sample(r, d.resolution));
        if (!config.paths.holdout_manifest.empty())
            for (const auto& r : data::load_manifest(config.paths.holdout_manifest, "holdout"))
                holdout.push_back(data::read_sample(r, d.resolution));
    }
    return {std::move(train), std::move(holdout)};
}

SaliencyNet load_model(const ExperimentConfig& config, const std::string& checkpoint) {
    config.validate();
    torch::serialize::InputArchive archive;
    archive.load_from(checkpoint);
    check_hash(read_hash(archive), config, checkpoint);
    SaliencyNet model(config.model);
    torch::serialize::InputArchive model_archive;
    archive.read("model", model_archive);
    model->load(model_archive);
    model->eval();
    return model;
}

} // namespace usod
