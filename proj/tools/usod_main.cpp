// usod: train, infer, eval, bench-adp and synth entry points.
//
// Exit codes: 0 success, 1 partial result (skipped or unpaired files), 2 configuration or
// input error, 3 non-finite loss during training.
//
// Uncertainty maps written by `infer --dump-uncertainty` store U * 2 * 255 as 8-bit PNG, since
// U never exceeds 0.5. `bench-adp --corpus` reads them back with the inverse scaling.

#include "usod/adp.hpp"
#include "usod/config.hpp"
#include "usod/data.hpp"
#include "usod/errors.hpp"
#include "usod/metrics.hpp"
#include "usod/tensor_ops.hpp"
#include "usod/trainer.hpp"

#include <CLI11.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace usod;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;

bool is_image(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw InputError("not a directory: '" + dir + "'");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             std::optional<uint64_t> seed) {
    if (!fs::exists(path)) throw ConfigError("config file not found: '" + path + "'");
    auto config = ExperimentConfig::load(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.train.seed = *seed;
    config.validate();
    return config;
}

struct TrainArgs {
    std::string config, resume;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
    auto config = load_config(a.config, a.overrides, a.seed);
    torch::manual_seed(config.train.seed);
    auto [train, holdout] = load_experiment_data(config);
    Trainer trainer(config, std::move(train), std::move(holdout));
    if (!a.resume.empty()) trainer.resume(a.resume);
    const auto result = trainer.run();
    std::cout << "iterations " << result.iterations_done << "\n"
              << "best_weighted_f " << result.best_weighted_f << " at " << result.best_iteration << "\n"
              << "checkpoint " << result.last_checkpoint << "\n";
    return kExitOk;
}

struct InferArgs {
    std::string config, checkpoint, input, output, mode = "infer", stage_factors;
    std::vector<std::string> overrides;
    std::optional<uint64_t> seed;
    bool dump_uncertainty = false;
};

int cmd_infer(const InferArgs& a) {
    auto config = load_config(a.config, a.overrides, a.seed);
    auto model = load_model(config, a.checkpoint);
    ForwardOptions options;
    options.mode = parse_run_mode(a.mode);
    options.stage_factors = a.stage_factors.empty() ? config.model.refine.stage_factors : parse_stage_factors(a.stage_factors);
    fs::create_directories(a.output);
    const int res = config.data.resolution;
    int skipped = 0, written = 0;
    torch::NoGradGuard no_grad;
    for (const auto& path : list_images(a.input)) {
        cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
        if (bgr.empty()) {
            std::cerr << "warning: cannot read '" << path.string() << "', skipped\n";
            ++skipped;
            continue;
        }
        data::Sample s;
        s.name = path.stem().string();
        cv::Mat rgb;
        cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
        rgb.convertTo(s.image, CV_32FC3, 1.0 / 255.0);
        cv::resize(s.image, s.image, {res, res}, 0, 0, cv::INTER_LINEAR);
        auto image = data::image_to_tensor(s.image).unsqueeze(0);
        auto out = model->forward(image, options);
        auto prob = torch::sigmoid(resize_bilinear(out.final_logits, bgr.rows, bgr.cols));
        cv::imwrite((fs::path(a.output) / (s.name + ".png")).string(), data::tensor_to_u8(prob[0]));
        if (a.dump_uncertainty)
            for (std::size_t j = 0; j < out.uncertainty.size(); ++j)
                cv::imwrite((fs::path(a.output) / (s.name + "_u" + std::to_string(j + 1) + ".png")).string(),
                            data::tensor_to_u8(out.uncertainty[j].values[0], 2.0));
        ++written;
    }
    std::cout << "wrote " << written << " predictions, skipped " << skipped << "\n";
    return skipped > 0 ? kExitPartial : kExitOk;
}

struct EvalArgs {
    std::string pred, gt, out, subset, csv, curves;
};

cv::Mat1d read_gray(const fs::path& p) {
    cv::Mat g = cv::imread(p.string(), cv::IMREAD_GRAYSCALE);
    if (g.empty()) throw InputError("cannot read '" + p.string() + "'");
    cv::Mat1d out;
    g.convertTo(out, CV_64F, 1.0 / 255.0);
    return out;
}

int cmd_eval(const EvalArgs& a) {
    std::map<std::string, fs::path> preds, gts;
    for (const auto& p : list_images(a.pred)) preds[p.stem().string()] = p;
    for (const auto& p : list_images(a.gt)) gts[p.stem().string()] = p;
    std::set<std::string> subset;
    if (!a.subset.empty()) {
        std::ifstream in(a.subset);
        if (!in) throw InputError("cannot read subset list '" + a.subset + "'");
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) subset.insert(fs::path(line).stem().string());
        }
    }
    int unpaired = 0;
    for (const auto& [stem, p] : preds)
        if (!gts.count(stem)) {
            std::cerr << "unpaired prediction: " << p.string() << "\n";
            ++unpaired;
        }
    for (const auto& [stem, p] : gts)
        if (!preds.count(stem)) {
            std::cerr << "unpaired ground truth: " << p.string() << "\n";
            ++unpaired;
        }
    std::vector<metrics::ImageMetrics> images;
    std::vector<cv::Mat1d> p_set, g_set;
    for (const auto& [stem, p] : preds) {
        if (!gts.count(stem) || (!subset.empty() && !subset.count(stem))) continue;
        auto pred = read_gray(p);
        cv::Mat g = cv::imread(gts[stem].string(), cv::IMREAD_GRAYSCALE);
        if (g.empty()) throw InputError("cannot read '" + gts[stem].string() + "'");
        cv::Mat1d gt = (g >= 128) / 255;
        if (pred.size() != gt.size()) cv::resize(pred, pred, gt.size(), 0, 0, cv::INTER_LINEAR);
        images.push_back(metrics::evaluate_pair(stem, pred, gt));
        p_set.push_back(pred);
        g_set.push_back(gt);
    }
    const auto report = metrics::MetricReport::from_images(std::move(images));
    {
        std::ofstream out(a.out);
        if (!out) throw InputError("cannot write '" + a.out + "'");
        out << report.to_json().dump(2) << "\n";
    }
    if (!a.csv.empty()) {
        std::ofstream out(a.csv);
        report.write_csv(out);
    }
    if (!a.curves.empty() && !p_set.empty()) {
        std::ofstream out(a.curves);
        metrics::write_curve_csv(out, metrics::dataset_curve(p_set, g_set));
    }
    const auto& m = report.aggregate;
    std::cout << "images " << report.images.size() << "  MAE " << m.mae << "  E " << m.e_mean << "  S " << m.s_measure
              << "  wF " << m.weighted_f << "\n";
    return unpaired > 0 ? kExitPartial : kExitOk;
}

struct BenchArgs {
    std::string corpus, out, thresholds = "0,0.2,1";
    int synthetic = 0, size = 64, channels = 64;
    int64_t min_size = 0;
    double occ_lo = 0.02, occ_hi = 0.05, random_prob = -1.0;
    std::optional<uint64_t> seed;
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + item + "' in list '" + text + "'");
        }
    }
    return out;
}

int cmd_bench_adp(const BenchArgs& a) {
    std::vector<std::pair<std::string, torch::Tensor>> corpus;
    if (!a.corpus.empty()) {
        for (const auto& p : list_images(a.corpus)) {
            cv::Mat g = cv::imread(p.string(), cv::IMREAD_GRAYSCALE);
            if (g.empty()) continue;
            cv::Mat1f u;
            g.convertTo(u, CV_32F, 1.0 / (2.0 * 255.0));
            corpus.emplace_back(p.stem().string(),
                                torch::from_blob(u.data, {u.rows, u.cols}, torch::kFloat32).clone());
        }
    } else if (a.synthetic > 0) {
        const auto maps = data::uncertainty_corpus(a.synthetic, a.size, a.occ_lo, a.occ_hi, a.seed.value_or(0));
        for (std::size_t i = 0; i < maps.size(); ++i) corpus.emplace_back("map_" + std::to_string(i), maps[i]);
    }
    if (corpus.empty()) throw ConfigError("bench-adp: empty corpus");
    std::vector<PartitionConfig> configs;
    for (double t : parse_list(a.thresholds)) {
        PartitionConfig c;
        c.p_threshold = t;
        c.min_size = a.min_size > 0 ? a.min_size : std::max<int64_t>(1, corpus.front().second.size(-2) / 32);
        configs.push_back(c);
    }
    if (a.random_prob >= 0) {
        PartitionConfig c = configs.front();
        c.mode = PartitionMode::RandomWindow;
        c.random_split_prob = a.random_prob;
        c.random_seed = a.seed.value_or(0);
        configs.push_back(c);
    }
    const auto rows = cost_compare(corpus, configs, a.channels);
    std::ofstream out(a.out);
    if (!out) throw InputError("cannot write '" + a.out + "'");
    write_cost_csv(out, rows);
    std::map<std::string, double> totals;
    for (const auto& r : rows) totals[r.mode + "@" + std::to_string(r.p_threshold)] += static_cast<double>(r.mac_count);
    for (const auto& [mode, mac] : totals) std::cout << mode << " total_mac " << mac << "\n";
    return kExitOk;
}

struct SynthArgs {
    std::string out;
    int count = 16, size = 64, uncertainty = 0;
    double occ_lo = 0.02, occ_hi = 0.05;
    std::optional<uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
    if (a.uncertainty > 0) {
        fs::create_directories(a.out);
        const auto maps = data::uncertainty_corpus(a.uncertainty, a.size, a.occ_lo, a.occ_hi, a.seed.value_or(0));
        for (std::size_t i = 0; i < maps.size(); ++i)
            cv::imwrite((fs::path(a.out) / ("u_" + std::to_string(i) + ".png")).string(), data::tensor_to_u8(maps[i], 2.0));
        std::cout << "wrote " << maps.size() << " uncertainty maps to " << a.out << "\n";
        return kExitOk;
    }
    data::SynthSpec spec;
    spec.size = a.size;
    spec.seed = a.seed.value_or(0);
    data::write_dataset(a.out, data::synth_generate(spec, a.count));
    std::cout << "wrote " << a.count << " samples to " << a.out << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"usod: uncertainty-guided salient object detection"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", train_args.config, "experiment config")->required();
    train->add_option("--resume", train_args.resume, "checkpoint to resume from");
    train->add_option("--set", train_args.overrides, "key=value override (repeatable)");
    train->add_option("--seed", train_args.seed, "overrides train.seed");

    InferArgs infer_args;
    auto* infer = app.add_subcommand("infer", "write saliency maps for a directory of images");
    infer->add_option("--config", infer_args.config)->required();
    infer->add_option("--checkpoint", infer_args.checkpoint)->required();
    infer->add_option("--input", infer_args.input)->required();
    infer->add_option("--output", infer_args.output)->required();
    infer->add_option("--mode", infer_args.mode, "train|infer")->check(CLI::IsMember({"train", "infer"}));
    infer->add_option("--stage-factors", infer_args.stage_factors, "e.g. 2,2,full or 1,1,1");
    infer->add_flag("--dump-uncertainty", infer_args.dump_uncertainty, "also write per-stage U maps (x2)");
    infer->add_option("--set", infer_args.overrides, "key=value override (repeatable)");
    infer->add_option("--seed", infer_args.seed);

    EvalArgs eval_args;
    std::optional<uint64_t> eval_seed;
    auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
    eval->add_option("--pred", eval_args.pred)->required();
    eval->add_option("--gt", eval_args.gt)->required();
    eval->add_option("--out", eval_args.out, "report JSON")->required();
    eval->add_option("--subset", eval_args.subset, "file listing the stems to aggregate");
    eval->add_option("--csv", eval_args.csv, "per-image CSV");
    eval->add_option("--curves", eval_args.curves, "PR / F curve CSV");
    eval->add_option("--seed", eval_seed, "accepted for uniformity; evaluation is deterministic");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench-adp", "compare partition costs across thresholds");
    auto* corpus_opt = bench->add_option("--corpus", bench_args.corpus, "directory of uncertainty PNGs (x2 scaled)");
    auto* synth_opt = bench->add_option("--synthetic", bench_args.synthetic, "number of synthetic maps");
    corpus_opt->excludes(synth_opt);
    bench->add_option("--thresholds", bench_args.thresholds, "comma-separated p_threshold list");
    bench->add_option("--size", bench_args.size, "synthetic map side");
    bench->add_option("--occupancy-min", bench_args.occ_lo);
    bench->add_option("--occupancy-max", bench_args.occ_hi);
    bench->add_option("--min-size", bench_args.min_size, "0: side / 32");
    bench->add_option("--channels", bench_args.channels);
    bench->add_option("--random-prob", bench_args.random_prob, "also run random-window partitioning");
    bench->add_option("--out", bench_args.out, "CSV")->required();
    bench->add_option("--seed", bench_args.seed);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset or uncertainty corpus");
    synth->add_option("--out", synth_args.out)->required();
    synth->add_option("--count", synth_args.count);
    synth->add_option("--size", synth_args.size);
    synth->add_option("--uncertainty", synth_args.uncertainty, "write this many uncertainty maps instead");
    synth->add_option("--occupancy-min", synth_args.occ_lo);
    synth->add_option("--occupancy-max", synth_args.occ_hi);
    synth->add_option("--seed", synth_args.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train) return cmd_train(train_args);
        if (*infer) return cmd_infer(infer_args);
        if (*eval) return cmd_eval(eval_args);
        if (*bench) return cmd_bench_adp(bench_args);
        if (*synth) return cmd_synth(synth_args);
    } catch (const NonFiniteError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNonFinite;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartial;
    }
    return kExitOk;
}
