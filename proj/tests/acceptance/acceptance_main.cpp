// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.

#include "oracles.hpp"

#include <usod/adp.hpp>
#include <usod/attention.hpp>
#include <usod/config.hpp>
#include <usod/data.hpp>
#include <usod/losses.hpp>
#include <usod/metrics.hpp>
#include <usod/mia.hpp>
#include <usod/ssca.hpp>
#include <usod/trainer.hpp>
#include <usod/tensor_ops.hpp>
#include <usod/ura.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

using namespace usod;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs_diff(const oracle::Matrix& a, const oracle::Matrix& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
    return m;
}

oracle::BoolMatrix bool_matrix(const torch::Tensor& t) {
    auto a = t.to(torch::kBool).contiguous();
    oracle::BoolMatrix out(a.size(0), std::vector<bool>(a.size(1)));
    auto acc = a.accessor<bool, 2>();
    for (int64_t i = 0; i < a.size(0); ++i)
        for (int64_t j = 0; j < a.size(1); ++j) out[i][j] = acc[i][j];
    return out;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// ---------------------------------------------------------------------------------------------

Outcome attention_oracles() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> n_dist(1, 16), c_dist(1, 8);
    std::bernoulli_distribution keep(0.6);
    double worst = 0, worst_zero = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int nq = n_dist(rng), nk = n_dist(rng), c = c_dist(rng);
        auto q = oracle::random_matrix(rng, nq, c, -2, 2), k = oracle::random_matrix(rng, nk, c, -2, 2),
             v = oracle::random_matrix(rng, nk, c, -2, 2);
        auto qt = oracle::to_tensor(q).unsqueeze(0), kt = oracle::to_tensor(k).unsqueeze(0),
             vt = oracle::to_tensor(v).unsqueeze(0);
        const bool scale = trial % 2;
        worst = std::max(worst, max_abs_diff(oracle::from_tensor(attention(qt, kt, vt, scale)[0]),
                                             oracle::attention(q, k, v, {}, scale)));

        oracle::BoolMatrix allowed(nq, std::vector<bool>(nk));
        auto at = torch::zeros({1, nq, nk}, torch::kBool);
        for (int i = 0; i < nq; ++i)
            for (int j = 0; j < nk; ++j) {
                allowed[i][j] = keep(rng);
                at[0][i][j] = static_cast<bool>(allowed[i][j]);
            }
        worst = std::max(worst, max_abs_diff(oracle::from_tensor(mask_attention(MaskMatrix(at), qt, kt, vt, scale)[0]),
                                             oracle::attention(q, k, v, allowed, scale)));

        auto zero = MaskMatrix::from_additive(torch::zeros({1, nq, nk}, torch::kFloat64));
        worst_zero = std::max(worst_zero, (mask_attention(zero, qt, kt, vt, scale) - attention(qt, kt, vt, scale))
                                              .abs()
                                              .max()
                                              .item<double>());
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-6 && worst_zero <= 1e-6 && secs < 10,
            fmt("max oracle error %.3g, zero-mask error %.3g, %.2f s", worst, worst_zero, secs)};
}

// ---------------------------------------------------------------------------------------------

Outcome adp_equivalence() {
    const auto t0 = Clock::now();
    torch::manual_seed(202);
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> unit(0, 1);
    const int64_t side = 16, c = 4, cl = 3, min_size = 2;
    double worst_global = 0, worst_fixed = 0;
    for (int trial = 0; trial < 100; ++trial) {
        AttentionProjections proj(ProjectionOptions{c, cl, c, 1, true, false});
        proj->to(torch::kFloat64);
        auto x = torch::randn({1, c, side, side}, torch::kFloat64);
        auto l = torch::randn({1, cl, side, side}, torch::kFloat64);
        auto u = torch::rand({1, 1, side, side}, torch::kFloat64) * (0.02 * unit(rng) + 0.0101);
        auto xt = oracle::from_tensor(x[0].flatten(1).t());
        auto lt = oracle::from_tensor(l[0].flatten(1).t());
        auto unc = bool_matrix(u[0][0] > kUncertainCutoff);
        const auto q = oracle::linear(xt, proj->q_proj), k = oracle::linear(lt, proj->k_proj),
                   v = oracle::linear(lt, proj->v_proj);

        // dense attention over all tokens with uncertain keys only
        oracle::BoolMatrix key_mask(side * side, std::vector<bool>(side * side));
        for (int i = 0; i < side * side; ++i)
            for (int j = 0; j < side * side; ++j) key_mask[i][j] = unc[j / side][j % side];
        auto global = oracle::attention(q, k, v, key_mask);
        for (std::size_t i = 0; i < global.size(); ++i)
            for (std::size_t d = 0; d < global[i].size(); ++d) global[i][d] += xt[i][d];

        // fixed min_size x min_size tiling
        std::vector<oracle::Leaf> tiles;
        for (int y = 0; y < side; y += min_size)
            for (int xx = 0; xx < side; xx += min_size) tiles.push_back({y, xx, (int)min_size, (int)min_size});
        auto fixed = oracle::windowed_attention(xt, q, k, v, unc, tiles);

        PartitionConfig cfg;
        cfg.min_size = min_size;
        cfg.p_threshold = 0.0;
        auto out_global = oracle::from_tensor(adp_attend(x, l, u, cfg, *proj).output[0].flatten(1).t());
        cfg.p_threshold = 1.0;
        auto out_fixed = oracle::from_tensor(adp_attend(x, l, u, cfg, *proj).output[0].flatten(1).t());
        worst_global = std::max(worst_global, max_abs_diff(out_global, global));
        worst_fixed = std::max(worst_fixed, max_abs_diff(out_fixed, fixed));
    }

    int tiling_failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int64_t s = int64_t{8} << (trial % 3);
        const int64_t ms = int64_t{1} << (trial % 3);
        auto mask = torch::rand({s, s}) < unit(rng) * 0.2;
        PartitionConfig cfg;
        cfg.min_size = ms;
        cfg.p_threshold = unit(rng);
        if (trial % 10 == 0) cfg.mode = PartitionMode::RandomWindow;
        auto tree = plan_partition(mask, cfg, static_cast<uint64_t>(trial));
        std::vector<int> cover(static_cast<std::size_t>(s * s), 0);
        for (const auto* leaf : leaves(tree))
            for (int64_t y = leaf->window.y0; y < leaf->window.y0 + leaf->window.h; ++y)
                for (int64_t xx = leaf->window.x0; xx < leaf->window.x0 + leaf->window.w; ++xx)
                    ++cover[static_cast<std::size_t>(y * s + xx)];
        bool ok = std::all_of(cover.begin(), cover.end(), [](int n) { return n == 1; });
        if (cfg.mode == PartitionMode::Adaptive) {
            auto want = oracle::adp_leaves(bool_matrix(mask), cfg.p_threshold, static_cast<int>(ms));
            auto got = leaves(tree);
            ok = ok && want.size() == got.size();
            for (std::size_t i = 0; ok && i < want.size(); ++i)
                ok = got[i]->window == Window{want[i].y0, want[i].x0, want[i].h, want[i].w};
        }
        tiling_failures += ok ? 0 : 1;
    }
    const double secs = seconds_since(t0);
    return {worst_global <= 1e-5 && worst_fixed <= 1e-5 && tiling_failures == 0 && secs < 60,
            fmt("global err %.3g, fixed-window err %.3g, ", worst_global, worst_fixed) +
                std::to_string(tiling_failures) + "/1000 bad tilings, " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------------------------

Outcome adp_cost_direction() {
    const auto t0 = Clock::now();
    const auto maps = data::uncertainty_corpus(100, 64, 0.02, 0.05, 303);
    PartitionConfig adp_cfg;
    adp_cfg.p_threshold = 0.2;
    adp_cfg.min_size = 64 / 32;
    PartitionConfig global_cfg = adp_cfg;
    global_cfg.mode = PartitionMode::Global;
    int cheaper = 0;
    double ratio_sum = 0, ratio_max = 0;
    for (const auto& u : maps) {
        auto mask = u > kUncertainCutoff;
        const auto adp = tree_cost(plan_partition(mask, adp_cfg), 64, false).mac_count;
        const auto global = tree_cost(plan_partition(mask, global_cfg), 64, true).mac_count;
        cheaper += adp < global ? 1 : 0;
        const double r = static_cast<double>(adp) / static_cast<double>(global);
        ratio_sum += r;
        ratio_max = std::max(ratio_max, r);
    }
    const double secs = seconds_since(t0);
    return {cheaper == 100 && secs < 60,
            std::to_string(cheaper) + "/100 cheaper, " +
                fmt("mean adp/global mac ratio %.4f (max %.4f), %.1f s", ratio_sum / 100, ratio_max, secs)};
}

// ---------------------------------------------------------------------------------------------

Outcome uncertainty_generation() {
    torch::manual_seed(404);
    double lo = 1, hi = 0;
    for (int chunk = 0; chunk < 10; ++chunk) {
        // half uniform maps, half near-binary maps
        auto s = torch::rand({1000, 1, 16, 16}, torch::kFloat64);
        s.slice(0, 0, 500) = (s.slice(0, 0, 500) > 0.5).to(torch::kFloat64) * 0.98 + 0.01;
        auto u = uncertainty_generate(s).values;
        lo = std::min(lo, u.min().item<double>());
        hi = std::max(hi, u.max().item<double>());
    }
    double fixed_err = 0;
    for (double c : {0.0, 0.1, 0.25, 0.5, 0.7, 1.0}) {
        auto u = uncertainty_generate(torch::full({1, 1, 11, 11}, c, torch::kFloat64)).values;
        fixed_err = std::max(fixed_err, (u - (0.5 - std::abs(c - 0.5))).abs().max().item<double>());
    }
    // one pixel at 0.5 on a saturated background: U = 0.5 * Gaussian around it
    auto s = torch::zeros({1, 1, 15, 15}, torch::kFloat64);
    s[0][0][7][7] = 0.5;
    auto u = uncertainty_generate(s).values[0][0];
    double z = 0;
    for (int y = -3; y <= 3; ++y)
        for (int x = -3; x <= 3; ++x) z += std::exp(-(x * x + y * y) / 2.0);
    double kernel_err = 0;
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 15; ++x) {
            const int dy = y - 7, dx = x - 7;
            const double want = (std::abs(dy) <= 3 && std::abs(dx) <= 3) ? 0.5 * std::exp(-(dx * dx + dy * dy) / 2.0) / z : 0.0;
            kernel_err = std::max(kernel_err, std::abs(u[y][x].item<double>() - want));
        }
    return {lo >= 0 && hi <= 0.5 && fixed_err <= 1e-12 && kernel_err <= 1e-6,
            fmt("range [%.4f, %.4f] over 1e4 maps, fixed-point err %.2g, ", lo, hi, fixed_err) +
                fmt("single-pixel err %.2g", kernel_err)};
}

// ---------------------------------------------------------------------------------------------

Outcome gradient_checks() {
    const auto t0 = Clock::now();
    torch::manual_seed(505);
    std::vector<std::pair<std::string, oracle::GradcheckResult>> results;
    auto record = [&](const std::string& name, const oracle::GradcheckResult& r) { results.emplace_back(name, r); };

    {
        const BackboneConfig bb;
        MiaConfig cfg;
        cfg.width = 8;
        Mia mia(bb.stage_channels, cfg);
        mia->to(torch::kFloat64);
        mia->eval();
        FeaturePyramid p;
        for (int i = 0; i < kPyramidLevels; ++i)
            p[i] = torch::randn({1, bb.stage_channels[i], 32 / bb.strides[i], 32 / bb.strides[i]}, torch::kFloat64);
        auto f = [&] {
            auto o = mia->forward(p);
            return o.level(1).pow(2).sum() + o.level(2).sum() + o.level(3).mean();
        };
        record("mia", oracle::gradcheck(f, mia->parameters(), 8, 1e-6, 1));
    }
    {
        SscaConfig cfg;
        cfg.width = 8;
        SscaBlock block(cfg, 1, 4);
        block->to(torch::kFloat64);
        block->eval();
        auto x = torch::randn({1, 8, 8, 8}, torch::kFloat64);
        auto f = [&] {
            auto o = block->forward(x);
            return o.logits.pow(2).sum() + o.integrated.mean();
        };
        record("ssca", oracle::gradcheck(f, block->parameters(), 8, 1e-6, 2));
    }
    {
        UraStage stage(8, 4, 1, true, false);
        stage->to(torch::kFloat64);
        stage->eval();
        RefineState state{torch::randn({1, 8, 8, 8}, torch::kFloat64), torch::rand({1, 1, 8, 8}, torch::kFloat64), 0, 1.0};
        auto low = torch::randn({1, 4, 8, 8}, torch::kFloat64);
        StageOptions opts;
        opts.partition.mode = PartitionMode::Global;
        auto f = [&] {
            auto o = stage->forward(state, low, opts);
            return o.logits.pow(2).sum() + o.state.feature.mean();
        };
        record("ura", oracle::gradcheck(f, stage->parameters(), 8, 1e-6, 3));
    }
    {
        ChannelAttention ca(ChannelAttentionOptions{8, 6, 4, true, false});
        ca->to(torch::kFloat64);
        auto x = torch::randn({2, 8, 4, 4}, torch::kFloat64);
        auto f = [&] { return ca->forward(x).pow(2).sum(); };
        record("channel-attention", oracle::gradcheck(f, ca->parameters(), 8, 1e-6, 4));
    }
    {
        auto p = (torch::rand({2, 1, 4, 4}, torch::kFloat64) * 0.8 + 0.1).requires_grad_();
        auto s = torch::rand({2, 1, 4, 4}, torch::kFloat64).requires_grad_();
        auto g = (torch::rand({2, 1, 4, 4}) > 0.5).to(torch::kFloat64);
        record("bce+iou", oracle::gradcheck([&] { return bce_loss(p, g) + iou_loss(p, g); }, {p}, 8, 1e-6, 5));
        record("sc", oracle::gradcheck([&] { return sc_loss(p, s); }, {p}, 8, 1e-6, 6));
    }
    const double secs = seconds_since(t0);
    bool pass = secs < 300;
    std::string detail;
    for (const auto& [name, r] : results) {
        pass = pass && r.nonzero > 0 && r.max_rel_error < 1e-3;
        detail += name + " " + fmt("%.2g", r.max_rel_error) + " (" + std::to_string(r.nonzero) + "/" +
                  std::to_string(r.checked) + " nonzero), ";
    }
    return {pass, detail + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------------------------

Outcome loss_oracles() {
    std::mt19937_64 rng(606);
    std::uniform_int_distribution<int> side(1, 4);
    double worst = 0;
    auto map4 = [](const oracle::Matrix& m) {
        return oracle::to_tensor(m).view({1, 1, (int64_t)m.size(), (int64_t)m[0].size()});
    };
    for (int trial = 0; trial < 200; ++trial) {
        const int h = side(rng), w = side(rng);
        auto p = oracle::random_matrix(rng, h, w, 0, 1), s = oracle::random_matrix(rng, h, w, 0, 1);
        auto g = oracle::random_matrix(rng, h, w, 0, 1);
        for (auto& r : g)
            for (auto& x : r) x = x > 0.5 ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(bce_loss(map4(p), map4(g), Reduction::Sum).item<double>() - oracle::bce_sum(p, g)));
        worst = std::max(worst, std::abs(iou_loss(map4(p), map4(g)).item<double>() - oracle::iou(p, g)));
        worst = std::max(worst, std::abs(sc_loss(map4(p), map4(s), Reduction::Sum).item<double>() - oracle::l1_sum(p, s)));
    }
    auto g = (torch::rand({2, 1, 4, 4}) > 0.5).to(torch::kFloat64);
    g[0][0][0][0] = 1.0;
    g[1][0][0][0] = 1.0;
    const double iou_self = iou_loss(g, g).item<double>();
    auto a = torch::rand({1, 1, 4, 4}, torch::kFloat64).requires_grad_();
    auto b = torch::rand({1, 1, 4, 4}, torch::kFloat64).requires_grad_();
    sc_loss(a, b).backward();
    const bool stopped = !b.grad().defined() || torch::all(b.grad() == 0).item<bool>();
    return {worst <= 1e-9 && iou_self == 0.0 && stopped,
            fmt("max oracle error %.3g, iou(G,G)=%g, ", worst, iou_self) +
                (stopped ? "sc second-argument grad zero" : "sc second-argument grad nonzero")};
}

// ---------------------------------------------------------------------------------------------

cv::Mat1d to_mat(const oracle::Matrix& a) {
    cv::Mat1d out(static_cast<int>(a.size()), static_cast<int>(a[0].size()));
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out(i, j) = a[i][j];
    return out;
}

oracle::Matrix random_gt(std::mt19937_64& rng, int h, int w, double density) {
    auto g = oracle::random_matrix(rng, h, w, 0, 1);
    for (auto& r : g)
        for (auto& x : r) x = x < density ? 1.0 : 0.0;
    return g;
}

Outcome metric_oracles() {
    std::mt19937_64 rng(707);
    std::uniform_real_distribution<double> density(0.05, 0.8);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
        auto p = oracle::random_matrix(rng, 8, 8, 0, 1);
        if (trial % 4 == 0)
            for (auto& r : p)
                for (auto& x : r) x = std::round(x * 4) / 4;
        auto g = random_gt(rng, 8, 8, density(rng));
        const auto pm = to_mat(p), gm = to_mat(g);
        worst = std::max(worst, std::abs(metrics::mae(pm, gm) - oracle::mae(p, g)));
        worst = std::max(worst, std::abs(metrics::e_measure(pm, gm).mean - oracle::e_measure_mean(p, g)));
        worst = std::max(worst, std::abs(metrics::s_measure(pm, gm) - oracle::s_measure(p, g)));
        worst = std::max(worst, std::abs(metrics::weighted_f(pm, gm) - oracle::weighted_f(p, g)));
    }
    double identity_err = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto g = to_mat(random_gt(rng, 8, 8, density(rng)));
        if (cv::countNonZero(g) == 0) g(0, 0) = 1;
        identity_err = std::max(identity_err, metrics::mae(g, g));
        identity_err = std::max(identity_err, std::abs(metrics::e_measure(g, g).mean - 1));
        identity_err = std::max(identity_err, std::abs(metrics::s_measure(g, g) - 1));
        identity_err = std::max(identity_err, std::abs(metrics::weighted_f(g, g) - 1));
    }
    int lower = 0;
    for (int trial = 0; trial < 100; ++trial) {
        auto g = to_mat(random_gt(rng, 16, 16, density(rng)));
        if (cv::countNonZero(g) == 0) g(3, 3) = 1;
        lower += metrics::weighted_f(g * 0.5, g) < metrics::weighted_f(g, g) ? 1 : 0;
    }
    return {worst <= 1e-6 && identity_err <= 1e-6 && lower == 100,
            fmt("max oracle error %.3g, P=G error %.3g, ", worst, identity_err) + std::to_string(lower) +
                "/100 undersaturated maps score lower"};
}

// ---------------------------------------------------------------------------------------------

struct OverfitState {
    ExperimentConfig config;
    std::vector<data::Sample> train;
    std::unique_ptr<Trainer> trainer;
};

Outcome overfit(OverfitState& st) {
    const auto t0 = Clock::now();
    st.config = ExperimentConfig::load(USOD_SOURCE_DIR "/configs/overfit.cfg");
    st.train = load_experiment_data(st.config).first;
    st.trainer = std::make_unique<Trainer>(st.config, st.train);
    const auto result = st.trainer->run(false);
    const auto report = evaluate_model(st.trainer->model(), st.train);
    const double train_secs = seconds_since(t0);

    // determinism: an independent trainer must reproduce the opening losses bit for bit
    constexpr int kReplay = 20;
    Trainer replay(st.config, st.train);
    const auto replayed = replay.run(false, kReplay);
    bool same = replayed.loss_trace.size() == kReplay;
    for (int i = 0; same && i < kReplay; ++i) same = replayed.loss_trace[i] == result.loss_trace[i];

    const double secs = seconds_since(t0);
    const auto& agg = report.aggregate;
    return {agg.mae < 0.05 && agg.weighted_f > 0.85 && same && secs < 600,
            fmt("train MAE %.4f, weighted-F %.4f, ", agg.mae, agg.weighted_f) +
                (same ? "first 20 losses reproduced exactly, " : "replay diverged, ") +
                fmt("%.0f s training, %.0f s total", train_secs, secs)};
}

Outcome refinement_direction(OverfitState& st) {
    if (!st.trainer) return {false, "overfit model unavailable"};
    const auto s1 = evaluate_model(st.trainer->model(), st.train, EvalHead::S1).aggregate.weighted_f;
    const auto r3 = evaluate_model(st.trainer->model(), st.train, EvalHead::R3).aggregate.weighted_f;
    return {r3 >= s1 - 0.005, fmt("weighted-F R3 %.4f vs S1 %.4f", r3, s1)};
}

Outcome inference_consistency(OverfitState& st) {
    if (!st.trainer) return {false, "overfit model unavailable"};
    auto& model = st.trainer->model();
    model->eval();
    torch::NoGradGuard no_grad;
    auto batch = data::make_batch(st.train);
    ForwardOptions train_opts, infer_opts;
    infer_opts.mode = RunMode::Infer;
    infer_opts.stage_factors = {1, 1, 1};
    const auto a = model->forward(batch.images, train_opts).pre_resize_logits;
    const auto b = model->forward(batch.images, infer_opts).pre_resize_logits;
    if (a.sizes() != b.sizes()) return {false, "shape mismatch " + shape_string(a) + " vs " + shape_string(b)};
    const double err = (a - b).abs().max().item<double>();
    return {err <= 1e-5, fmt("max |train - infer| %.3g before the final resize", err)};
}

// ---------------------------------------------------------------------------------------------

Outcome lr_schedule() {
    TrainConfig cfg;
    cfg.iterations = 50000;
    cfg.warmup = 2500;
    cfg.base_lr = 1e-4;
    double worst = 0;
    std::mt19937_64 rng(1111);
    std::uniform_int_distribution<int64_t> pick(0, cfg.iterations);
    for (int i = 0; i < 1000; ++i) {
        const int64_t it = i < 2 ? (i == 0 ? cfg.warmup : cfg.iterations - 1) : pick(rng);
        const double ramp = it < cfg.warmup ? static_cast<double>(it) / cfg.warmup : 1.0;
        const double decay = it >= cfg.iterations ? 0.0 : 1.0 - std::pow(static_cast<double>(it) / cfg.iterations, 0.9);
        worst = std::max(worst, std::abs(lr_at(it, cfg) - cfg.base_lr * ramp * decay));
    }
    const double first = lr_at(0, cfg), last = lr_at(cfg.iterations, cfg);
    return {worst <= 1e-12 && first == 0.0 && last == 0.0,
            fmt("max deviation %.3g over 1000 points, lr(0)=%g, lr(max)=%g", worst, first, last)};
}

} // namespace

int main() {
    torch::set_num_threads(1);
    OverfitState overfit_state;
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, attention_oracles},
        {2, adp_equivalence},
        {3, adp_cost_direction},
        {4, uncertainty_generation},
        {5, gradient_checks},
        {6, loss_oracles},
        {7, metric_oracles},
        {8, [&] { return overfit(overfit_state); }},
        {9, [&] { return refinement_direction(overfit_state); }},
        {10, [&] { return inference_consistency(overfit_state); }},
        {11, lr_schedule},
    };
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
