#include "usod/ura.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

#include <cmath>
#include <sstream>

namespace usod {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor gaussian_kernel(int64_t size, double sigma) {
    if (size < 1 || size % 2 == 0 || sigma <= 0.0)
        throw ConfigError("Gaussian kernel needs an odd positive size and positive sigma");
    const double c = static_cast<double>(size - 1) / 2.0;
    auto kernel = torch::empty({size, size}, torch::kFloat64);
    auto acc = kernel.accessor<double, 2>();
    double total = 0.0;
    for (int64_t i = 0; i < size; ++i)
        for (int64_t j = 0; j < size; ++j) {
            const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
            acc[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
            total += acc[i][j];
        }
    return kernel / total;
}

UncertaintyMap uncertainty_generate(const torch::Tensor& probability) {
    if (probability.dim() != 4 || probability.size(1) != 1)
        throw InputError("uncertainty_generate expects [b,1,h,w], got " + shape_string(probability));
    if (probability.numel() > 0) {
        if (!torch::isfinite(probability).all().item<bool>())
            throw NonFiniteError("uncertainty_generate: non-finite saliency probabilities");
        if (probability.min().item<double>() < 0.0 || probability.max().item<double>() > 1.0)
            throw InputError("uncertainty_generate: saliency probabilities must lie in [0, 1]");
    }
    const double t = kUncertaintyThreshold;
    auto u_hat = t - (probability - t).abs();
    const int64_t pad = kUncertaintyKernelSize / 2;
    auto padded = F::pad(u_hat, F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReplicate));
    auto kernel = gaussian_kernel().to(probability.options()).view({1, 1, kUncertaintyKernelSize, kUncertaintyKernelSize});
    auto smoothed = F::conv2d(padded, kernel);
    // The kernel sums to one, so this only trims rounding.
    return UncertaintyMap{smoothed.clamp(0.0, t)};
}

MaskMatrix build_mask(const UncertaintyMap& u, int64_t n_q, std::pair<int64_t, int64_t> key_grid, MaskAxis axis) {
    const auto [h, w] = key_grid;
    auto resampled = resize_bilinear(u.values, h, w);
    auto flags = (resampled > kUncertainCutoff).reshape({u.values.size(0), h * w});
    if (axis == MaskAxis::Queries) {
        if (n_q != h * w)
            throw InputError("query mask grid " + std::to_string(h) + "x" + std::to_string(w) + " does not cover " +
                             std::to_string(n_q) + " queries");
        return MaskMatrix::over_queries(flags);
    }
    return MaskMatrix::over_keys(flags);
}

std::string to_string(Guidance guidance) {
    switch (guidance) {
    case Guidance::Uncertainty: return "uncertainty";
    case Guidance::None: return "none";
    case Guidance::Boundary: return "boundary";
    }
    return "uncertainty";
}

Guidance parse_guidance(const std::string& text) {
    if (text == "uncertainty") return Guidance::Uncertainty;
    if (text == "none") return Guidance::None;
    if (text == "boundary") return Guidance::Boundary;
    throw ConfigError("unknown guidance '" + text + "' (uncertainty|none|boundary)");
}

std::string to_string(RunMode mode) {
    return mode == RunMode::Train ? "train" : "infer";
}

RunMode parse_run_mode(const std::string& text) {
    if (text == "train") return RunMode::Train;
    if (text == "infer") return RunMode::Infer;
    throw ConfigError("unknown mode '" + text + "' (train|infer)");
}

StageFactors parse_stage_factors(const std::string& text) {
    StageFactors factors{};
    std::stringstream in(text);
    std::string item;
    std::size_t n = 0;
    while (std::getline(in, item, ',')) {
        if (n >= factors.size())
            throw ConfigError("stage factors '" + text + "' must have three entries");
        if (item == "full") {
            factors[n++] = 0.0;
            continue;
        }
        try {
            std::size_t used = 0;
            const double f = std::stod(item, &used);
            if (used != item.size() || !(f == 0.0 || f >= 1.0))
                throw ConfigError("");
            factors[n++] = f;
        } catch (const std::exception&) {
            throw ConfigError("stage factor '" + item + "' must be 'full' or a number >= 1");
        }
    }
    if (n != factors.size())
        throw ConfigError("stage factors '" + text + "' must have three entries");
    return factors;
}

std::string stage_factors_string(const StageFactors& factors) {
    std::ostringstream out;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        if (i)
            out << ',';
        if (factors[i] == 0.0)
            out << "full";
        else
            out << factors[i];
    }
    return out.str();
}

UraStageImpl::UraStageImpl(int64_t width, int64_t low_channels, int64_t heads, bool bias, bool scale_logits) {
    attention = register_module("attention",
                                AttentionProjections(ProjectionOptions{width, low_channels, width, heads, bias, scale_logits}));
    fuse = register_module("fuse", nn::Conv2d(nn::Conv2dOptions(width, width, 1).bias(bias)));
    norm = register_module("norm", nn::BatchNorm2d(width));
    head = register_module("head", nn::Conv2d(nn::Conv2dOptions(width, 1, 1).bias(bias)));
}

StageOutput UraStageImpl::forward(const RefineState& state, const torch::Tensor& low_level, const StageOptions& options) {
    if (state.stage >= 3)
        throw StateError("refinement stage index " + std::to_string(state.stage + 1) + " exceeds 3");
    const int64_t h = state.feature.size(2), w = state.feature.size(3);
    if (state.probability.size(2) != h || state.probability.size(3) != w)
        throw InputError("refine state feature " + shape_string(state.feature) + " and prediction " +
                         shape_string(state.probability) + " differ spatially");
    auto low = resize_bilinear(low_level, h, w);

    UncertaintyMap u;
    {
        torch::NoGradGuard no_grad;
        switch (options.guidance) {
        case Guidance::Uncertainty: u = uncertainty_generate(state.probability.detach()); break;
        case Guidance::None: u = UncertaintyMap{torch::full_like(state.probability, kUncertaintyThreshold).detach()}; break;
        case Guidance::Boundary:
            if (!options.boundary.defined())
                throw ConfigError("boundary guidance requires a boundary map");
            u = UncertaintyMap{resize_bilinear(options.boundary.to(state.probability.options()), h, w).clamp(0.0, 1.0)};
            break;
        }
    }

    auto adp = adp_attend(state.feature, low, u.values, options.partition, *attention, options.mask_axis, options.salt);
    auto refined = norm->forward(fuse->forward(adp.output));
    auto prior = torch::logit(state.probability.clamp(kProbabilityEps, 1.0 - kProbabilityEps));
    auto logits = prior + head->forward(refined);

    StageOutput out;
    out.state = RefineState{refined, torch::sigmoid(logits), state.stage + 1, state.scale};
    out.logits = logits;
    out.uncertainty = u;
    out.cost = adp.cost;
    return out;
}

RefinerImpl::RefinerImpl(const RefineConfig& config, int64_t width, int64_t low_channels, int64_t heads, bool bias,
                         bool scale_logits)
    : config_(config) {
    if (config_.stages < 1 || config_.stages > 3)
        throw ConfigError("ura.stages must be 1..3");
    for (int j = 0; j < config_.stages; ++j)
        stages.push_back(register_module("stage" + std::to_string(j + 1),
                                         UraStage(width, low_channels, heads, bias, scale_logits)));
}

std::vector<std::pair<int64_t, int64_t>> RefinerImpl::schedule(std::pair<int64_t, int64_t> base,
                                                                std::pair<int64_t, int64_t> input, RunMode mode,
                                                                const StageFactors& factors, int stage_count) {
    std::vector<std::pair<int64_t, int64_t>> sizes(static_cast<std::size_t>(stage_count) + 1, base);
    if (mode == RunMode::Train)
        return sizes;
    auto grow = [&](std::pair<int64_t, int64_t> from, double factor) {
        if (factor == 0.0)
            return input;
        auto scale = [&](int64_t v, int64_t cap) {
            return std::min(cap, static_cast<int64_t>(std::llround(static_cast<double>(v) * factor)));
        };
        return std::pair<int64_t, int64_t>{scale(from.first, input.first), scale(from.second, input.second)};
    };
    for (int j = 1; j < stage_count; ++j)
        sizes[static_cast<std::size_t>(j)] = grow(sizes[static_cast<std::size_t>(j - 1)], factors[static_cast<std::size_t>(j - 1)]);
    sizes.back() = grow(sizes[static_cast<std::size_t>(stage_count - 1)], factors[2]);
    return sizes;
}

RefineOutput RefinerImpl::forward(const SscaState& ssca, const torch::Tensor& low_level, const RefineRequest& request) {
    RefineState state{ssca.feature(1), torch::sigmoid(ssca.prediction(1)), 0, 1.0};
    const std::pair<int64_t, int64_t> base{state.feature.size(2), state.feature.size(3)};
    const auto sizes = schedule(base, request.input_size, request.mode, request.stage_factors, config_.stages);

    RefineOutput out;
    for (int j = 0; j < config_.stages; ++j) {
        const auto [h, w] = sizes[static_cast<std::size_t>(j)];
        if (h != state.feature.size(2) || w != state.feature.size(3)) {
            state.scale *= static_cast<double>(h) / static_cast<double>(state.feature.size(2));
            state.feature = resize_bilinear(state.feature, h, w);
            state.probability = resize_bilinear(state.probability, h, w);
        }
        StageOptions options = request.stage;
        options.salt = request.stage.salt * 4 + static_cast<uint64_t>(j);
        auto stage_out = stages[static_cast<std::size_t>(j)]->forward(state, low_level, options);
        out.logits.push_back(stage_out.logits);
        out.uncertainty.push_back(stage_out.uncertainty);
        out.costs.push_back(stage_out.cost);
        state = stage_out.state;
    }
    const auto [oh, ow] = sizes.back();
    out.output_logits = resize_bilinear(out.logits.back(), oh, ow);
    return out;
}

} // namespace usod
