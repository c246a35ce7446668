#include "usod/ssca.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

namespace usod {

namespace nn = torch::nn;

int64_t reduction_ratio(const BackboneConfig& backbone, int level) {
    if (level < 1 || level > 3)
        throw ConfigError("SSCA levels are 1..3, got " + std::to_string(level));
    return backbone.strides[3] / backbone.strides[static_cast<std::size_t>(level)];
}

SscaBlockImpl::SscaBlockImpl(const SscaConfig& config, int level, int64_t ratio)
    : config_(config), level_(level), ratio_(ratio) {
    if (ratio < 1)
        throw ConfigError("SSCA reduction ratio must be >= 1");
    const int64_t c = config_.width;
    auto conv1x1 = [&] { return nn::Conv2d(nn::Conv2dOptions(c, c, 1).bias(config_.bias)); };
    if (config_.enabled) {
        reducer = register_module("reducer", nn::Conv2d(nn::Conv2dOptions(c, c, ratio).stride(ratio).bias(config_.bias)));
        reducer_norm = register_module("reducer_norm", nn::BatchNorm2d(c));
        attention = register_module("attention", AttentionProjections(ProjectionOptions{c, c, c, config_.heads, config_.bias,
                                                                                         config_.scale_logits}));
        mlp_in = register_module("mlp_in", conv1x1());
        mlp_out = register_module("mlp_out", conv1x1());
    }
    fuse = register_module("fuse", conv1x1());
    norm = register_module("norm", nn::BatchNorm2d(c));
    head = register_module("head", nn::Conv2d(nn::Conv2dOptions(c, 1, 1).bias(config_.bias)));
}

torch::Tensor SscaBlockImpl::reduce(const torch::Tensor& aggregated) {
    if (aggregated.size(2) % ratio_ != 0 || aggregated.size(3) % ratio_ != 0)
        throw InputError("SSCA level " + std::to_string(level_) + ": map " + shape_string(aggregated) +
                         " is not divisible by reduction ratio r=" + std::to_string(ratio_));
    return reducer_norm->forward(reducer->forward(aggregated));
}

SscaBlockOutput SscaBlockImpl::forward(const torch::Tensor& aggregated) {
    if (aggregated.dim() != 4 || aggregated.size(1) != config_.width)
        throw InputError("SSCA level " + std::to_string(level_) + " expects width " + std::to_string(config_.width) +
                         ", got " + shape_string(aggregated));
    torch::Tensor integrated;
    if (config_.enabled) {
        auto reduced = reduce(aggregated);
        auto s_hat = aggregated + attention->forward(aggregated, reduced);
        auto mlp = mlp_out->forward(torch::gelu(mlp_in->forward(s_hat)));
        integrated = norm->forward(fuse->forward(s_hat + mlp));
    } else {
        integrated = norm->forward(fuse->forward(aggregated));
    }
    return {integrated, head->forward(integrated)};
}

SscaImpl::SscaImpl(const SscaConfig& config, const BackboneConfig& backbone) : config_(config) {
    const int64_t c = config_.width;
    for (int level = 1; level <= 3; ++level) {
        const auto idx = static_cast<std::size_t>(level - 1);
        const std::string tag = std::to_string(level);
        aggregators[idx] = register_module("aggregate" + tag, nn::Conv2d(nn::Conv2dOptions(2 * c, c, 1).bias(config_.bias)));
        blocks[idx] = register_module("block" + tag, SscaBlock(config_, level, reduction_ratio(backbone, level)));
    }
}

torch::Tensor SscaImpl::aggregate(int level, const torch::Tensor& interacted, const torch::Tensor& higher) {
    auto up = resize_like(higher, interacted);
    return aggregators.at(static_cast<std::size_t>(level - 1))->forward(torch::cat({interacted, up}, 1));
}

SscaState SscaImpl::forward(const MiaOutput& mia) {
    SscaState state;
    torch::Tensor higher = mia.level(4);
    for (int level = 3; level >= 1; --level) {
        const auto idx = static_cast<std::size_t>(level - 1);
        state.aggregated[idx] = aggregate(level, mia.level(level), higher);
        auto out = blocks[idx]->forward(state.aggregated[idx]);
        state.integrated[idx] = out.integrated;
        state.logits[idx] = out.logits;
        higher = out.integrated;
    }
    return state;
}

} // namespace usod
