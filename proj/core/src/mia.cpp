#include "usod/mia.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

#include <sstream>

namespace usod {

namespace nn = torch::nn;

InteractionScheme::InteractionScheme(std::array<std::optional<int>, 4> partners) : partners_(partners) {
    for (std::size_t i = 0; i < partners_.size(); ++i) {
        if (!partners_[i])
            continue;
        const int p = *partners_[i];
        if (p == 0)
            throw ConfigError("interaction scheme: level " + std::to_string(i + 1) +
                              " cannot attend to level 0 (F_0 is reserved for refinement)");
        if (p < 1 || p > 4)
            throw ConfigError("interaction scheme: level " + std::to_string(i + 1) + " references out-of-range level " +
                              std::to_string(p));
    }
}

InteractionScheme InteractionScheme::parse(const std::string& text) {
    std::array<std::optional<int>, 4> partners{};
    std::stringstream in(text);
    std::string item;
    std::size_t count = 0;
    while (std::getline(in, item, '\\')) {
        auto first = item.find_first_not_of(" \t");
        auto last = item.find_last_not_of(" \t");
        item = first == std::string::npos ? std::string() : item.substr(first, last - first + 1);
        if (count >= partners.size())
            throw ConfigError("interaction scheme '" + text + "' has more than four entries");
        if (item == "-" || item == "\xE2\x88\x92") {
            partners[count] = std::nullopt;
        } else {
            try {
                std::size_t used = 0;
                partners[count] = std::stoi(item, &used);
                if (used != item.size())
                    throw ConfigError("");
            } catch (const std::exception&) {
                throw ConfigError("interaction scheme '" + text + "': cannot parse entry '" + item + "'");
            }
        }
        ++count;
    }
    if (count != partners.size())
        throw ConfigError("interaction scheme '" + text + "' must have four entries separated by '\\'");
    return InteractionScheme(partners);
}

std::string InteractionScheme::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < partners_.size(); ++i) {
        if (i)
            out += '\\';
        out += partners_[i] ? std::to_string(*partners_[i]) : std::string("-");
    }
    return out;
}

MiaImpl::MiaImpl(const std::array<int64_t, kPyramidLevels>& stage_channels, const MiaConfig& config)
    : config_(config) {
    const int64_t width = config_.width;
    for (int level = 1; level <= 4; ++level) {
        const auto idx = static_cast<std::size_t>(level - 1);
        const std::string tag = std::to_string(level);
        if (!config_.enabled) {
            plain_projection[idx] = register_module(
                "project" + tag, nn::Conv2d(nn::Conv2dOptions(stage_channels[level], width, 1).bias(config_.bias)));
            continue;
        }
        channel_attention[idx] = register_module(
            "channel" + tag, ChannelAttention(ChannelAttentionOptions{stage_channels[level], width, config_.reduction,
                                                                      config_.bias, config_.gate_sigmoid}));
        if (auto partner = config_.scheme.partner(level)) {
            cross[idx] = register_module(
                "cross" + tag, AttentionProjections(ProjectionOptions{width, stage_channels[*partner], width,
                                                                      config_.heads, config_.bias, config_.scale_logits}));
            fuse[idx] = register_module("fuse" + tag, nn::Conv2d(nn::Conv2dOptions(width, width, 1).bias(config_.bias)));
            norm[idx] = register_module("norm" + tag, nn::BatchNorm2d(width));
        }
    }
}

torch::Tensor MiaImpl::enhanced(int level, const torch::Tensor& feature) {
    const auto idx = static_cast<std::size_t>(level - 1);
    return config_.enabled ? channel_attention[idx]->forward(feature) : plain_projection[idx]->forward(feature);
}

MiaOutput MiaImpl::forward(const FeaturePyramid& pyramid) {
    MiaOutput out;
    for (int level = 1; level <= 4; ++level) {
        const auto idx = static_cast<std::size_t>(level - 1);
        auto f_hat = enhanced(level, pyramid[static_cast<std::size_t>(level)]);
        if (!config_.enabled || !cross[idx]) {
            out.interacted[idx] = f_hat;
            continue;
        }
        const auto partner = static_cast<std::size_t>(*config_.scheme.partner(level));
        auto interaction = cross[idx]->forward(f_hat, pyramid[partner]);
        out.interacted[idx] = norm[idx]->forward(fuse[idx]->forward(f_hat + interaction));
    }
    return out;
}

} // namespace usod
