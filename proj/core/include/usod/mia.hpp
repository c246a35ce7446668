#pragma once

#include "usod/attention.hpp"
#include "usod/backbone.hpp"

#include <torch/torch.h>

#include <array>
#include <optional>
#include <string>

namespace usod {

/// Which backbone level each of levels 1..4 attends to. Written "a\b\c\d" with "-" for none,
/// e.g. the default "2\3\4\-" lets F_1, F_2, F_3 query F_2, F_3, F_4 and leaves F_4 alone.
class InteractionScheme {
public:
    InteractionScheme() = default;
    explicit InteractionScheme(std::array<std::optional<int>, 4> partners);

    static InteractionScheme parse(const std::string& text);
    static InteractionScheme default_scheme() { return parse("2\\3\\4\\-"); }

    /// Partner of backbone level `level` (1..4), if any.
    std::optional<int> partner(int level) const { return partners_.at(static_cast<std::size_t>(level - 1)); }
    std::string to_string() const;

    bool operator==(const InteractionScheme&) const = default;

private:
    std::array<std::optional<int>, 4> partners_{};
};

struct MiaConfig {
    int64_t width = 64;
    int64_t heads = 1;
    int64_t reduction = 4;
    bool bias = true;
    bool scale_logits = false;
    bool gate_sigmoid = false;
    /// Off replaces the whole module by per-level 1x1 projections to `width` (ablation baseline).
    bool enabled = true;
    InteractionScheme scheme = InteractionScheme::default_scheme();
};

/// F_1^I .. F_4^I at the common width.
struct MiaOutput {
    std::array<torch::Tensor, 4> interacted;

    const torch::Tensor& level(int i) const { return interacted.at(static_cast<std::size_t>(i - 1)); }
};

/// Multilevel interaction attention: channel attention on every level, then cross attention
/// from a level's queries to its partner level's keys and values, BN(chi(F_hat + Attention)).
class MiaImpl : public torch::nn::Module {
public:
    MiaImpl(const std::array<int64_t, kPyramidLevels>& stage_channels, const MiaConfig& config);

    MiaOutput forward(const FeaturePyramid& pyramid);

    /// Channel-attended, width-projected F_hat_i (or the plain projection when disabled).
    torch::Tensor enhanced(int level, const torch::Tensor& feature);

    const MiaConfig& config() const { return config_; }

    std::array<ChannelAttention, 4> channel_attention{nullptr, nullptr, nullptr, nullptr};
    std::array<torch::nn::Conv2d, 4> plain_projection{nullptr, nullptr, nullptr, nullptr};
    std::array<AttentionProjections, 4> cross{nullptr, nullptr, nullptr, nullptr};
    std::array<torch::nn::Conv2d, 4> fuse{nullptr, nullptr, nullptr, nullptr};
    std::array<torch::nn::BatchNorm2d, 4> norm{nullptr, nullptr, nullptr, nullptr};

private:
    MiaConfig config_;
};
TORCH_MODULE(Mia);

} // namespace usod
