#pragma once

#include "usod/attention.hpp"
#include "usod/backbone.hpp"
#include "usod/mia.hpp"

#include <torch/torch.h>

#include <array>

namespace usod {

struct SscaConfig {
    int64_t width = 64;
    int64_t heads = 1;
    bool bias = true;
    bool scale_logits = false;
    /// Off keeps the aggregation path and the prediction heads but drops attention and MLP.
    bool enabled = true;
};

/// Spatial reduction ratio of level i (1..3): the factor bringing level i down to level 3's grid.
/// With strides doubling per level this is 2^(3 - i).
int64_t reduction_ratio(const BackboneConfig& backbone, int level);

struct SscaBlockOutput {
    torch::Tensor integrated; ///< F_i^S, [b, C, h, w]
    torch::Tensor logits;     ///< S_i, [b, 1, h, w]
};

/// One scale spatial-consistent attention block at reduction ratio r:
///   K/V  <- BN(conv_{r x r, stride r}(F^C))
///   F^S_hat = F^C + Attention(psi(F^C), psi(K/V), psi(K/V))
///   F^S  = BN(chi(F^S_hat + chi(GeLU(chi(F^S_hat)))))
///   S    = conv_1x1(F^S)
class SscaBlockImpl : public torch::nn::Module {
public:
    SscaBlockImpl(const SscaConfig& config, int level, int64_t ratio);

    SscaBlockOutput forward(const torch::Tensor& aggregated);
    /// The r x r strided reduction plus BN that produces the key/value grid.
    torch::Tensor reduce(const torch::Tensor& aggregated);

    int level() const { return level_; }
    int64_t ratio() const { return ratio_; }

    torch::nn::Conv2d reducer{nullptr};
    torch::nn::BatchNorm2d reducer_norm{nullptr};
    AttentionProjections attention{nullptr};
    torch::nn::Conv2d mlp_in{nullptr}, mlp_out{nullptr}, fuse{nullptr};
    torch::nn::BatchNorm2d norm{nullptr};
    torch::nn::Conv2d head{nullptr};

private:
    SscaConfig config_;
    int level_;
    int64_t ratio_;
};
TORCH_MODULE(SscaBlock);

/// Aggregated, integrated and predicted maps of the top-down decoder, indexed by level.
struct SscaState {
    std::array<torch::Tensor, 3> aggregated; ///< F_1^C .. F_3^C
    std::array<torch::Tensor, 3> integrated; ///< F_1^S .. F_3^S
    std::array<torch::Tensor, 3> logits;     ///< S_1 .. S_3

    const torch::Tensor& prediction(int level) const { return logits.at(static_cast<std::size_t>(level - 1)); }
    const torch::Tensor& feature(int level) const { return integrated.at(static_cast<std::size_t>(level - 1)); }
};

/// Top-down aggregation (F_3^C from F_3^I and F_4^I, then F_i^C from F_i^I and F_{i+1}^S)
/// interleaved with one SSCA block per level 3, 2, 1.
class SscaImpl : public torch::nn::Module {
public:
    SscaImpl(const SscaConfig& config, const BackboneConfig& backbone);

    SscaState forward(const MiaOutput& mia);

    /// chi(concat(F_i^I, up(higher))) for level 1..3; `higher` is F_4^I for level 3 and F_{i+1}^S otherwise.
    torch::Tensor aggregate(int level, const torch::Tensor& interacted, const torch::Tensor& higher);

    std::array<torch::nn::Conv2d, 3> aggregators{nullptr, nullptr, nullptr};
    std::array<SscaBlock, 3> blocks{nullptr, nullptr, nullptr};

private:
    SscaConfig config_;
};
TORCH_MODULE(Ssca);

} // namespace usod
