#pragma once

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

namespace usod {

inline constexpr double kLossEps = 1e-6;

/// Pixel reduction of the per-pixel losses. Sum follows the double sums literally (per image,
/// then averaged over the batch); Mean divides that by H*W, keeping the scale resolution-free.
enum class Reduction { Sum, Mean };

enum class LossVariant {
    Bce,       ///< L_bce only
    Api,       ///< adaptive pixel intensity loss (TRACER release)
    BceIou,    ///< L_bce + L_iou
    WbceWiou,  ///< weighted bce + weighted iou (F3Net release)
    BceIouSc,  ///< L_bce + L_iou + L_sc (default)
};

std::string to_string(LossVariant variant);
LossVariant parse_loss_variant(const std::string& text);
std::string to_string(Reduction reduction);
Reduction parse_reduction(const std::string& text);

/// -sum[G log P + (1 - G) log(1 - P)] with P clamped to [eps, 1 - eps]. P, G: [b, 1, H, W].
torch::Tensor bce_loss(const torch::Tensor& p, const torch::Tensor& g, Reduction reduction = Reduction::Mean);
/// 1 - sum(PG) / sum(P + G - PG), per image, averaged over the batch.
torch::Tensor iou_loss(const torch::Tensor& p, const torch::Tensor& g);
/// sum |S_i - stopgrad(S_next)|; no gradient reaches `s_next`.
torch::Tensor sc_loss(const torch::Tensor& s_i, const torch::Tensor& s_next, Reduction reduction = Reduction::Mean);

// External definitions kept for the loss ablation; weights follow the published releases.
torch::Tensor weighted_bce_iou_loss(const torch::Tensor& logits, const torch::Tensor& g);
torch::Tensor api_loss(const torch::Tensor& p, const torch::Tensor& g);

struct LossConfig {
    LossVariant variant = LossVariant::BceIouSc;
    Reduction reduction = Reduction::Mean;
    bool require_refined = true;
};

struct LossTerm {
    std::string kind; ///< bce, iou, sc, wbce_wiou, api
    std::string head; ///< S1..S3, R1..R3, or "S1|S2" for sc pairs
    torch::Tensor value;
};

struct LossReport {
    std::vector<LossTerm> terms;
    torch::Tensor total;

    double total_value() const { return total.item<double>(); }
    /// Sum of every term of one kind.
    double sum(const std::string& kind) const;
    /// Per-head values of one kind, in report order.
    std::vector<double> values(const std::string& kind) const;
};

/// Logit heads fed to the total loss: S_1..S_3 from the decoder, R_1..R_3 from refinement.
struct HeadSet {
    std::array<torch::Tensor, 3> side;
    std::vector<torch::Tensor> refined;
};

/// Multilevel supervision. Every head is bilinearly resized to G before scoring.
LossReport total_loss(const HeadSet& heads, const torch::Tensor& g, const LossConfig& config = {});

} // namespace usod
