#include "usod/losses.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

namespace usod {

namespace F = torch::nn::functional;

std::string to_string(LossVariant variant) {
    switch (variant) {
    case LossVariant::Bce: return "bce";
    case LossVariant::Api: return "api";
    case LossVariant::BceIou: return "bce_iou";
    case LossVariant::WbceWiou: return "wbce_wiou";
    case LossVariant::BceIouSc: return "bce_iou_sc";
    }
    return "bce_iou_sc";
}

LossVariant parse_loss_variant(const std::string& text) {
    if (text == "bce") return LossVariant::Bce;
    if (text == "api") return LossVariant::Api;
    if (text == "bce_iou") return LossVariant::BceIou;
    if (text == "wbce_wiou") return LossVariant::WbceWiou;
    if (text == "bce_iou_sc") return LossVariant::BceIouSc;
    throw ConfigError("unknown loss variant '" + text + "' (bce|api|bce_iou|wbce_wiou|bce_iou_sc)");
}

std::string to_string(Reduction reduction) {
    return reduction == Reduction::Sum ? "sum" : "mean";
}

Reduction parse_reduction(const std::string& text) {
    if (text == "sum") return Reduction::Sum;
    if (text == "mean") return Reduction::Mean;
    throw ConfigError("unknown loss reduction '" + text + "' (sum|mean)");
}

namespace {

void check_pair(const torch::Tensor& p, const torch::Tensor& g, const char* what) {
    if (p.dim() != 4 || p.sizes() != g.sizes())
        throw InputError(std::string(what) + ": prediction " + shape_string(p) + " and target " + shape_string(g) +
                         " must share a [b,1,H,W] shape");
}

torch::Tensor reduce_pixels(const torch::Tensor& per_pixel, Reduction reduction) {
    auto per_image = per_pixel.sum({1, 2, 3});
    if (reduction == Reduction::Mean)
        per_image = per_image / static_cast<double>(per_pixel.size(1) * per_pixel.size(2) * per_pixel.size(3));
    return per_image.mean();
}

torch::Tensor avg_pool(const torch::Tensor& g, int64_t k) {
    return F::avg_pool2d(g, F::AvgPool2dFuncOptions(k).stride(1).padding(k / 2));
}

} // namespace

torch::Tensor bce_loss(const torch::Tensor& p, const torch::Tensor& g, Reduction reduction) {
    check_pair(p, g, "bce_loss");
    auto pc = p.clamp(kLossEps, 1.0 - kLossEps);
    auto per_pixel = -(g * pc.log() + (1.0 - g) * (1.0 - pc).log());
    return reduce_pixels(per_pixel, reduction);
}

torch::Tensor iou_loss(const torch::Tensor& p, const torch::Tensor& g) {
    check_pair(p, g, "iou_loss");
    auto inter = (p * g).sum({1, 2, 3});
    auto uni = (p + g - p * g).sum({1, 2, 3});
    return (1.0 - inter / uni.clamp_min(kLossEps)).mean();
}

torch::Tensor sc_loss(const torch::Tensor& s_i, const torch::Tensor& s_next, Reduction reduction) {
    check_pair(s_i, s_next, "sc_loss");
    return reduce_pixels((s_i - s_next.detach()).abs(), reduction);
}

torch::Tensor weighted_bce_iou_loss(const torch::Tensor& logits, const torch::Tensor& g) {
    check_pair(logits, g, "weighted_bce_iou_loss");
    auto weight = 1.0 + 5.0 * (avg_pool(g, 31) - g).abs();
    auto bce = F::binary_cross_entropy_with_logits(logits, g, F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
    auto wbce = (weight * bce).sum({2, 3}) / weight.sum({2, 3});
    auto p = torch::sigmoid(logits);
    auto inter = (p * g * weight).sum({2, 3});
    auto uni = ((p + g) * weight).sum({2, 3});
    auto wiou = 1.0 - (inter + 1.0) / (uni - inter + 1.0);
    return (wbce + wiou).mean();
}

torch::Tensor api_loss(const torch::Tensor& p, const torch::Tensor& g) {
    check_pair(p, g, "api_loss");
    auto w1 = (avg_pool(g, 3) - g).abs();
    auto w2 = (avg_pool(g, 15) - g).abs();
    auto w3 = (avg_pool(g, 31) - g).abs();
    auto omega = 1.0 + 0.5 * (w1 + w2 + w3) * g;
    auto pc = p.clamp(kLossEps, 1.0 - kLossEps);
    auto bce = -(g * pc.log() + (1.0 - g) * (1.0 - pc).log());
    auto abce = (omega * bce).sum({2, 3}) / (omega + 0.5).sum({2, 3});
    auto inter = (p * g * omega).sum({2, 3});
    auto uni = ((p + g) * omega).sum({2, 3});
    auto aiou = 1.0 - (inter + 1.0) / (uni - inter + 1.0);
    auto amae = (omega * (p - g).abs()).sum({2, 3}) / (omega - 1.0).sum({2, 3}).clamp_min(kLossEps);
    return (0.7 * abce + 0.7 * aiou + 0.7 * amae).mean();
}

double LossReport::sum(const std::string& kind) const {
    double s = 0.0;
    for (const auto& t : terms)
        if (t.kind == kind)
            s += t.value.item<double>();
    return s;
}

std::vector<double> LossReport::values(const std::string& kind) const {
    std::vector<double> out;
    for (const auto& t : terms)
        if (t.kind == kind)
            out.push_back(t.value.item<double>());
    return out;
}

LossReport total_loss(const HeadSet& heads, const torch::Tensor& g, const LossConfig& config) {
    if (g.dim() != 4 || g.size(1) != 1)
        throw InputError("ground truth must be [b,1,H,W], got " + shape_string(g));
    for (std::size_t i = 0; i < heads.side.size(); ++i)
        if (!heads.side[i].defined())
            throw ConfigError("loss: missing head S" + std::to_string(i + 1));
    if (config.require_refined && heads.refined.size() != 3)
        throw ConfigError("loss: expected refinement heads R1..R3, got " + std::to_string(heads.refined.size()));
    for (std::size_t i = 0; i < heads.refined.size(); ++i)
        if (!heads.refined[i].defined())
            throw ConfigError("loss: missing head R" + std::to_string(i + 1));

    LossReport report;
    auto add_head = [&](const torch::Tensor& logits, const std::string& name) {
        auto up = resize_like(logits, g);
        auto p = torch::sigmoid(up);
        switch (config.variant) {
        case LossVariant::Bce:
            report.terms.push_back({"bce", name, bce_loss(p, g, config.reduction)});
            break;
        case LossVariant::Api:
            report.terms.push_back({"api", name, api_loss(p, g)});
            break;
        case LossVariant::WbceWiou:
            report.terms.push_back({"wbce_wiou", name, weighted_bce_iou_loss(up, g)});
            break;
        case LossVariant::BceIou:
        case LossVariant::BceIouSc:
            report.terms.push_back({"bce", name, bce_loss(p, g, config.reduction)});
            report.terms.push_back({"iou", name, iou_loss(p, g)});
            break;
        }
    };
    for (std::size_t i = 0; i < 3; ++i)
        add_head(heads.side[i], "S" + std::to_string(i + 1));
    for (std::size_t i = 0; i < heads.refined.size(); ++i)
        add_head(heads.refined[i], "R" + std::to_string(i + 1));
    if (config.variant == LossVariant::BceIouSc) {
        for (std::size_t i = 0; i < 2; ++i) {
            auto s_i = torch::sigmoid(resize_like(heads.side[i], g));
            auto s_next = torch::sigmoid(resize_like(heads.side[i + 1], g));
            report.terms.push_back({"sc", "S" + std::to_string(i + 1) + "|S" + std::to_string(i + 2),
                                    sc_loss(s_i, s_next, config.reduction)});
        }
    }
    auto total = torch::zeros({}, g.options());
    for (const auto& t : report.terms)
        total = total + t.value;
    report.total = total;
    return report;
}

} // namespace usod
