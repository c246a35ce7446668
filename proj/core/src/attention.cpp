#include "usod/attention.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

#include <cmath>
#include <limits>

namespace usod {

namespace {

void check_qkv(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) {
    if (q.dim() != 3 || k.dim() != 3 || v.dim() != 3)
        throw InputError("attention expects rank-3 Q/K/V, got " + shape_string(q) + " " +
                         shape_string(k) + " " + shape_string(v));
    if (k.size(1) != v.size(1))
        throw InputError("attention: K and V disagree on n_k: " + shape_string(k) + " vs " +
                         shape_string(v));
    if (q.size(0) != k.size(0) || q.size(0) != v.size(0))
        throw InputError("attention: batch mismatch " + shape_string(q) + " " + shape_string(k));
    if (q.size(2) != k.size(2) || q.size(2) != v.size(2))
        throw InputError("attention: channel mismatch " + shape_string(q) + " " + shape_string(k) +
                         " " + shape_string(v));
}

} // namespace

namespace detail {

torch::Tensor softmax_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                const torch::Tensor& allowed, bool scale_logits) {
    auto logits = torch::matmul(q, k.transpose(-2, -1));
    if (scale_logits)
        logits = logits / std::sqrt(static_cast<double>(q.size(-1)));
    if (!allowed.defined())
        return torch::matmul(torch::softmax(logits, -1), v);

    auto allowed_full = allowed.expand_as(logits);
    auto masked = logits.masked_fill(allowed_full.logical_not(), -std::numeric_limits<double>::infinity());
    // Rows without any admissible key would softmax to NaN; give them finite logits and
    // let the multiplication by `allowed` zero their weights.
    auto row_has_key = allowed_full.any(-1, /*keepdim=*/true);
    masked = torch::where(row_has_key, masked, torch::zeros_like(masked));
    auto weights = torch::softmax(masked, -1) * allowed_full.to(logits.scalar_type());
    return torch::matmul(weights, v);
}

} // namespace detail

torch::Tensor attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                        bool scale_logits) {
    check_qkv(q, k, v);
    return detail::softmax_attention(q, k, v, torch::Tensor(), scale_logits);
}

MaskMatrix::MaskMatrix(torch::Tensor allowed) : allowed_(std::move(allowed)) {
    if (!allowed_.defined() || allowed_.dim() != 3)
        throw InputError("MaskMatrix expects a rank-3 [b, n_q|1, n_k|1] tensor");
    if (allowed_.scalar_type() != torch::kBool)
        throw InputError("MaskMatrix expects a boolean allowed-tensor");
}

MaskMatrix MaskMatrix::from_additive(const torch::Tensor& entries) {
    if (entries.dim() != 3)
        throw InputError("mask entries must be [b, n_q, n_k], got " + shape_string(entries));
    auto zero = entries == 0;
    auto neg_inf = torch::isneginf(entries);
    if (!torch::logical_or(zero, neg_inf).all().item<bool>())
        throw InputError("mask entries must be exactly 0 or -inf");
    return MaskMatrix(zero);
}

MaskMatrix MaskMatrix::over_keys(const torch::Tensor& key_allowed) {
    if (key_allowed.dim() != 2)
        throw InputError("key mask must be [b, n_k], got " + shape_string(key_allowed));
    return MaskMatrix(key_allowed.to(torch::kBool).unsqueeze(1));
}

MaskMatrix MaskMatrix::over_queries(const torch::Tensor& query_allowed) {
    if (query_allowed.dim() != 2)
        throw InputError("query mask must be [b, n_q], got " + shape_string(query_allowed));
    return MaskMatrix(query_allowed.to(torch::kBool).unsqueeze(2));
}

torch::Tensor MaskMatrix::additive(int64_t n_q, int64_t n_k) const {
    if (!fits(batch(), n_q, n_k))
        throw InputError("mask " + shape_string(allowed_) + " does not broadcast to [" +
                         std::to_string(batch()) + "," + std::to_string(n_q) + "," + std::to_string(n_k) + "]");
    auto dense = allowed_.expand({batch(), n_q, n_k});
    auto out = torch::zeros({batch(), n_q, n_k}, torch::kFloat64);
    return out.masked_fill(dense.logical_not(), -std::numeric_limits<double>::infinity());
}

bool MaskMatrix::fits(int64_t b, int64_t n_q, int64_t n_k) const {
    auto ok = [](int64_t have, int64_t want) { return have == want || have == 1; };
    return allowed_.size(0) == b && ok(allowed_.size(1), n_q) && ok(allowed_.size(2), n_k);
}

torch::Tensor mask_attention(const MaskMatrix& mask, const torch::Tensor& q, const torch::Tensor& k,
                             const torch::Tensor& v, bool scale_logits) {
    check_qkv(q, k, v);
    if (!mask.fits(q.size(0), q.size(1), k.size(1)))
        throw InputError("mask " + shape_string(mask.allowed()) + " does not match attention shape [" +
                         std::to_string(q.size(0)) + "," + std::to_string(q.size(1)) + "," +
                         std::to_string(k.size(1)) + "]");
    return detail::softmax_attention(q, k, v, mask.allowed().to(q.device()), scale_logits);
}

ChannelAttentionImpl::ChannelAttentionImpl(const ChannelAttentionOptions& opts) : options(opts) {
    if (opts.in_channels < 1 || opts.out_channels < 1 || opts.reduction < 1)
        throw ConfigError("channel attention needs positive channel counts and reduction");
    const int64_t hidden = std::max<int64_t>(1, opts.in_channels / opts.reduction);
    squeeze = register_module("squeeze", torch::nn::Linear(torch::nn::LinearOptions(opts.in_channels, hidden).bias(opts.bias)));
    excite = register_module("excite", torch::nn::Linear(torch::nn::LinearOptions(hidden, opts.in_channels).bias(opts.bias)));
    project = register_module(
        "project",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(opts.in_channels, opts.out_channels, 1).bias(opts.bias)));
}

torch::Tensor ChannelAttentionImpl::gate(const torch::Tensor& f) {
    auto pooled = f.mean({2, 3});
    auto g = excite(torch::gelu(squeeze(pooled)));
    return options.gate_sigmoid ? torch::sigmoid(g) : g;
}

torch::Tensor ChannelAttentionImpl::forward(const torch::Tensor& f) {
    if (f.dim() != 4 || f.size(1) != options.in_channels)
        throw InputError("channel attention expects [b," + std::to_string(options.in_channels) +
                         ",h,w], got " + shape_string(f));
    auto g = gate(f);
    return project(f * g.unsqueeze(-1).unsqueeze(-1));
}

AttentionProjectionsImpl::AttentionProjectionsImpl(const ProjectionOptions& opts) : options(opts) {
    if (opts.width < 1 || opts.heads < 1 || opts.width % opts.heads != 0)
        throw ConfigError("attention width " + std::to_string(opts.width) + " must be a positive multiple of heads " +
                          std::to_string(opts.heads));
    auto lin = [&](int64_t in) {
        return torch::nn::Linear(torch::nn::LinearOptions(in, opts.width).bias(opts.bias));
    };
    q_proj = register_module("q_proj", lin(opts.query_channels));
    k_proj = register_module("k_proj", lin(opts.key_channels));
    v_proj = register_module("v_proj", lin(opts.key_channels));
}

torch::Tensor AttentionProjectionsImpl::attend_tokens(const torch::Tensor& q, const torch::Tensor& k,
                                                      const torch::Tensor& v, const torch::Tensor& allowed) const {
    if (options.heads == 1)
        return detail::softmax_attention(q, k, v, allowed, options.scale_logits);
    const int64_t b = q.size(0), heads = options.heads, d = options.width / heads;
    auto split = [&](const torch::Tensor& t) { return t.reshape({b, t.size(1), heads, d}).permute({0, 2, 1, 3}); };
    auto head_allowed = allowed.defined() ? allowed.unsqueeze(1) : allowed;
    auto out = detail::softmax_attention(split(q), split(k), split(v), head_allowed, options.scale_logits);
    return out.permute({0, 2, 1, 3}).reshape({b, q.size(1), options.width});
}

torch::Tensor AttentionProjectionsImpl::forward(const torch::Tensor& query_map, const torch::Tensor& kv_map) {
    auto q = q_proj(to_tokens(query_map));
    auto kv = to_tokens(kv_map);
    auto out = attend_tokens(q, k_proj(kv), v_proj(kv), torch::Tensor());
    return from_tokens(out, query_map.size(2), query_map.size(3));
}

torch::Tensor AttentionProjectionsImpl::forward_masked(const torch::Tensor& query_map, const torch::Tensor& kv_map,
                                                       const MaskMatrix& mask) {
    const int64_t n_q = query_map.size(2) * query_map.size(3);
    const int64_t n_k = kv_map.size(2) * kv_map.size(3);
    if (!mask.fits(query_map.size(0), n_q, n_k))
        throw InputError("mask " + shape_string(mask.allowed()) + " does not match " + std::to_string(n_q) +
                         " queries x " + std::to_string(n_k) + " keys");
    auto q = q_proj(to_tokens(query_map));
    auto kv = to_tokens(kv_map);
    auto out = attend_tokens(q, k_proj(kv), v_proj(kv), mask.allowed().to(query_map.device()));
    return from_tokens(out, query_map.size(2), query_map.size(3));
}

} // namespace usod
