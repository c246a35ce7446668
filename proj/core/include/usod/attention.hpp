#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace usod {

/// Softmax(Q K^T) V over [b, n_q, C] x [b, n_k, C] x [b, n_k, C].
/// Logits are unscaled unless `scale_logits` asks for the 1/sqrt(C) factor.
torch::Tensor attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                        bool scale_logits = false);

/// Additive {0, -inf} attention mask. Stored as a boolean "allowed" tensor shaped
/// [b, n_q or 1, n_k or 1] so key-only and query-only masks broadcast without
/// materializing the dense matrix.
class MaskMatrix {
public:
    /// `allowed` is boolean and broadcastable to [b, n_q, n_k] along dims 1 and 2.
    explicit MaskMatrix(torch::Tensor allowed);

    /// Builds from explicit additive entries; anything other than 0 / -inf is rejected.
    static MaskMatrix from_additive(const torch::Tensor& entries);
    /// Mask that depends on the key position only; `key_allowed` is [b, n_k].
    static MaskMatrix over_keys(const torch::Tensor& key_allowed);
    /// Mask that blanks whole query rows; `query_allowed` is [b, n_q].
    static MaskMatrix over_queries(const torch::Tensor& query_allowed);

    const torch::Tensor& allowed() const { return allowed_; }
    int64_t batch() const { return allowed_.size(0); }

    /// Dense [b, n_q, n_k] tensor with 0 where attention is allowed and -inf elsewhere.
    torch::Tensor additive(int64_t n_q, int64_t n_k) const;

    /// True when the mask can be broadcast against the given attention shape.
    bool fits(int64_t batch, int64_t n_q, int64_t n_k) const;

private:
    torch::Tensor allowed_;
};

/// Softmax(M + Q K^T) V. Masked keys get exactly zero weight; a query row with every
/// key masked produces a zero output vector instead of NaN.
torch::Tensor mask_attention(const MaskMatrix& mask, const torch::Tensor& q, const torch::Tensor& k,
                             const torch::Tensor& v, bool scale_logits = false);

namespace detail {
// Shape-agnostic kernel shared by the public entry points and the multi-head path:
// q [..., n_q, d], k/v [..., n_k, d], allowed undefined or broadcastable to [..., n_q, n_k].
torch::Tensor softmax_attention(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                const torch::Tensor& allowed, bool scale_logits);
} // namespace detail

struct ChannelAttentionOptions {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int64_t reduction = 4;
    bool bias = true;
    /// Squash the channel gate through a sigmoid (SE style). Off keeps the gate linear after GeLU.
    bool gate_sigmoid = false;
};

/// F -> chi(F * psi(GeLU(psi(GAP(F))))), where chi is a 1x1 convolution to out_channels.
class ChannelAttentionImpl : public torch::nn::Module {
public:
    explicit ChannelAttentionImpl(const ChannelAttentionOptions& options);

    torch::Tensor forward(const torch::Tensor& f);
    /// Per-channel gate [b, in_channels].
    torch::Tensor gate(const torch::Tensor& f);

    ChannelAttentionOptions options;
    torch::nn::Linear squeeze{nullptr};
    torch::nn::Linear excite{nullptr};
    torch::nn::Conv2d project{nullptr};
};
TORCH_MODULE(ChannelAttention);

struct ProjectionOptions {
    int64_t query_channels = 0;
    int64_t key_channels = 0;
    int64_t width = 0;
    int64_t heads = 1;
    bool bias = true;
    bool scale_logits = false;
};

/// The psi projections feeding an attention call: Q from one feature map, K and V from another.
class AttentionProjectionsImpl : public torch::nn::Module {
public:
    explicit AttentionProjectionsImpl(const ProjectionOptions& options);

    /// Cross attention from query_map [b, Cq, h, w] to kv_map [b, Ck, h', w'].
    /// Returns the attention term only, shaped [b, width, h, w].
    torch::Tensor forward(const torch::Tensor& query_map, const torch::Tensor& kv_map);
    torch::Tensor forward_masked(const torch::Tensor& query_map, const torch::Tensor& kv_map,
                                 const MaskMatrix& mask);

    /// Token-level attention on already projected [b, n, width] tensors, splitting heads.
    torch::Tensor attend_tokens(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                const torch::Tensor& allowed) const;

    ProjectionOptions options;
    torch::nn::Linear q_proj{nullptr};
    torch::nn::Linear k_proj{nullptr};
    torch::nn::Linear v_proj{nullptr};
};
TORCH_MODULE(AttentionProjections);

} // namespace usod
