#pragma once

#include "usod/adp.hpp"
#include "usod/backbone.hpp"
#include "usod/mia.hpp"
#include "usod/ssca.hpp"
#include "usod/ura.hpp"

#include <torch/torch.h>

#include <array>
#include <vector>

namespace usod {

struct ModelConfig {
    BackboneConfig backbone;
    int64_t width = 64;
    int64_t heads = 1;
    bool bias = true;
    bool scale_logits = false;
    bool gate_sigmoid = false;
    bool mia_enabled = true;
    InteractionScheme scheme = InteractionScheme::default_scheme();
    bool ssca_enabled = true;
    RefineConfig refine;
    /// min_size 0 resolves to input_side / 32 (at least 1) on every forward call.
    PartitionConfig partition{0.2, 0};

    void validate() const;
    MiaConfig mia_config() const;
    SscaConfig ssca_config() const;
};

struct ForwardOptions {
    RunMode mode = RunMode::Train;
    StageFactors stage_factors = kDefaultStageFactors;
    uint64_t partition_salt = 0;
    torch::Tensor boundary;
};

/// Everything a forward pass produces. Logit maps stay at their native resolution;
/// `final_logits` is the model output resized to the input resolution.
struct NetOutput {
    std::array<torch::Tensor, 3> side;      ///< S_1 .. S_3 logits
    std::vector<torch::Tensor> refined;     ///< R_1 .. R_3 logits (empty when refinement is off)
    std::vector<UncertaintyMap> uncertainty;
    CostReport cost;
    torch::Tensor final_logits;
    torch::Tensor pre_resize_logits;        ///< final head output before the resize to input size
};

/// 3x3 morphological edge of the binarized prediction, scaled to 0.5: the guidance map used for
/// Guidance::Boundary when no external map is supplied.
torch::Tensor prediction_boundary(const torch::Tensor& logits);

/// Backbone -> MIA -> SSCA decoder -> uncertainty refinement.
class SaliencyNetImpl : public torch::nn::Module {
public:
    explicit SaliencyNetImpl(const ModelConfig& config);

    NetOutput forward(const torch::Tensor& image, const ForwardOptions& options = {});
    /// Sigmoid of final_logits, [b, 1, H, W].
    torch::Tensor predict(const torch::Tensor& image, const ForwardOptions& options = {});

    /// Partition configuration with min_size resolved for an input of the given height.
    PartitionConfig resolved_partition(int64_t input_height) const;

    std::vector<torch::Tensor> backbone_parameters() const;
    std::vector<torch::Tensor> decoder_parameters() const;

    const ModelConfig& config() const { return config_; }

    Backbone backbone{nullptr};
    Mia mia{nullptr};
    Ssca ssca{nullptr};
    Refiner refiner{nullptr};

private:
    ModelConfig config_;
};
TORCH_MODULE(SaliencyNet);

} // namespace usod
