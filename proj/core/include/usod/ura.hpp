#pragma once

#include "usod/adp.hpp"
#include "usod/attention.hpp"
#include "usod/ssca.hpp"

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

namespace usod {

/// Saturation threshold t in U_hat = t - |S - t|.
inline constexpr double kUncertaintyThreshold = 0.5;
inline constexpr int64_t kUncertaintyKernelSize = 7;
inline constexpr double kUncertaintySigma = 1.0;
/// Probabilities are clamped to [eps, 1 - eps] before converting back to logits.
inline constexpr double kProbabilityEps = 1e-6;

/// Normalized size x size Gaussian kernel (sum 1), as a double tensor.
torch::Tensor gaussian_kernel(int64_t size = kUncertaintyKernelSize, double sigma = kUncertaintySigma);

/// U in [0, t], [b, 1, h, w].
struct UncertaintyMap {
    torch::Tensor values;

    /// U > 0.01 as a boolean map.
    torch::Tensor binarize() const { return values > kUncertainCutoff; }
};

/// U = Gaussian_{7, sigma=1}(t - |S - t|) with replicate padding. S must lie in [0, 1].
UncertaintyMap uncertainty_generate(const torch::Tensor& probability);

/// Mask over an attention call with n_q queries and keys laid out on `key_grid` (h, w).
/// U is bilinearly resampled to the key grid, then thresholded at 0.01. With MaskAxis::Queries
/// the grid is interpreted as the query grid instead and n_q must equal its area.
MaskMatrix build_mask(const UncertaintyMap& u, int64_t n_q, std::pair<int64_t, int64_t> key_grid,
                      MaskAxis axis = MaskAxis::Keys);

/// Where the refinement mask comes from.
enum class Guidance { Uncertainty, None, Boundary };
enum class RunMode { Train, Infer };

std::string to_string(Guidance guidance);
Guidance parse_guidance(const std::string& text);
std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& text);

/// Upsampling factors for inference: entries 0 and 1 resize between stages 1->2 and 2->3,
/// entry 2 resizes the last stage's output. A factor of 0 means "straight to input resolution";
/// every size is capped at the input resolution.
using StageFactors = std::array<double, 3>;
inline constexpr StageFactors kDefaultStageFactors{2.0, 2.0, 0.0};

StageFactors parse_stage_factors(const std::string& text);
std::string stage_factors_string(const StageFactors& factors);

struct RefineConfig {
    bool enabled = true;
    int stages = 3;
    Guidance guidance = Guidance::Uncertainty;
    MaskAxis mask_axis = MaskAxis::Keys;
    StageFactors stage_factors = kDefaultStageFactors;
};

/// Feature and prediction carried from one refinement stage to the next.
struct RefineState {
    torch::Tensor feature;     ///< F^R, [b, C, h, w]
    torch::Tensor probability; ///< P in [0, 1], [b, 1, h, w]
    int stage = 0;             ///< stages completed so far
    double scale = 1.0;        ///< cumulative upsampling applied since stage 1
};

struct StageOptions {
    PartitionConfig partition;
    Guidance guidance = Guidance::Uncertainty;
    MaskAxis mask_axis = MaskAxis::Keys;
    uint64_t salt = 0;
    torch::Tensor boundary; ///< [b, 1, H, W] external guidance map for Guidance::Boundary
};

struct StageOutput {
    RefineState state;
    torch::Tensor logits; ///< R_j at the stage resolution
    UncertaintyMap uncertainty;
    CostReport cost;
};

/// One uncertainty refinement attention stage:
///   U = uncertainty_generate(P);  F' = BN(chi(ADP(F^R, resize(F_0), U)));
///   logits = logit(clamp(P)) + conv_1x1(F').
class UraStageImpl : public torch::nn::Module {
public:
    UraStageImpl(int64_t width, int64_t low_channels, int64_t heads, bool bias, bool scale_logits);

    StageOutput forward(const RefineState& state, const torch::Tensor& low_level, const StageOptions& options);

    AttentionProjections attention{nullptr};
    torch::nn::Conv2d fuse{nullptr};
    torch::nn::BatchNorm2d norm{nullptr};
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UraStage);

struct RefineOutput {
    std::vector<torch::Tensor> logits;          ///< R_1 .. R_n, each at its stage resolution
    std::vector<UncertaintyMap> uncertainty;    ///< U consumed by each stage
    std::vector<CostReport> costs;
    torch::Tensor output_logits;                ///< R_n after the final output factor (before any resize to input)
};

struct RefineRequest {
    RunMode mode = RunMode::Train;
    StageFactors stage_factors = kDefaultStageFactors;
    std::pair<int64_t, int64_t> input_size{0, 0};
    StageOptions stage;
};

/// Three consecutive URA stages starting from F_1^S and S_1. In training all stages run at
/// F_1's resolution; in inference the state is upsampled between stages toward the input size.
class RefinerImpl : public torch::nn::Module {
public:
    RefinerImpl(const RefineConfig& config, int64_t width, int64_t low_channels, int64_t heads, bool bias,
                bool scale_logits);

    RefineOutput forward(const SscaState& ssca, const torch::Tensor& low_level, const RefineRequest& request);

    /// Spatial size of each stage and of the final output for a given base grid.
    static std::vector<std::pair<int64_t, int64_t>> schedule(std::pair<int64_t, int64_t> base,
                                                              std::pair<int64_t, int64_t> input, RunMode mode,
                                                              const StageFactors& factors, int stages);

    const RefineConfig& config() const { return config_; }

    std::vector<UraStage> stages;

private:
    RefineConfig config_;
};
TORCH_MODULE(Refiner);

} // namespace usod
