#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

namespace usod {

inline constexpr int kPyramidLevels = 5;

struct BackboneConfig {
    int64_t in_channels = 3;
    std::array<int64_t, kPyramidLevels> stage_channels{16, 24, 32, 48, 64};
    /// Downsample factor of each level relative to the input.
    std::array<int64_t, kPyramidLevels> strides{2, 4, 8, 16, 32};
    int64_t blocks_per_stage = 1;
    bool bias = false;

    /// Throws ConfigError on non-increasing strides, non-dividing strides or empty stages.
    void validate() const;
};

/// F_0 .. F_4, highest resolution first.
struct FeaturePyramid {
    std::array<torch::Tensor, kPyramidLevels> levels;

    const torch::Tensor& operator[](std::size_t i) const { return levels[i]; }
    torch::Tensor& operator[](std::size_t i) { return levels[i]; }
};

/// Conv-BN-ReLU pair with an optional projection shortcut; a ResNet basic block.
class ResidualBlockImpl : public torch::nn::Module {
public:
    ResidualBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride, bool bias);
    torch::Tensor forward(const torch::Tensor& x);

private:
    torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
    torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, shortcut_bn_{nullptr};
};
TORCH_MODULE(ResidualBlock);

/// Small from-scratch encoder: a strided convolution stem produces F_0, then four residual
/// stages each reduce the resolution by strides[i] / strides[i-1].
class BackboneImpl : public torch::nn::Module {
public:
    explicit BackboneImpl(const BackboneConfig& config);

    /// image [b, in_channels, H, W]; H and W must be divisible by strides[4].
    FeaturePyramid forward(const torch::Tensor& image);

    const BackboneConfig& config() const { return config_; }

private:
    BackboneConfig config_;
    torch::nn::Sequential stem_{nullptr};
    std::array<torch::nn::Sequential, kPyramidLevels - 1> stages_{nullptr, nullptr, nullptr, nullptr};
};
TORCH_MODULE(Backbone);

} // namespace usod
