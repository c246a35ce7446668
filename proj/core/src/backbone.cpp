#include "usod/backbone.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

#include <string>

namespace usod {

namespace nn = torch::nn;

void BackboneConfig::validate() const {
    if (in_channels < 1)
        throw ConfigError("backbone.in_channels must be >= 1");
    if (blocks_per_stage < 1)
        throw ConfigError("backbone.blocks_per_stage must be >= 1");
    for (int i = 0; i < kPyramidLevels; ++i) {
        if (stage_channels[i] < 1)
            throw ConfigError("backbone.stage_channels[" + std::to_string(i) + "] must be >= 1");
        if (strides[i] < 1)
            throw ConfigError("backbone.strides[" + std::to_string(i) + "] must be >= 1");
        if (i > 0) {
            if (strides[i] <= strides[i - 1])
                throw ConfigError("backbone.strides must be strictly increasing");
            if (strides[i] % strides[i - 1] != 0)
                throw ConfigError("backbone.strides[" + std::to_string(i - 1) + "] must divide strides[" +
                                  std::to_string(i) + "]");
        }
    }
}

ResidualBlockImpl::ResidualBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride, bool bias) {
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3)
                                                     .stride(stride).padding(1).bias(bias)));
    bn1_ = register_module("bn1", nn::BatchNorm2d(out_channels));
    conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3)
                                                     .padding(1).bias(bias)));
    bn2_ = register_module("bn2", nn::BatchNorm2d(out_channels));
    if (stride != 1 || in_channels != out_channels) {
        shortcut_ = register_module("shortcut", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1)
                                                               .stride(stride).bias(bias)));
        shortcut_bn_ = register_module("shortcut_bn", nn::BatchNorm2d(out_channels));
    }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_(conv1_(x)));
    y = bn2_(conv2_(y));
    auto skip = shortcut_ ? shortcut_bn_(shortcut_(x)) : x;
    return torch::relu(y + skip);
}

BackboneImpl::BackboneImpl(const BackboneConfig& config) : config_(config) {
    config_.validate();
    const auto& ch = config_.stage_channels;
    // kernel 3, padding 1 and stride s maps H to H / s whenever s divides H.
    stem_ = register_module("stem", nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(config_.in_channels, ch[0], 3).stride(config_.strides[0]).padding(1).bias(config_.bias)),
        nn::BatchNorm2d(ch[0]),
        nn::ReLU()));
    for (int i = 1; i < kPyramidLevels; ++i) {
        nn::Sequential stage;
        const int64_t factor = config_.strides[i] / config_.strides[i - 1];
        stage->push_back(ResidualBlock(ch[i - 1], ch[i], factor, config_.bias));
        for (int64_t b = 1; b < config_.blocks_per_stage; ++b)
            stage->push_back(ResidualBlock(ch[i], ch[i], 1, config_.bias));
        stages_[i - 1] = register_module("stage" + std::to_string(i), stage);
    }
}

FeaturePyramid BackboneImpl::forward(const torch::Tensor& image) {
    if (image.dim() != 4)
        throw InputError("backbone expects [b,C,H,W], got " + shape_string(image));
    if (image.size(1) != config_.in_channels)
        throw InputError("backbone expects " + std::to_string(config_.in_channels) + " input channels, got " +
                         std::to_string(image.size(1)));
    const int64_t max_stride = config_.strides.back();
    if (image.size(2) % max_stride != 0)
        throw InputError("image height " + std::to_string(image.size(2)) + " is not divisible by stride " +
                         std::to_string(max_stride));
    if (image.size(3) % max_stride != 0)
        throw InputError("image width " + std::to_string(image.size(3)) + " is not divisible by stride " +
                         std::to_string(max_stride));

    FeaturePyramid pyramid;
    pyramid[0] = stem_->forward(image);
    for (int i = 1; i < kPyramidLevels; ++i)
        pyramid[i] = stages_[i - 1]->forward(pyramid[i - 1]);
    return pyramid;
}

} // namespace usod
