#include "usod/model.hpp"

#include "usod/errors.hpp"
#include "usod/tensor_ops.hpp"

namespace usod {

void ModelConfig::validate() const {
    backbone.validate();
    if (width < 1 || heads < 1 || width % heads != 0)
        throw ConfigError("model.width must be a positive multiple of model.heads");
    if (partition.min_size != 0)
        partition.validate();
    else
        PartitionConfig{partition.p_threshold, 1, partition.mode, partition.occupancy_norm, partition.random_split_prob,
                        partition.random_seed}
            .validate();
    if (refine.stages < 1 || refine.stages > 3)
        throw ConfigError("ura.stages must be 1..3");
}

MiaConfig ModelConfig::mia_config() const {
    MiaConfig c;
    c.width = width;
    c.heads = heads;
    c.bias = bias;
    c.scale_logits = scale_logits;
    c.gate_sigmoid = gate_sigmoid;
    c.enabled = mia_enabled;
    c.scheme = scheme;
    return c;
}

SscaConfig ModelConfig::ssca_config() const {
    return SscaConfig{width, heads, bias, scale_logits, ssca_enabled};
}

SaliencyNetImpl::SaliencyNetImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    backbone = register_module("backbone", Backbone(config_.backbone));
    mia = register_module("mia", Mia(config_.backbone.stage_channels, config_.mia_config()));
    ssca = register_module("ssca", Ssca(config_.ssca_config(), config_.backbone));
    if (config_.refine.enabled)
        refiner = register_module("refiner", Refiner(config_.refine, config_.width, config_.backbone.stage_channels[0],
                                                     config_.heads, config_.bias, config_.scale_logits));
}

PartitionConfig SaliencyNetImpl::resolved_partition(int64_t input_height) const {
    PartitionConfig p = config_.partition;
    if (p.min_size == 0)
        p.min_size = std::max<int64_t>(1, input_height / 32);
    return p;
}

torch::Tensor prediction_boundary(const torch::Tensor& logits) {
    namespace F = torch::nn::functional;
    auto fg = (logits.detach() > 0).to(logits.scalar_type());
    auto pool = F::MaxPool2dFuncOptions(3).stride(1).padding(1);
    auto dilated = F::max_pool2d(fg, pool);
    auto eroded = -F::max_pool2d(-fg, pool);
    return 0.5 * (dilated - eroded);
}

NetOutput SaliencyNetImpl::forward(const torch::Tensor& image, const ForwardOptions& options) {
    auto pyramid = backbone->forward(image);
    auto interacted = mia->forward(pyramid);
    auto decoded = ssca->forward(interacted);

    NetOutput out;
    out.side = decoded.logits;
    const int64_t H = image.size(2), W = image.size(3);
    if (refiner) {
        RefineRequest request;
        request.mode = options.mode;
        request.stage_factors = options.stage_factors;
        request.input_size = {H, W};
        request.stage.partition = resolved_partition(H);
        request.stage.guidance = config_.refine.guidance;
        request.stage.mask_axis = config_.refine.mask_axis;
        request.stage.salt = options.partition_salt;
        request.stage.boundary = options.boundary;
        if (config_.refine.guidance == Guidance::Boundary && !options.boundary.defined())
            request.stage.boundary = prediction_boundary(decoded.prediction(1));
        auto refined = refiner->forward(decoded, pyramid[0], request);
        out.refined = refined.logits;
        out.uncertainty = refined.uncertainty;
        for (const auto& c : refined.costs)
            out.cost += c;
        out.pre_resize_logits = refined.output_logits;
    } else {
        out.pre_resize_logits = decoded.prediction(1);
    }
    out.final_logits = resize_bilinear(out.pre_resize_logits, H, W);
    return out;
}

torch::Tensor SaliencyNetImpl::predict(const torch::Tensor& image, const ForwardOptions& options) {
    return torch::sigmoid(forward(image, options).final_logits);
}

std::vector<torch::Tensor> SaliencyNetImpl::backbone_parameters() const {
    return backbone->parameters();
}

std::vector<torch::Tensor> SaliencyNetImpl::decoder_parameters() const {
    std::vector<torch::Tensor> params;
    for (const auto& m : {std::static_pointer_cast<torch::nn::Module>(mia.ptr()),
                          std::static_pointer_cast<torch::nn::Module>(ssca.ptr())})
        for (auto& p : m->parameters())
            params.push_back(p);
    if (refiner)
        for (auto& p : refiner->parameters())
            params.push_back(p);
    return params;
}

} // namespace usod
