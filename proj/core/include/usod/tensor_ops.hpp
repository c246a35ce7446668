#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

namespace usod {

/// [b, C, h, w] -> [b, h*w, C], row-major over (row, column).
inline torch::Tensor to_tokens(const torch::Tensor& map) {
    return map.flatten(2).transpose(1, 2);
}

/// [b, h*w, C] -> [b, C, h, w].
inline torch::Tensor from_tokens(const torch::Tensor& tokens, int64_t h, int64_t w) {
    return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), h, w});
}

/// Bilinear resampling with align_corners off. Returns the input when the size already matches.
inline torch::Tensor resize_bilinear(const torch::Tensor& map, int64_t h, int64_t w) {
    if (map.size(2) == h && map.size(3) == w)
        return map;
    namespace F = torch::nn::functional;
    return F::interpolate(map, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{h, w})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
}

inline torch::Tensor resize_like(const torch::Tensor& map, const torch::Tensor& ref) {
    return resize_bilinear(map, ref.size(2), ref.size(3));
}

inline std::string shape_string(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(t.size(i));
    }
    return s + "]";
}

} // namespace usod
