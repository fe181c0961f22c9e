#include "geopix/connector.hpp"

#include "geopix/errors.hpp"

namespace geopix {

TokenCompressorImpl::TokenCompressorImpl(const ConnectorConfig& config) : config_(config) {
    config_.validate();
    norms = register_module("norms", torch::nn::ModuleList());
    convs = register_module("convs", torch::nn::ModuleList());
    const int64_t c = config_.in_channels;
    for (int i = 0; i < config_.depth; ++i) {
        norms->push_back(torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
        convs->push_back(torch::nn::Conv2d(
            torch::nn::Conv2dOptions(c, c, config_.kernel).stride(config_.stride).padding(config_.kernel / 2)));
    }
    final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({c})));
    projection = register_module("projection", torch::nn::Linear(c, config_.out_dim));
}

torch::Tensor TokenCompressorImpl::forward(const torch::Tensor& v4) {
    if (v4.dim() != 4 || v4.size(1) != config_.in_channels) {
        throw std::invalid_argument("connector expects [B, " + std::to_string(config_.in_channels) + ", h, w]");
    }
    auto x = v4;
    for (int i = 0; i < config_.depth; ++i) {
        if (x.size(2) % config_.stride != 0 || x.size(3) % config_.stride != 0) {
            throw ConfigError("connector: feature side " + std::to_string(x.size(2)) + " not divisible by stride^d (d = " +
                              std::to_string(config_.depth) + ")");
        }
        // Normalize channels per spatial location, then downsample.
        x = norms[i]->as<torch::nn::LayerNormImpl>()->forward(x.permute({0, 2, 3, 1})).permute({0, 3, 1, 2});
        x = convs[i]->as<torch::nn::Conv2dImpl>()->forward(x);
    }
    const auto tokens = x.flatten(2).transpose(1, 2);
    return projection(final_norm(tokens));
}

}  // namespace geopix
