#pragma once

#include <torch/torch.h>

#include "geopix/config.hpp"

namespace geopix {

// Token compression connector: d blocks of channel-wise layer norm followed by a
// stride-2 convolution, then a final layer norm and linear projection into the LM width.
// Each block quarters the token count; d = 0 reduces to norm + projection.
class TokenCompressorImpl : public torch::nn::Module {
public:
    explicit TokenCompressorImpl(const ConnectorConfig& config);

    // v4: [B, C4, h, w] -> [B, (h / 2^d) * (w / 2^d), out_dim], flattened row-major.
    torch::Tensor forward(const torch::Tensor& v4);

    const ConnectorConfig& config() const { return config_; }

private:
    ConnectorConfig config_;
    torch::nn::ModuleList norms, convs;
    torch::nn::LayerNorm final_norm{nullptr};
    torch::nn::Linear projection{nullptr};
};
TORCH_MODULE(TokenCompressor);

}  // namespace geopix
