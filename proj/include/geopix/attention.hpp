#pragma once

#include <torch/torch.h>

namespace geopix {

// Multi-head scaled dot-product attention over [B, L, D] inputs.
class MultiheadAttentionImpl : public torch::nn::Module {
public:
    MultiheadAttentionImpl(int64_t dim, int64_t heads);

    // blocked: optional bool tensor broadcastable to [B, heads, Lq, Lk]; true marks a
    // disallowed key. Callers guarantee every query row keeps at least one key.
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                          const torch::Tensor& blocked = {});

    torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

private:
    int64_t dim_;
    int64_t heads_;
};
TORCH_MODULE(MultiheadAttention);

}  // namespace geopix
