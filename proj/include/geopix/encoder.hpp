#pragma once

#include <array>
#include <map>

#include <torch/torch.h>

#include "geopix/config.hpp"

namespace geopix {

// Encoder outputs v1..v4 at strides 4, 8, 16, 32, each [B, C_h, S/stride, S/stride].
struct FeaturePyramid {
    static constexpr std::array<int, 4> kStrides{4, 8, 16, 32};
    std::array<torch::Tensor, 4> levels;

    const torch::Tensor& v1() const { return levels[0]; }
    const torch::Tensor& v4() const { return levels[3]; }
    // Rows of every level gathered by batch index.
    FeaturePyramid select(const torch::Tensor& batch_index) const;
};

class WindowAttentionImpl : public torch::nn::Module {
public:
    WindowAttentionImpl(int64_t dim, int64_t heads, int64_t window);
    // x: [num_windows * B, w*w, C]; shift_mask: [num_windows, w*w, w*w] additive, or undefined.
    torch::Tensor forward(const torch::Tensor& x, int64_t window, const torch::Tensor& shift_mask);

private:
    torch::Tensor relative_index(int64_t window);

    int64_t dim_, heads_, max_window_;
    torch::nn::Linear qkv{nullptr}, proj{nullptr};
    torch::Tensor bias_table_;
    std::map<int64_t, torch::Tensor> index_cache_;
};
TORCH_MODULE(WindowAttention);

class SwinBlockImpl : public torch::nn::Module {
public:
    SwinBlockImpl(int64_t dim, int64_t heads, int64_t window, bool shifted, double mlp_ratio);
    // x: [B, H*W, C]
    torch::Tensor forward(const torch::Tensor& x, int64_t height, int64_t width);

private:
    int64_t dim_, window_;
    bool shifted_;
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    WindowAttention attn{nullptr};
    torch::nn::Sequential mlp{nullptr};
};
TORCH_MODULE(SwinBlock);

class PatchMergingImpl : public torch::nn::Module {
public:
    explicit PatchMergingImpl(int64_t dim);
    torch::Tensor forward(const torch::Tensor& x, int64_t height, int64_t width);

private:
    torch::nn::LayerNorm norm{nullptr};
    torch::nn::Linear reduction{nullptr};
};
TORCH_MODULE(PatchMerging);

// Hierarchical shifted-window transformer: 4x4 patch embedding, four stages joined by
// 2x2 patch merging, each stage output layer-normalized before merging.
class SwinEncoderImpl : public torch::nn::Module {
public:
    explicit SwinEncoderImpl(const EncoderConfig& config);

    // images: [B, 3, S, S] with S divisible by 32.
    FeaturePyramid forward(const torch::Tensor& images);

    const EncoderConfig& config() const { return config_; }
    void set_frozen(bool frozen);

private:
    EncoderConfig config_;
    torch::nn::Conv2d patch_embed{nullptr};
    torch::nn::LayerNorm patch_norm{nullptr};
    std::array<torch::nn::ModuleList, 4> stages;
    std::array<torch::nn::LayerNorm, 4> out_norms{nullptr, nullptr, nullptr, nullptr};
    std::array<PatchMerging, 3> merges{nullptr, nullptr, nullptr};
};
TORCH_MODULE(SwinEncoder);

}  // namespace geopix
