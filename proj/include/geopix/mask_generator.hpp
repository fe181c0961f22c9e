#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "geopix/attention.hpp"
#include "geopix/config.hpp"
#include "geopix/encoder.hpp"
#include "geopix/language_model.hpp"

namespace geopix {

// Mean-pools the description embeddings of one instruction into a global vector,
// cross-attends it to the flattened stride 8/16/32 encoder features (with per-level
// embeddings) and maps the residual sum to a single mask query.
class DProjectorImpl : public torch::nn::Module {
public:
    DProjectorImpl(int64_t lm_dim, std::array<int64_t, 3> level_channels, int64_t dim, int64_t heads);

    // descriptions[i] is [K_i, D]; pyramid rows are aligned with descriptions. Returns [N, dim].
    torch::Tensor forward(const std::vector<DescriptionEmbeddings>& descriptions, const FeaturePyramid& pyramid);

    // Mean over description tokens, [N, D].
    static torch::Tensor pool(const std::vector<DescriptionEmbeddings>& descriptions);

    torch::nn::Linear in_proj{nullptr}, out_proj{nullptr};
    MultiheadAttention cross_attn{nullptr};

private:
    std::array<torch::nn::Linear, 3> level_proj{nullptr, nullptr, nullptr};
    torch::nn::Embedding level_embed{nullptr};
};
TORCH_MODULE(DProjector);

struct PixelDecoderOutput {
    torch::Tensor mask_features;                 // [B, Dm, S/4, S/4]
    std::array<torch::Tensor, 3> multi_scale;    // strides 32, 16, 8; [B, Dm, h, w]

    PixelDecoderOutput select(const torch::Tensor& batch_index) const;
};

// Top-down lateral fusion: 1x1 laterals, nearest upsampling, 3x3 conv + group norm.
class PixelDecoderImpl : public torch::nn::Module {
public:
    PixelDecoderImpl(std::array<int64_t, 4> channels, int64_t dim, int64_t groups);
    PixelDecoderOutput forward(const FeaturePyramid& pyramid);

private:
    std::array<torch::nn::Conv2d, 4> lateral{nullptr, nullptr, nullptr, nullptr};
    std::array<torch::nn::Sequential, 4> fuse{nullptr, nullptr, nullptr, nullptr};
    torch::nn::Conv2d mask_proj{nullptr};
};
TORCH_MODULE(PixelDecoder);

class MaskDecoderLayerImpl : public torch::nn::Module {
public:
    MaskDecoderLayerImpl(int64_t dim, int64_t heads, int64_t ffn_dim);
    // query: [N, Q, D]; memory / memory_pos: [N, L, D]; blocked: [N, 1, Q, L] or undefined.
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& memory, const torch::Tensor& memory_pos,
                          const torch::Tensor& blocked);

private:
    MultiheadAttention cross_attn{nullptr}, self_attn{nullptr};
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
    torch::nn::Sequential ffn{nullptr};
};
TORCH_MODULE(MaskDecoderLayer);

struct MaskDecoderOutput {
    torch::Tensor query;                   // refined query, [N, Dm]
    std::vector<torch::Tensor> predictions;  // layers + 1 mask logits maps, each [N, S/4, S/4]
};

// Transformer decoder without a learned query pool: the per-instruction queries are refined
// with masked cross-attention (scales cycling 1/32, 1/16, 1/8), self-attention and an FFN.
class MaskDecoderImpl : public torch::nn::Module {
public:
    MaskDecoderImpl(int64_t dim, int64_t heads, int64_t ffn_dim, int layers, double threshold);

    // query: [N, Dm]; features rows aligned with the queries.
    MaskDecoderOutput forward(const torch::Tensor& query, const PixelDecoderOutput& features);

    // logits(x, y) = <MLP(norm(q)), mask_features(x, y)>, [N, h, w].
    torch::Tensor predict_mask(const torch::Tensor& query, const torch::Tensor& mask_features);

    // Keys hidden from each query: background of the previous prediction resized to (h, w).
    // Rows that would hide every key are left fully visible.
    torch::Tensor attention_mask(const torch::Tensor& logits, int64_t height, int64_t width) const;

    int layers() const { return static_cast<int>(layers_->size()); }
    torch::nn::Sequential mask_embed{nullptr};

private:
    double threshold_;
    torch::nn::ModuleList layers_;
    torch::nn::LayerNorm decoder_norm{nullptr};
    torch::nn::Embedding level_embed{nullptr};
};
TORCH_MODULE(MaskDecoder);

// Fixed 2-D sine/cosine position encoding, [h * w, dim].
torch::Tensor sine_position_encoding(int64_t height, int64_t width, int64_t dim, const torch::TensorOptions& options);

struct MaskPrediction {
    torch::Tensor logits;         // [N, S/4, S/4]
    torch::Tensor probabilities;  // [N, S, S] = sigmoid(bilinear upsample of logits)
    double threshold = 0.5;

    torch::Tensor binary() const { return probabilities > threshold; }
};

MaskPrediction make_prediction(const torch::Tensor& logits, int64_t image_size, double threshold);

}  // namespace geopix
