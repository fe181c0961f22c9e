#include "geopix/mask_generator.hpp"

#include <cmath>
#include <numbers>

#include "geopix/errors.hpp"

namespace geopix {

namespace F = torch::nn::functional;

DProjectorImpl::DProjectorImpl(int64_t lm_dim, std::array<int64_t, 3> level_channels, int64_t dim, int64_t heads) {
    in_proj = register_module("in_proj", torch::nn::Linear(lm_dim, dim));
    for (int i = 0; i < 3; ++i) {
        level_proj[i] = register_module("level_proj" + std::to_string(i), torch::nn::Linear(level_channels[i], dim));
    }
    level_embed = register_module("level_embed", torch::nn::Embedding(3, dim));
    cross_attn = register_module("cross_attn", MultiheadAttention(dim, heads));
    out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor DProjectorImpl::pool(const std::vector<DescriptionEmbeddings>& descriptions) {
    if (descriptions.empty()) throw std::invalid_argument("d_projector: no descriptions");
    std::vector<torch::Tensor> means;
    means.reserve(descriptions.size());
    for (const auto& d : descriptions) {
        if (!d.vectors.defined() || d.vectors.size(0) == 0) {
            throw std::invalid_argument("d_projector: empty description embeddings");
        }
        means.push_back(d.vectors.mean(0));
    }
    return torch::stack(means, 0);
}

torch::Tensor DProjectorImpl::forward(const std::vector<DescriptionEmbeddings>& descriptions, const FeaturePyramid& pyramid) {
    const auto global = in_proj(pool(descriptions));
    std::vector<torch::Tensor> memory;
    for (int i = 0; i < 3; ++i) {
        const auto& level = pyramid.levels[i + 1];
        if (level.size(0) != global.size(0)) {
            throw std::invalid_argument("d_projector: pyramid batch does not match the number of descriptions");
        }
        const auto idx = torch::full({1}, i, torch::TensorOptions().dtype(torch::kLong).device(level.device()));
        memory.push_back(level_proj[i](level.flatten(2).transpose(1, 2)) + level_embed(idx));
    }
    const auto keys = torch::cat(memory, 1);
    const auto context = cross_attn(global.unsqueeze(1), keys, keys).squeeze(1);
    return out_proj(global + context);
}

PixelDecoderOutput PixelDecoderOutput::select(const torch::Tensor& batch_index) const {
    PixelDecoderOutput out;
    out.mask_features = mask_features.index_select(0, batch_index);
    for (std::size_t i = 0; i < multi_scale.size(); ++i) out.multi_scale[i] = multi_scale[i].index_select(0, batch_index);
    return out;
}

PixelDecoderImpl::PixelDecoderImpl(std::array<int64_t, 4> channels, int64_t dim, int64_t groups) {
    for (int i = 0; i < 4; ++i) {
        lateral[i] = register_module("lateral" + std::to_string(i), torch::nn::Conv2d(torch::nn::Conv2dOptions(channels[i], dim, 1)));
        fuse[i] = register_module(
            "fuse" + std::to_string(i),
            torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, 3).padding(1).bias(false)),
                                  torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, dim)), torch::nn::ReLU()));
    }
    mask_proj = register_module("mask_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, 1)));
}

PixelDecoderOutput PixelDecoderImpl::forward(const FeaturePyramid& pyramid) {
    std::array<torch::Tensor, 4> fused;
    fused[3] = fuse[3]->forward(lateral[3](pyramid.levels[3]));
    for (int i = 2; i >= 0; --i) {
        const auto lat = lateral[i](pyramid.levels[i]);
        const auto up = F::interpolate(fused[i + 1], F::InterpolateFuncOptions()
                                                          .size(std::vector<int64_t>{lat.size(2), lat.size(3)})
                                                          .mode(torch::kNearest));
        fused[i] = fuse[i]->forward(lat + up);
    }
    PixelDecoderOutput out;
    out.mask_features = mask_proj(fused[0]);
    out.multi_scale = {fused[3], fused[2], fused[1]};
    return out;
}

MaskDecoderLayerImpl::MaskDecoderLayerImpl(int64_t dim, int64_t heads, int64_t ffn_dim) {
    cross_attn = register_module("cross_attn", MultiheadAttention(dim, heads));
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    self_attn = register_module("self_attn", MultiheadAttention(dim, heads));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    ffn = register_module("ffn", torch::nn::Sequential(torch::nn::Linear(dim, ffn_dim), torch::nn::ReLU(),
                                                       torch::nn::Linear(ffn_dim, dim)));
    norm3 = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

torch::Tensor MaskDecoderLayerImpl::forward(const torch::Tensor& query, const torch::Tensor& memory,
                                            const torch::Tensor& memory_pos, const torch::Tensor& blocked) {
    auto q = norm1(query + cross_attn(query, memory + memory_pos, memory, blocked));
    q = norm2(q + self_attn(q, q, q));
    return norm3(q + ffn->forward(q));
}

MaskDecoderImpl::MaskDecoderImpl(int64_t dim, int64_t heads, int64_t ffn_dim, int layers, double threshold)
    : threshold_(threshold) {
    if (layers < 1) throw ConfigError("mask decoder needs at least one layer");
    layers_ = register_module("layers", torch::nn::ModuleList());
    for (int i = 0; i < layers; ++i) layers_->push_back(MaskDecoderLayer(dim, heads, ffn_dim));
    decoder_norm = register_module("decoder_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    level_embed = register_module("level_embed", torch::nn::Embedding(3, dim));
    mask_embed = register_module("mask_embed", torch::nn::Sequential(torch::nn::Linear(dim, dim), torch::nn::ReLU(),
                                                                     torch::nn::Linear(dim, dim), torch::nn::ReLU(),
                                                                     torch::nn::Linear(dim, dim)));
}

torch::Tensor MaskDecoderImpl::predict_mask(const torch::Tensor& query, const torch::Tensor& mask_features) {
    const auto embedding = mask_embed->forward(decoder_norm(query));
    return torch::einsum("nd,ndhw->nhw", {embedding, mask_features});
}

torch::Tensor MaskDecoderImpl::attention_mask(const torch::Tensor& logits, int64_t height, int64_t width) const {
    torch::NoGradGuard guard;
    const auto resized = F::interpolate(logits.unsqueeze(1), F::InterpolateFuncOptions()
                                                                 .size(std::vector<int64_t>{height, width})
                                                                 .mode(torch::kBilinear)
                                                                 .align_corners(false));
    auto blocked = (torch::sigmoid(resized).flatten(1) < threshold_);  // [N, L]
    const auto all_blocked = blocked.all(1, true);
    return blocked.logical_and(all_blocked.logical_not());
}

MaskDecoderOutput MaskDecoderImpl::forward(const torch::Tensor& query, const PixelDecoderOutput& features) {
    if (query.size(0) != features.mask_features.size(0)) {
        throw std::invalid_argument("mask decoder: query count does not match feature batch");
    }
    MaskDecoderOutput out;
    auto q = query.unsqueeze(1);
    out.predictions.push_back(predict_mask(query, features.mask_features));
    for (int l = 0; l < layers(); ++l) {
        const int level = l % 3;
        const auto& feat = features.multi_scale[static_cast<std::size_t>(level)];
        const int64_t h = feat.size(2), w = feat.size(3), dim = feat.size(1);
        const auto idx = torch::full({1}, level, torch::TensorOptions().dtype(torch::kLong).device(feat.device()));
        const auto memory = feat.flatten(2).transpose(1, 2) + level_embed(idx);
        const auto pos = sine_position_encoding(h, w, dim, feat.options()).unsqueeze(0);
        const auto blocked = attention_mask(out.predictions.back(), h, w).view({q.size(0), 1, 1, h * w});
        q = layers_[l]->as<MaskDecoderLayerImpl>()->forward(q, memory, pos, blocked);
        out.predictions.push_back(predict_mask(q.squeeze(1), features.mask_features));
    }
    out.query = q.squeeze(1);
    return out;
}

torch::Tensor sine_position_encoding(int64_t height, int64_t width, int64_t dim, const torch::TensorOptions& options) {
    const int64_t half = dim / 2;
    const auto o = options.requires_grad(false);
    const auto k = torch::arange(half, o);
    const auto freq = torch::pow(10000.0, 2.0 * torch::floor(k / 2.0) / static_cast<double>(half));
    const double two_pi = 2.0 * std::numbers::pi;
    const auto ys = (torch::arange(height, o) + 1.0) / static_cast<double>(height) * two_pi;
    const auto xs = (torch::arange(width, o) + 1.0) / static_cast<double>(width) * two_pi;
    auto encode = [&](const torch::Tensor& coord) {
        const auto angles = coord.unsqueeze(1) / freq.unsqueeze(0);  // [n, half]
        const auto even = (k.remainder(2) == 0).unsqueeze(0);
        return torch::where(even, torch::sin(angles), torch::cos(angles));
    };
    const auto py = encode(ys).unsqueeze(1).expand({height, width, half});
    const auto px = encode(xs).unsqueeze(0).expand({height, width, half});
    auto pos = torch::cat({py, px}, -1).reshape({height * width, 2 * half});
    if (2 * half < dim) pos = torch::cat({pos, torch::zeros({height * width, dim - 2 * half}, o)}, 1);
    return pos;
}

MaskPrediction make_prediction(const torch::Tensor& logits, int64_t image_size, double threshold) {
    MaskPrediction p;
    p.logits = logits;
    p.threshold = threshold;
    const auto up = F::interpolate(logits.unsqueeze(1), F::InterpolateFuncOptions()
                                                            .size(std::vector<int64_t>{image_size, image_size})
                                                            .mode(torch::kBilinear)
                                                            .align_corners(false));
    p.probabilities = torch::sigmoid(up).squeeze(1);
    return p;
}

}  // namespace geopix
