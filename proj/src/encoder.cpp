#include "geopix/encoder.hpp"

#include <cmath>

#include "geopix/errors.hpp"

namespace geopix {

namespace F = torch::nn::functional;

FeaturePyramid FeaturePyramid::select(const torch::Tensor& batch_index) const {
    FeaturePyramid out;
    for (std::size_t i = 0; i < levels.size(); ++i) out.levels[i] = levels[i].index_select(0, batch_index);
    return out;
}

namespace {

void init_linear(torch::nn::Linear& layer) {
    torch::NoGradGuard guard;
    layer->weight.normal_(0.0, 0.02);
    if (layer->bias.defined()) layer->bias.zero_();
}

torch::Tensor partition(const torch::Tensor& x, int64_t w) {
    const int64_t b = x.size(0), h = x.size(1), wd = x.size(2), c = x.size(3);
    return x.view({b, h / w, w, wd / w, w, c}).permute({0, 1, 3, 2, 4, 5}).reshape({-1, w * w, c});
}

torch::Tensor reverse(const torch::Tensor& windows, int64_t w, int64_t b, int64_t h, int64_t wd) {
    const int64_t c = windows.size(-1);
    return windows.view({b, h / w, wd / w, w, w, c}).permute({0, 1, 3, 2, 4, 5}).reshape({b, h, wd, c});
}

// Additive mask keeping cyclically shifted windows from attending across region seams.
torch::Tensor shift_mask(int64_t h, int64_t wd, int64_t w, int64_t shift, const torch::TensorOptions& options) {
    auto label = [&](int64_t i, int64_t extent) -> int64_t { return i < extent - w ? 0 : (i < extent - shift ? 1 : 2); };
    auto regions = torch::empty({1, h, wd, 1}, torch::kFloat32);
    auto acc = regions.accessor<float, 4>();
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < wd; ++x) acc[0][y][x][0] = static_cast<float>(label(y, h) * 3 + label(x, wd));
    }
    const auto windows = partition(regions, w).squeeze(-1);  // [nW, w*w]
    const auto diff = windows.unsqueeze(1) - windows.unsqueeze(2);
    return torch::zeros(diff.sizes(), options).masked_fill(diff != 0, -100.0);
}

}  // namespace

WindowAttentionImpl::WindowAttentionImpl(int64_t dim, int64_t heads, int64_t window)
    : dim_(dim), heads_(heads), max_window_(window) {
    qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
    proj = register_module("proj", torch::nn::Linear(dim, dim));
    init_linear(qkv);
    init_linear(proj);
    bias_table_ = register_parameter("relative_position_bias_table",
                                     torch::randn({(2 * window - 1) * (2 * window - 1), heads}) * 0.02);
}

torch::Tensor WindowAttentionImpl::relative_index(int64_t window) {
    auto it = index_cache_.find(window);
    if (it != index_cache_.end()) return it->second;
    const int64_t n = window * window;
    const int64_t span = 2 * max_window_ - 1;
    auto index = torch::empty({n * n}, torch::kLong);
    auto acc = index.accessor<int64_t, 1>();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            const int64_t dy = i / window - j / window;
            const int64_t dx = i % window - j % window;
            acc[i * n + j] = (dy + max_window_ - 1) * span + (dx + max_window_ - 1);
        }
    }
    index_cache_.emplace(window, index);
    return index;
}

torch::Tensor WindowAttentionImpl::forward(const torch::Tensor& x, int64_t window, const torch::Tensor& mask) {
    const int64_t bn = x.size(0), n = x.size(1);
    const int64_t hd = dim_ / heads_;
    const auto qkv_out = qkv(x).reshape({bn, n, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
    const auto q = qkv_out[0] * (1.0 / std::sqrt(static_cast<double>(hd)));
    const auto k = qkv_out[1];
    const auto v = qkv_out[2];
    auto attn = torch::matmul(q, k.transpose(-2, -1));
    const auto bias = bias_table_.index_select(0, relative_index(window)).view({n, n, heads_}).permute({2, 0, 1});
    attn = attn + bias.unsqueeze(0);
    if (mask.defined()) {
        const int64_t nw = mask.size(0);
        attn = (attn.view({bn / nw, nw, heads_, n, n}) + mask.unsqueeze(1).unsqueeze(0)).view({bn, heads_, n, n});
    }
    attn = torch::softmax(attn, -1);
    return proj(torch::matmul(attn, v).transpose(1, 2).reshape({bn, n, dim_}));
}

SwinBlockImpl::SwinBlockImpl(int64_t dim, int64_t heads, int64_t window, bool shifted, double mlp_ratio)
    : dim_(dim), window_(window), shifted_(shifted) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", WindowAttention(dim, heads, window));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    const auto hidden = static_cast<int64_t>(dim * mlp_ratio);
    torch::nn::Linear fc1(dim, hidden), fc2(hidden, dim);
    init_linear(fc1);
    init_linear(fc2);
    mlp = register_module("mlp", torch::nn::Sequential(fc1, torch::nn::GELU(), fc2));
}

torch::Tensor SwinBlockImpl::forward(const torch::Tensor& x, int64_t height, int64_t width) {
    const int64_t b = x.size(0);
    // Stages smaller than a window attend globally without shifting.
    int64_t w = window_;
    int64_t shift = shifted_ ? window_ / 2 : 0;
    if (std::min(height, width) <= window_) {
        w = std::min(height, width);
        shift = 0;
    }
    auto h = norm1(x).view({b, height, width, dim_});
    const int64_t pad_b = (w - height % w) % w;
    const int64_t pad_r = (w - width % w) % w;
    if (pad_b > 0 || pad_r > 0) h = F::pad(h, F::PadFuncOptions({0, 0, 0, pad_r, 0, pad_b}));
    const int64_t hp = height + pad_b, wp = width + pad_r;

    torch::Tensor mask;
    if (shift > 0) {
        h = torch::roll(h, {-shift, -shift}, {1, 2});
        mask = shift_mask(hp, wp, w, shift, x.options());
    }
    auto windows = attn(partition(h, w), w, mask);
    h = reverse(windows, w, b, hp, wp);
    if (shift > 0) h = torch::roll(h, {shift, shift}, {1, 2});
    if (pad_b > 0 || pad_r > 0) h = h.slice(1, 0, height).slice(2, 0, width);

    auto out = x + h.reshape({b, height * width, dim_});
    return out + mlp->forward(norm2(out));
}

PatchMergingImpl::PatchMergingImpl(int64_t dim) {
    norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({4 * dim})));
    reduction = register_module("reduction", torch::nn::Linear(torch::nn::LinearOptions(4 * dim, 2 * dim).bias(false)));
    init_linear(reduction);
}

torch::Tensor PatchMergingImpl::forward(const torch::Tensor& x, int64_t height, int64_t width) {
    const int64_t b = x.size(0), c = x.size(2);
    const auto grid = x.view({b, height, width, c});
    using torch::indexing::None;
    using torch::indexing::Slice;
    const auto x0 = grid.index({Slice(), Slice(0, None, 2), Slice(0, None, 2)});
    const auto x1 = grid.index({Slice(), Slice(1, None, 2), Slice(0, None, 2)});
    const auto x2 = grid.index({Slice(), Slice(0, None, 2), Slice(1, None, 2)});
    const auto x3 = grid.index({Slice(), Slice(1, None, 2), Slice(1, None, 2)});
    const auto merged = torch::cat({x0, x1, x2, x3}, -1).view({b, -1, 4 * c});
    return reduction(norm(merged));
}

SwinEncoderImpl::SwinEncoderImpl(const EncoderConfig& config) : config_(config) {
    config_.validate();
    const auto ch = config_.channels();
    patch_embed = register_module(
        "patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(3, ch[0], config_.patch_size).stride(config_.patch_size)));
    patch_norm = register_module("patch_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({ch[0]})));
    for (int s = 0; s < 4; ++s) {
        stages[s] = register_module("stage" + std::to_string(s), torch::nn::ModuleList());
        for (int d = 0; d < config_.depths[s]; ++d) {
            stages[s]->push_back(SwinBlock(ch[s], config_.heads[s], config_.window_size, d % 2 == 1, config_.mlp_ratio));
        }
        out_norms[s] = register_module("norm" + std::to_string(s), torch::nn::LayerNorm(torch::nn::LayerNormOptions({ch[s]})));
        if (s < 3) merges[s] = register_module("merge" + std::to_string(s), PatchMerging(ch[s]));
    }
    set_frozen(config_.frozen);
}

void SwinEncoderImpl::set_frozen(bool frozen) {
    config_.frozen = frozen;
    for (auto& p : parameters()) p.set_requires_grad(!frozen);
}

FeaturePyramid SwinEncoderImpl::forward(const torch::Tensor& images) {
    if (images.dim() != 4 || images.size(1) != 3) {
        throw std::invalid_argument("encoder expects [B, 3, S, S] images");
    }
    const int64_t side_h = images.size(2), side_w = images.size(3);
    if (side_h % 32 != 0 || side_w % 32 != 0) {
        throw std::invalid_argument("encoder input " + std::to_string(side_h) + "x" + std::to_string(side_w) +
                                    " is not divisible by 32");
    }
    const auto ch = config_.channels();
    auto x = patch_embed(images);
    int64_t h = x.size(2), w = x.size(3);
    const int64_t b = x.size(0);
    x = patch_norm(x.flatten(2).transpose(1, 2));

    FeaturePyramid pyramid;
    for (int s = 0; s < 4; ++s) {
        for (const auto& block : *stages[s]) x = block->as<SwinBlockImpl>()->forward(x, h, w);
        pyramid.levels[s] = out_norms[s](x).view({b, h, w, ch[s]}).permute({0, 3, 1, 2}).contiguous();
        if (s < 3) {
            x = merges[s](x, h, w);
            h /= 2;
            w /= 2;
        }
    }
    return pyramid;
}

}  // namespace geopix
