#include "geopix/attention.hpp"

#include <cmath>

#include "geopix/errors.hpp"

namespace geopix {

MultiheadAttentionImpl::MultiheadAttentionImpl(int64_t dim, int64_t heads) : dim_(dim), heads_(heads) {
    if (dim % heads != 0) throw ConfigError("attention width " + std::to_string(dim) + " not divisible by " + std::to_string(heads));
    q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
    k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
    v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
    out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor MultiheadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key, const torch::Tensor& value,
                                              const torch::Tensor& blocked) {
    const int64_t b = query.size(0);
    const int64_t lq = query.size(1);
    const int64_t lk = key.size(1);
    const int64_t hd = dim_ / heads_;
    auto split = [&](const torch::Tensor& t, int64_t len) { return t.view({b, len, heads_, hd}).transpose(1, 2); };
    const auto q = split(q_proj(query), lq);
    const auto k = split(k_proj(key), lk);
    const auto v = split(v_proj(value), lk);
    auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
    if (blocked.defined()) {
        scores = scores.masked_fill(blocked, -std::numeric_limits<double>::infinity());
    }
    const auto out = torch::matmul(torch::softmax(scores, -1), v).transpose(1, 2).reshape({b, lq, dim_});
    return out_proj(out);
}

}  // namespace geopix
