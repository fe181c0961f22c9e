#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "geopix/config.hpp"
#include "geopix/language_model.hpp"

namespace geopix {

// Mean over elements of -alpha_t (1 - p_t)^gamma log p_t, computed from logits.
torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& target, double alpha, double gamma);

// 1 - (2 sum(pq) + s) / (sum(p) + sum(q) + s). A leading batch dimension ([N, H, W]) is
// reduced per mask and then averaged; a 2-D input is a single mask.
torch::Tensor dice_loss(const torch::Tensor& probabilities, const torch::Tensor& target, double smooth);

// Next-token cross-entropy over the answer span of every reasoning sequence.
// Throws std::invalid_argument when a reasoning sequence carries no answer.
torch::Tensor answer_cross_entropy(const torch::Tensor& text_logits, std::span<const MultimodalSequence> sequences);

// Weighted components; total is their sum.
struct LossBreakdown {
    torch::Tensor total;
    torch::Tensor focal;
    torch::Tensor dice;
    torch::Tensor text_ce;
};

// mask_logits: every supervised prediction, each [N, h, w]. targets: [N, H, W] in {0, 1},
// nearest-downsampled to each prediction's resolution. Mask terms are averaged over the
// predictions. Referring sequences never contribute text cross-entropy.
LossBreakdown combined_loss(const std::vector<torch::Tensor>& mask_logits, const torch::Tensor& text_logits,
                            std::span<const MultimodalSequence> sequences, const torch::Tensor& targets,
                            const LossConfig& config);

}  // namespace geopix
