#include "geopix/losses.hpp"

#include <stdexcept>

namespace geopix {

namespace F = torch::nn::functional;

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) {
        throw std::invalid_argument(std::string(what) + ": prediction and target shapes differ");
    }
}

// Half-pixel-centred nearest sampling of [N, H, W] onto [N, h, w].
torch::Tensor downsample_nearest(const torch::Tensor& masks, int64_t height, int64_t width) {
    auto centres = [&](int64_t out, int64_t in) {
        auto idx = ((torch::arange(out, torch::kFloat64) + 0.5) * (static_cast<double>(in) / out)).floor().to(torch::kLong);
        return idx.clamp_max(in - 1).to(masks.device());
    };
    return masks.index_select(1, centres(height, masks.size(1))).index_select(2, centres(width, masks.size(2)));
}

}  // namespace

torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& target, double alpha, double gamma) {
    require_same_shape(logits, target, "focal_loss");
    const auto t = target.to(logits.scalar_type());
    const auto log_p = F::logsigmoid(logits);
    const auto log_not_p = F::logsigmoid(-logits);
    const auto log_pt = t * log_p + (1 - t) * log_not_p;
    const auto p_t = log_pt.exp();
    const auto alpha_t = alpha * t + (1 - alpha) * (1 - t);
    auto loss = -alpha_t * log_pt;
    if (gamma != 0.0) loss = loss * (1 - p_t).pow(gamma);
    return loss.mean();
}

torch::Tensor dice_loss(const torch::Tensor& probabilities, const torch::Tensor& target, double smooth) {
    require_same_shape(probabilities, target, "dice_loss");
    const auto t = target.to(probabilities.scalar_type());
    const bool batched = probabilities.dim() > 2;
    const auto p = batched ? probabilities.flatten(1) : probabilities.reshape({1, -1});
    const auto q = batched ? t.flatten(1) : t.reshape({1, -1});
    const auto numerator = 2 * (p * q).sum(1) + smooth;
    const auto denominator = p.sum(1) + q.sum(1) + smooth;
    return (1 - numerator / denominator).mean();
}

torch::Tensor answer_cross_entropy(const torch::Tensor& text_logits, std::span<const MultimodalSequence> sequences) {
    if (text_logits.size(0) != static_cast<int64_t>(sequences.size())) {
        throw std::invalid_argument("answer_cross_entropy: one sequence per logit row expected");
    }
    std::vector<torch::Tensor> rows;
    std::vector<int64_t> labels;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const auto& seq = sequences[i];
        if (seq.task != Task::reasoning) continue;
        if (!seq.answer || seq.answer->empty()) {
            throw std::invalid_argument("reasoning sequence " + std::to_string(i) + " has no answer to supervise");
        }
        const Span a = *seq.answer;
        if (a.begin < 1) throw std::invalid_argument("answer span must follow at least one prompt token");
        // Position k predicts token k + 1.
        rows.push_back(text_logits[static_cast<int64_t>(i)].slice(0, a.begin - 1, a.end - 1));
        labels.insert(labels.end(), seq.token_ids.begin() + a.begin, seq.token_ids.begin() + a.end);
    }
    if (rows.empty()) return torch::zeros({}, text_logits.options());
    const auto target = torch::tensor(labels, torch::TensorOptions().dtype(torch::kLong).device(text_logits.device()));
    return F::cross_entropy(torch::cat(rows, 0), target);
}

LossBreakdown combined_loss(const std::vector<torch::Tensor>& mask_logits, const torch::Tensor& text_logits,
                            std::span<const MultimodalSequence> sequences, const torch::Tensor& targets,
                            const LossConfig& config) {
    config.validate();
    if (mask_logits.empty()) throw std::invalid_argument("combined_loss: no mask predictions");
    if (targets.dim() != 3) throw std::invalid_argument("combined_loss: targets must be [N, H, W]");
    const auto dtype = mask_logits.front().scalar_type();
    auto focal = torch::zeros({}, mask_logits.front().options());
    auto dice = torch::zeros({}, mask_logits.front().options());
    for (const auto& logits : mask_logits) {
        if (logits.dim() != 3 || logits.size(0) != targets.size(0)) {
            throw std::invalid_argument("combined_loss: prediction and target counts differ");
        }
        auto gt = targets.to(dtype);
        if (gt.sizes() != logits.sizes()) gt = downsample_nearest(gt, logits.size(1), logits.size(2));
        focal = focal + focal_loss(logits, gt, config.focal_alpha, config.focal_gamma);
        dice = dice + dice_loss(torch::sigmoid(logits), gt, config.dice_smooth);
    }
    const double layers = static_cast<double>(mask_logits.size());
    LossBreakdown out;
    out.focal = config.w_focal * focal / layers;
    out.dice = config.w_dice * dice / layers;
    out.text_ce = config.w_text_ce * answer_cross_entropy(text_logits, sequences).to(dtype);
    out.total = out.focal + out.dice + out.text_ce;
    return out;
}

}  // namespace geopix
