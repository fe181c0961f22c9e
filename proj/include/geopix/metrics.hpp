#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geopix/image.hpp"

namespace geopix {

inline constexpr std::array<double, 5> kPrecisionThresholds{0.5, 0.6, 0.7, 0.8, 0.9};

struct SampleScore {
    std::uint64_t intersection = 0;
    std::uint64_t union_ = 0;
    double iou = 0.0;
};

// Empty ground truth: IoU 1 when the prediction is also empty, otherwise 0 with the
// predicted pixels counted in the union.
SampleScore score_sample(const Mask& prediction, const Mask& truth);

struct EvalReport {
    double giou = 0.0;
    double ciou = 0.0;
    std::map<double, double> p_at;  // fraction of samples with IoU strictly above the key
    std::size_t n_samples = 0;
    std::vector<double> per_sample_iou;
    std::vector<std::string> sample_ids;  // optional, parallel to per_sample_iou
    std::uint64_t total_intersection = 0;
    std::uint64_t total_union = 0;
};

// Throws std::invalid_argument on a count or shape mismatch. An empty dataset also throws.
EvalReport compute_metrics(std::span<const Mask> predictions, std::span<const Mask> truths);
EvalReport compute_metrics(std::span<const SampleScore> scores);

void to_json(nlohmann::json& j, const EvalReport& r);
void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace geopix
