#include "geopix/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>


namespace geopix {

SampleScore score_sample(const Mask& prediction, const Mask& truth) {
    if (!prediction.same_shape(truth)) throw std::invalid_argument("score_sample: mask shapes differ");
    SampleScore s;
    for (std::size_t i = 0; i < truth.values.size(); ++i) {
        const bool p = prediction.values[i] != 0;
        const bool t = truth.values[i] != 0;
        s.intersection += p && t;
        s.union_ += p || t;
    }
    s.iou = s.union_ == 0 ? 1.0 : static_cast<double>(s.intersection) / static_cast<double>(s.union_);
    return s;
}

EvalReport compute_metrics(std::span<const Mask> predictions, std::span<const Mask> truths) {
    if (predictions.size() != truths.size()) {
        throw std::invalid_argument("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                                    std::to_string(truths.size()) + " ground truths");
    }
    std::vector<SampleScore> scores;
    scores.reserve(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) scores.push_back(score_sample(predictions[i], truths[i]));
    return compute_metrics(scores);
}

EvalReport compute_metrics(std::span<const SampleScore> scores) {
    if (scores.empty()) throw std::invalid_argument("compute_metrics: no samples");
    EvalReport r;
    r.n_samples = scores.size();
    double sum = 0.0;
    for (const auto& s : scores) {
        r.per_sample_iou.push_back(s.iou);
        r.total_intersection += s.intersection;
        r.total_union += s.union_;
        sum += s.iou;
    }
    r.giou = sum / static_cast<double>(scores.size());
    r.ciou = r.total_union == 0 ? 1.0 : static_cast<double>(r.total_intersection) / static_cast<double>(r.total_union);
    for (const double x : kPrecisionThresholds) {
        std::size_t hits = 0;
        for (const auto& s : scores) hits += s.iou > x;
        r.p_at[x] = static_cast<double>(hits) / static_cast<double>(scores.size());
    }
    return r;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
    nlohmann::json p_at = nlohmann::json::object();
    for (const auto& [x, v] : r.p_at) {
        std::ostringstream key;
        key << std::fixed << std::setprecision(1) << x;
        p_at[key.str()] = v;
    }
    j = {{"giou", r.giou},
         {"ciou", r.ciou},
         {"p_at", p_at},
         {"n_samples", r.n_samples},
         {"per_sample_iou", r.per_sample_iou},
         {"total_intersection", r.total_intersection},
         {"total_union", r.total_union}};
    if (!r.sample_ids.empty()) j["sample_ids"] = r.sample_ids;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json(report).dump(2) << '\n';
}

}  // namespace geopix
