#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "geopix/config.hpp"
#include "geopix/dataset.hpp"
#include "geopix/losses.hpp"
#include "geopix/metrics.hpp"
#include "geopix/segmenter.hpp"

namespace geopix {

// Linear warmup over round(warmup_ratio * steps) steps, then cosine decay reaching 0 at step == steps.
double learning_rate(const TrainConfig& config, int step);

struct LossRecord {
    int step = 0;
    double lr = 0.0;
    double total = 0.0;
    double focal = 0.0;
    double dice = 0.0;
    double text_ce = 0.0;
};

struct TrainOptions {
    std::filesystem::path output_dir;  // empty: nothing is written
    std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
    std::vector<LossRecord> curve;
    std::vector<std::filesystem::path> checkpoints;
};

// Seeds the global generator with config.seed and builds the model.
Segmenter build_model(const RunConfig& config);

// Throws DivergenceError on a non-finite loss after saving the still-finite weights as
// checkpoints/last_good.ckpt.
TrainResult train(Segmenter model, const DatasetManifest& manifest, const RunConfig& config, const TrainOptions& options = {});

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);

struct Segmentation {
    Mask mask;                          // source resolution
    torch::Tensor probabilities;        // [S, S]
    std::optional<std::string> answer;  // reasoning task only
};

Segmentation segment(SegmenterImpl& model, const Image& image, const std::string& instruction, Task task,
                     bool generate_text = true);

struct EvalOptions {
    int batch_size = 8;
};

// Predicts every (image, instruction) sample without answer text and scores it at the
// source resolution.
EvalReport evaluate(SegmenterImpl& model, const DatasetManifest& manifest, const EvalOptions& options = {});

}  // namespace geopix
