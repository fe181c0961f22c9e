#include "geopix/trainer.hpp"

#include <ATen/autocast_mode.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "geopix/checkpoint.hpp"
#include "geopix/errors.hpp"
#include "geopix/preprocess.hpp"
#include "geopix/prompt.hpp"

namespace geopix {

namespace fs = std::filesystem;

double learning_rate(const TrainConfig& config, int step) {
    const int warmup = static_cast<int>(std::lround(config.warmup_ratio * config.steps));
    if (step < warmup) return config.lr * static_cast<double>(step + 1) / warmup;
    const int span = std::max(1, config.steps - warmup);
    const double progress = std::clamp(static_cast<double>(step - warmup) / span, 0.0, 1.0);
    return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Segmenter build_model(const RunConfig& config) {
    torch::manual_seed(config.seed);
    return Segmenter(config.model);
}

namespace {

class AutocastScope {
public:
    explicit AutocastScope(bool enabled) : enabled_(enabled) {
        if (!enabled_) return;
        at::autocast::set_autocast_dtype(at::kCPU, at::kBFloat16);
        at::autocast::set_autocast_enabled(at::kCPU, true);
    }
    ~AutocastScope() {
        if (!enabled_) return;
        at::autocast::set_autocast_enabled(at::kCPU, false);
        at::autocast::clear_cache();
    }
    AutocastScope(const AutocastScope&) = delete;
    AutocastScope& operator=(const AutocastScope&) = delete;

private:
    bool enabled_;
};

struct CachedSample {
    PreprocessedSample image;
    PromptTokens prompt;
};

torch::Tensor mask_tensor(const Mask& mask) {
    return torch::from_blob(const_cast<std::uint8_t*>(mask.values.data()), {mask.height, mask.width}, torch::kUInt8)
        .to(torch::kFloat32);
}

Mask to_mask(const torch::Tensor& binary) {
    const auto b = binary.to(torch::kUInt8).contiguous();
    Mask m(static_cast<int>(b.size(0)), static_cast<int>(b.size(1)));
    std::copy_n(b.data_ptr<std::uint8_t>(), m.values.size(), m.values.begin());
    return m;
}

}  // namespace

TrainResult train(Segmenter model, const DatasetManifest& manifest, const RunConfig& config, const TrainOptions& options) {
    config.validate();
    if (manifest.records.empty()) throw std::invalid_argument("train: manifest is empty");
    const TrainConfig& tc = config.train;
    const int size = config.model.image_size;

    model->set_encoder_frozen(tc.freeze_encoder);
    model->train();
    std::vector<torch::Tensor> params;
    for (auto& p : model->parameters()) {
        if (p.requires_grad()) params.push_back(p);
    }
    torch::optim::AdamW optimizer(
        params, torch::optim::AdamWOptions(tc.lr).betas({tc.beta1, tc.beta2}).weight_decay(tc.weight_decay));

    std::map<std::pair<std::size_t, std::size_t>, CachedSample> cache;
    auto fetch = [&](const SampleRef& ref) -> const CachedSample& {
        const auto key = std::make_pair(ref.record, ref.question);
        auto it = cache.find(key);
        if (it == cache.end()) {
            const ImageSample sample = manifest.materialize(ref);
            const bool with_answer = sample.task == Task::reasoning;
            CachedSample c{preprocess(sample, size, config.model.normalization),
                           build_prompt(sample, model->prompt_template(sample.task), with_answer)};
            it = cache.emplace(key, std::move(c)).first;
        }
        return it->second;
    };

    std::mt19937_64 rng(config.seed);
    std::vector<SampleRef> order;
    std::size_t cursor = 0;
    std::uint64_t epoch = 0;
    auto next_ref = [&]() {
        if (cursor >= order.size()) {
            order = manifest.samples(config.seed + epoch);
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
            ++epoch;
        }
        return order[cursor++];
    };

    TrainResult result;
    const fs::path ckpt_dir = options.output_dir.empty() ? fs::path() : options.output_dir / "checkpoints";
    auto save = [&](const std::string& name, int step) {
        if (ckpt_dir.empty()) return;
        const fs::path path = ckpt_dir / name;
        save_model(path, *model, config, step, &optimizer);
        result.checkpoints.push_back(path);
    };
    auto finish_files = [&]() {
        if (options.output_dir.empty()) return;
        write_loss_curve(options.output_dir / "loss_curve.csv", result.curve);
    };
    if (!options.output_dir.empty()) {
        fs::create_directories(options.output_dir);
        save_run_config(options.output_dir / "run_config.json", config);
    }

    const bool bf16 = tc.precision == Precision::bf16;
    for (int step = 0; step < tc.steps; ++step) {
        const double lr = learning_rate(tc, step);
        for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);

        std::vector<torch::Tensor> images, masks;
        SegmenterInput input;
        for (int b = 0; b < tc.batch_size; ++b) {
            const CachedSample& c = fetch(next_ref());
            images.push_back(image_tensor(c.image));
            masks.push_back(mask_tensor(c.image.mask));
            input.prompts.push_back(c.prompt);
            input.image_index.push_back(b);
        }
        input.images = torch::stack(images, 0);

        LossBreakdown loss;
        {
            AutocastScope autocast(bf16);
            SegmenterOutput out = model->forward(input);
            std::vector<torch::Tensor> logits;
            for (const auto& l : out.mask_logits) logits.push_back(l.to(torch::kFloat32));
            loss = combined_loss(logits, out.text_logits.to(torch::kFloat32), out.sequences, torch::stack(masks, 0),
                                 config.loss);
        }
        const double total = loss.total.item<double>();
        if (!std::isfinite(total)) {
            save("last_good.ckpt", step);
            finish_files();
            throw DivergenceError("loss became non-finite at step " + std::to_string(step + 1) +
                                  (ckpt_dir.empty() ? std::string() : "; last good weights in " + (ckpt_dir / "last_good.ckpt").string()));
        }
        optimizer.zero_grad();
        loss.total.backward();
        optimizer.step();

        LossRecord rec{step + 1, lr, total, loss.focal.item<double>(), loss.dice.item<double>(), loss.text_ce.item<double>()};
        result.curve.push_back(rec);
        if (options.on_step) options.on_step(rec);
        if (tc.checkpoint_every > 0 && rec.step % tc.checkpoint_every == 0 && rec.step != tc.steps) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%06d.ckpt", rec.step);
            save(name, rec.step);
        }
    }
    save("final.ckpt", tc.steps);
    finish_files();
    model->eval();
    return result;
}

void write_loss_curve(const fs::path& path, const std::vector<LossRecord>& curve) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    out << "step,lr,total,focal,dice,text_ce\n";
    for (const auto& r : curve) {
        out << r.step << ',' << r.lr << ',' << r.total << ',' << r.focal << ',' << r.dice << ',' << r.text_ce << '\n';
    }
}

Segmentation segment(SegmenterImpl& model, const Image& image, const std::string& instruction, Task task,
                     bool generate_text) {
    torch::NoGradGuard guard;
    model.eval();
    const int size = model.config().image_size;
    const PreprocessedSample pre = preprocess_image(image, size, model.config().normalization);
    SegmenterInput input;
    input.images = image_tensor(pre).unsqueeze(0);
    input.prompts.push_back(build_prompt(instruction, std::nullopt, model.prompt_template(task)));
    input.image_index.push_back(0);
    const SegmenterOutput out = model.forward(input);
    const MaskPrediction pred = out.final_prediction(size, model.config().mask.threshold);

    Segmentation seg;
    seg.probabilities = pred.probabilities[0].to(torch::kFloat32);
    seg.mask = restore_mask(to_mask(pred.binary()[0]), pre);
    if (generate_text && task == Task::reasoning) seg.answer = generate_answer(*model.lm, out.sequences[0]);
    return seg;
}

EvalReport evaluate(SegmenterImpl& model, const DatasetManifest& manifest, const EvalOptions& options) {
    torch::NoGradGuard guard;
    model.eval();
    const int size = model.config().image_size;
    const auto refs = manifest.samples(0);
    std::vector<SampleScore> scores;
    std::vector<std::string> ids;
    const std::size_t batch = static_cast<std::size_t>(std::max(1, options.batch_size));
    for (std::size_t start = 0; start < refs.size(); start += batch) {
        const std::size_t end = std::min(refs.size(), start + batch);
        std::vector<ImageSample> samples;
        std::vector<PreprocessedSample> pre;
        std::vector<PromptTokens> prompts;
        for (std::size_t i = start; i < end; ++i) {
            samples.push_back(manifest.materialize(refs[i]));
            pre.push_back(preprocess(samples.back(), size, model.config().normalization));
            prompts.push_back(build_prompt(samples.back(), model.prompt_template(samples.back().task), false));
        }
        const SegmenterOutput out = model.forward(make_input(pre, std::move(prompts)));
        const auto binary = out.final_prediction(size, model.config().mask.threshold).binary();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const Mask predicted = restore_mask(to_mask(binary[static_cast<int64_t>(i)]), pre[i]);
            scores.push_back(score_sample(predicted, samples[i].mask));
            ids.push_back(samples[i].id + "#" + std::to_string(refs[start + i].question));
        }
    }
    EvalReport report = compute_metrics(scores);
    report.sample_ids = std::move(ids);
    return report;
}

}  // namespace geopix
