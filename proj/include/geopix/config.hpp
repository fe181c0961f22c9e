#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "geopix/dataset.hpp"
#include "geopix/preprocess.hpp"

namespace geopix {

struct EncoderConfig {
    int embed_dim = 32;
    std::array<int, 4> depths{1, 1, 2, 1};
    std::array<int, 4> heads{1, 2, 4, 8};
    int window_size = 4;
    int patch_size = 4;
    double mlp_ratio = 4.0;
    bool frozen = false;

    // Stage channel widths, doubling per stage.
    std::array<int, 4> channels() const {
        return {embed_dim, 2 * embed_dim, 4 * embed_dim, 8 * embed_dim};
    }
    void validate() const;

    static EncoderConfig desk() { return {}; }
    static EncoderConfig swin_base();
};

struct ConnectorConfig {
    int depth = 1;  // number of stacked (norm, strided conv) blocks
    int in_channels = 256;
    int out_dim = 128;
    int kernel = 3;
    int stride = 2;

    void validate() const;
    // Visual tokens produced for a square input of the given side. Throws ConfigError when
    // the stride-32 side is not divisible by stride^depth.
    int token_count(int image_size) const;
};

struct LMConfig {
    int hidden_size = 128;
    int layers = 4;
    int heads = 4;
    int vocab_size = 261;  // byte-level tokenizer
    int max_positions = 512;
    double mlp_ratio = 4.0;

    void validate() const;
};

struct MaskConfig {
    int dim = 64;  // mask-decoder width
    int heads = 4;
    int decoder_layers = 3;
    int ffn_dim = 256;
    int groups = 8;  // group-norm groups in the pixel decoder
    double threshold = 0.5;

    void validate() const;
};

struct TemplateConfig {
    std::string reasoning =
        "USER: This is an image <IMAGE>, please doing geospatial pixel reasoning according to the following "
        "instruction: <DESCRIPTION>. ASSISTANT: <ANSWER>";
    std::string referring =
        "USER: This is an image <IMAGE>, please doing referring segmentation according to the following "
        "instruction: <DESCRIPTION>. ASSISTANT: <ANSWER>";
};

struct ModelConfig {
    int image_size = 64;
    EncoderConfig encoder;
    int connector_depth = 1;
    int connector_kernel = 3;
    LMConfig lm;
    MaskConfig mask;
    TemplateConfig templates;
    Normalization normalization;

    ConnectorConfig connector() const;
    void validate() const;

    static ModelConfig desk() { return {}; }
    static ModelConfig full();
};

enum class Precision { fp32, bf16 };

// Defaults follow the published training recipe; steps matches the EarthReason schedule.
struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 16;
    int steps = 2220;
    double warmup_ratio = 0.03;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    Precision precision = Precision::fp32;
    bool freeze_encoder = true;
    int checkpoint_every = 0;  // 0: final checkpoint only
    QuestionMode question_mode = QuestionMode::flatten;

    void validate() const;
};

struct LossConfig {
    double w_focal = 1.0;
    double w_dice = 1.0;
    double w_text_ce = 1.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    double dice_smooth = 1.0;

    void validate() const;
};

struct DataConfig {
    std::string root = "data";
    std::string train_split = "train";
    std::string eval_split = "val";
};

// Fully resolved configuration of one run: defaults < config file < flags.
struct RunConfig {
    std::uint64_t seed = 0;
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
    DataConfig data;
    std::string output_dir = "runs/default";

    void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void to_json(nlohmann::json& j, const LMConfig& c);
void to_json(nlohmann::json& j, const MaskConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);

// Overlay a (possibly partial) JSON document onto an existing config. Unknown keys and
// wrongly-typed values raise ConfigError naming the dotted field path.
void merge_json(ModelConfig& c, const nlohmann::json& j, const std::string& path = "model");
void merge_json(TrainConfig& c, const nlohmann::json& j, const std::string& path = "train");
void merge_json(LossConfig& c, const nlohmann::json& j, const std::string& path = "loss");
void merge_json(RunConfig& c, const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace geopix
