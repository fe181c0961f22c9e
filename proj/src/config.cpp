#include "geopix/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <type_traits>

#include "geopix/errors.hpp"
#include "geopix/tokenizer.hpp"

namespace geopix {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& message) {
    throw ConfigError(field + ": " + message);
}

void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok) fail(field, message);
}

template <typename T>
struct is_std_array : std::false_type {};
template <typename T, std::size_t N>
struct is_std_array<std::array<T, N>> : std::true_type {};

// nlohmann converts between numeric kinds and bools silently; config fields must not.
template <typename T>
bool exact_type(const json& j) {
    if constexpr (std::is_same_v<T, bool>) {
        return j.is_boolean();
    } else if constexpr (std::is_integral_v<T>) {
        return j.is_number_integer() && (std::is_signed_v<T> || j.is_number_unsigned() || j.get<std::int64_t>() >= 0);
    } else if constexpr (std::is_floating_point_v<T>) {
        return j.is_number();
    } else if constexpr (std::is_same_v<T, std::string>) {
        return j.is_string();
    } else if constexpr (is_std_array<T>::value) {
        if (!j.is_array() || j.size() != std::tuple_size_v<T>) return false;
        for (const auto& e : j) {
            if (!exact_type<typename T::value_type>(e)) return false;
        }
        return true;
    } else {
        return true;
    }
}

template <typename T>
T read(const json& j, const std::string& field) {
    if (!exact_type<T>(j)) fail(field, "wrong type (" + std::string(j.type_name()) + ")");
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        fail(field, "wrong type (" + std::string(j.type_name()) + ")");
    }
}

using Setter = std::function<void(const json&, const std::string&)>;

// Applies each key of j through the matching setter; unknown keys are errors.
void apply(const json& j, const std::string& path, const std::map<std::string, Setter>& setters) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        const std::string field = path + "." + key;
        const auto it = setters.find(key);
        if (it == setters.end()) fail(field, "unknown field");
        it->second(value, field);
    }
}

template <typename T>
Setter set(T& target) {
    return [&target](const json& v, const std::string& f) { target = read<T>(v, f); };
}

}  // namespace

void EncoderConfig::validate() const {
    require(embed_dim > 0, "model.encoder.embed_dim", "must be positive");
    require(window_size > 0, "model.encoder.window_size", "must be positive");
    require(patch_size == 4, "model.encoder.patch_size", "must be 4 (stride-4 first stage)");
    require(mlp_ratio > 0, "model.encoder.mlp_ratio", "must be positive");
    const auto ch = channels();
    for (int i = 0; i < 4; ++i) {
        const std::string idx = "[" + std::to_string(i) + "]";
        require(depths[i] >= 1, "model.encoder.depths" + idx, "must be >= 1");
        require(heads[i] >= 1, "model.encoder.heads" + idx, "must be >= 1");
        require(ch[i] % heads[i] == 0, "model.encoder.heads" + idx,
                "stage width " + std::to_string(ch[i]) + " not divisible by " + std::to_string(heads[i]));
    }
}

EncoderConfig EncoderConfig::swin_base() {
    EncoderConfig c;
    c.embed_dim = 128;
    c.depths = {2, 2, 18, 2};
    c.heads = {4, 8, 16, 32};
    c.window_size = 12;
    c.frozen = true;
    return c;
}

void ConnectorConfig::validate() const {
    require(depth >= 0, "model.connector.d", "must be >= 0");
    require(in_channels > 0, "model.connector.in_channels", "must be positive");
    require(out_dim > 0, "model.connector.out_dim", "must be positive");
    require(kernel >= 1 && kernel % 2 == 1, "model.connector.kernel", "must be a positive odd number");
    require(stride >= 1, "model.connector.stride", "must be positive");
}

int ConnectorConfig::token_count(int image_size) const {
    validate();
    require(image_size > 0 && image_size % 32 == 0, "model.image_size", "must be a positive multiple of 32");
    int side = image_size / 32;
    for (int i = 0; i < depth; ++i) {
        require(side % stride == 0, "model.connector.d",
                "stride-32 side " + std::to_string(image_size / 32) + " is not divisible by " + std::to_string(stride) + "^" +
                    std::to_string(depth));
        side /= stride;
    }
    return side * side;
}

void LMConfig::validate() const {
    require(hidden_size > 0, "model.lm.hidden_size", "must be positive");
    require(layers >= 1, "model.lm.layers", "must be >= 1");
    require(heads >= 1 && hidden_size % heads == 0, "model.lm.heads", "must divide hidden_size");
    require(vocab_size >= ByteTokenizer::kVocabSize, "model.lm.vocab_size",
            "must be >= " + std::to_string(ByteTokenizer::kVocabSize));
    require(max_positions >= 2, "model.lm.max_positions", "must be >= 2");
}

void MaskConfig::validate() const {
    require(dim > 0, "model.mask.dim", "must be positive");
    require(heads >= 1 && dim % heads == 0, "model.mask.heads", "must divide mask.dim");
    require(decoder_layers >= 1, "model.mask.decoder_layers", "must be >= 1");
    require(ffn_dim > 0, "model.mask.ffn_dim", "must be positive");
    require(groups >= 1 && dim % groups == 0, "model.mask.groups", "must divide mask.dim");
    require(threshold > 0.0 && threshold < 1.0, "model.mask.threshold", "must lie in (0, 1)");
}

ConnectorConfig ModelConfig::connector() const {
    ConnectorConfig c;
    c.depth = connector_depth;
    c.kernel = connector_kernel;
    c.in_channels = encoder.channels()[3];
    c.out_dim = lm.hidden_size;
    return c;
}

void ModelConfig::validate() const {
    require(image_size > 0 && image_size % 32 == 0, "model.image_size", "must be a positive multiple of 32");
    encoder.validate();
    lm.validate();
    mask.validate();
    connector().token_count(image_size);
    for (int c = 0; c < 3; ++c) {
        require(normalization.stddev[c] > 0, "model.normalization.std", "must be positive");
    }
}

ModelConfig ModelConfig::full() {
    ModelConfig c;
    c.image_size = 1024;
    c.encoder = EncoderConfig::swin_base();
    c.connector_depth = 2;
    c.lm.hidden_size = 2048;
    c.lm.layers = 24;
    c.lm.heads = 32;
    c.lm.max_positions = 2048;
    c.mask.dim = 256;
    c.mask.heads = 8;
    c.mask.decoder_layers = 9;
    c.mask.ffn_dim = 2048;
    c.mask.groups = 32;
    return c;
}

void TrainConfig::validate() const {
    require(lr > 0, "train.lr", "must be positive");
    require(batch_size >= 1, "train.batch_size", "must be >= 1");
    require(steps >= 1, "train.steps", "must be >= 1");
    require(warmup_ratio >= 0 && warmup_ratio < 1, "train.warmup_ratio", "must lie in [0, 1)");
    require(beta1 >= 0 && beta1 < 1, "train.betas[0]", "must lie in [0, 1)");
    require(beta2 >= 0 && beta2 < 1, "train.betas[1]", "must lie in [0, 1)");
    require(weight_decay >= 0, "train.weight_decay", "must be >= 0");
    require(checkpoint_every >= 0, "train.checkpoint_every", "must be >= 0");
}

void LossConfig::validate() const {
    require(w_focal >= 0, "loss.w_focal", "must be >= 0");
    require(w_dice >= 0, "loss.w_dice", "must be >= 0");
    require(w_text_ce >= 0, "loss.w_text_ce", "must be >= 0");
    require(focal_alpha >= 0 && focal_alpha <= 1, "loss.focal_alpha", "must lie in [0, 1]");
    require(focal_gamma >= 0, "loss.focal_gamma", "must be >= 0");
    require(dice_smooth >= 0, "loss.dice_smooth", "must be >= 0");
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    loss.validate();
    require(!data.root.empty(), "data.root", "must be set");
    try {
        parse_split(data.train_split);
    } catch (const ConfigError& e) {
        fail("data.train_split", e.what());
    }
    try {
        parse_split(data.eval_split);
    } catch (const ConfigError& e) {
        fail("data.eval_split", e.what());
    }
}

void to_json(json& j, const EncoderConfig& c) {
    j = json{{"embed_dim", c.embed_dim}, {"depths", c.depths},         {"heads", c.heads},
             {"window_size", c.window_size}, {"patch_size", c.patch_size}, {"mlp_ratio", c.mlp_ratio},
             {"frozen", c.frozen}};
}

void to_json(json& j, const LMConfig& c) {
    j = json{{"hidden_size", c.hidden_size}, {"layers", c.layers},
             {"heads", c.heads},             {"vocab_size", c.vocab_size},
             {"max_positions", c.max_positions}, {"mlp_ratio", c.mlp_ratio}};
}

void to_json(json& j, const MaskConfig& c) {
    j = json{{"dim", c.dim},       {"heads", c.heads},   {"decoder_layers", c.decoder_layers},
             {"ffn_dim", c.ffn_dim}, {"groups", c.groups}, {"threshold", c.threshold}};
}

void to_json(json& j, const ModelConfig& c) {
    j = json{{"image_size", c.image_size},
             {"encoder", c.encoder},
             {"connector", {{"d", c.connector_depth}, {"kernel", c.connector_kernel}, {"out_dim", c.lm.hidden_size}}},
             {"lm", c.lm},
             {"mask", c.mask},
             {"templates", {{"reasoning", c.templates.reasoning}, {"referring", c.templates.referring}}},
             {"normalization", {{"mean", c.normalization.mean}, {"std", c.normalization.stddev}}}};
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"lr", c.lr},
             {"batch_size", c.batch_size},
             {"steps", c.steps},
             {"warmup_ratio", c.warmup_ratio},
             {"betas", {c.beta1, c.beta2}},
             {"weight_decay", c.weight_decay},
             {"precision", c.precision == Precision::fp32 ? "fp32" : "bf16"},
             {"freeze_encoder", c.freeze_encoder},
             {"checkpoint_every", c.checkpoint_every},
             {"question_mode", c.question_mode == QuestionMode::flatten ? "flatten" : "sample_per_epoch"},
             {"schedule", "cosine"}};
}

void to_json(json& j, const LossConfig& c) {
    j = json{{"w_focal", c.w_focal},         {"w_dice", c.w_dice},           {"w_text_ce", c.w_text_ce},
             {"focal_alpha", c.focal_alpha}, {"focal_gamma", c.focal_gamma}, {"dice_smooth", c.dice_smooth}};
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"seed", c.seed},
             {"model", c.model},
             {"train", c.train},
             {"loss", c.loss},
             {"data", {{"root", c.data.root}, {"train_split", c.data.train_split}, {"eval_split", c.data.eval_split}}},
             {"output_dir", c.output_dir}};
}

void merge_json(ModelConfig& c, const json& j, const std::string& path) {
    std::optional<int> connector_out_dim;
    apply(j, path,
          {
              {"image_size", set(c.image_size)},
              {"encoder",
               [&](const json& v, const std::string& f) {
                   apply(v, f,
                         {{"embed_dim", set(c.encoder.embed_dim)},
                          {"depths", set(c.encoder.depths)},
                          {"heads", set(c.encoder.heads)},
                          {"window_size", set(c.encoder.window_size)},
                          {"patch_size", set(c.encoder.patch_size)},
                          {"mlp_ratio", set(c.encoder.mlp_ratio)},
                          {"frozen", set(c.encoder.frozen)}});
               }},
              {"connector",
               [&](const json& v, const std::string& f) {
                   apply(v, f,
                         {{"d", set(c.connector_depth)},
                          {"kernel", set(c.connector_kernel)},
                          {"out_dim", [&](const json& o, const std::string& of) { connector_out_dim = read<int>(o, of); }},
                          {"stride", [](const json& s, const std::string& sf) {
                               require(read<int>(s, sf) == 2, sf, "only stride 2 is supported");
                           }}});
               }},
              {"lm",
               [&](const json& v, const std::string& f) {
                   apply(v, f,
                         {{"hidden_size", set(c.lm.hidden_size)},
                          {"layers", set(c.lm.layers)},
                          {"heads", set(c.lm.heads)},
                          {"vocab_size", set(c.lm.vocab_size)},
                          {"max_positions", set(c.lm.max_positions)},
                          {"mlp_ratio", set(c.lm.mlp_ratio)}});
               }},
              {"mask",
               [&](const json& v, const std::string& f) {
                   apply(v, f,
                         {{"dim", set(c.mask.dim)},
                          {"heads", set(c.mask.heads)},
                          {"decoder_layers", set(c.mask.decoder_layers)},
                          {"ffn_dim", set(c.mask.ffn_dim)},
                          {"groups", set(c.mask.groups)},
                          {"threshold", set(c.mask.threshold)}});
               }},
              {"templates",
               [&](const json& v, const std::string& f) {
                   apply(v, f, {{"reasoning", set(c.templates.reasoning)}, {"referring", set(c.templates.referring)}});
               }},
              {"normalization",
               [&](const json& v, const std::string& f) {
                   apply(v, f, {{"mean", set(c.normalization.mean)}, {"std", set(c.normalization.stddev)}});
               }},
          });
    // out_dim mirrors the LM width and is only accepted when it agrees.
    if (connector_out_dim) {
        require(*connector_out_dim == c.lm.hidden_size, path + ".connector.out_dim",
                "must equal lm.hidden_size (" + std::to_string(c.lm.hidden_size) + ")");
    }
}

void merge_json(TrainConfig& c, const json& j, const std::string& path) {
    apply(j, path,
          {
              {"lr", set(c.lr)},
              {"batch_size", set(c.batch_size)},
              {"steps", set(c.steps)},
              {"warmup_ratio", set(c.warmup_ratio)},
              {"betas",
               [&](const json& v, const std::string& f) {
                   const auto betas = read<std::array<double, 2>>(v, f);
                   c.beta1 = betas[0];
                   c.beta2 = betas[1];
               }},
              {"weight_decay", set(c.weight_decay)},
              {"precision",
               [&](const json& v, const std::string& f) {
                   const auto s = read<std::string>(v, f);
                   require(s == "fp32" || s == "bf16", f, "expected fp32 or bf16");
                   c.precision = s == "fp32" ? Precision::fp32 : Precision::bf16;
               }},
              {"freeze_encoder", set(c.freeze_encoder)},
              {"checkpoint_every", set(c.checkpoint_every)},
              {"question_mode",
               [&](const json& v, const std::string& f) {
                   const auto s = read<std::string>(v, f);
                   require(s == "flatten" || s == "sample_per_epoch", f, "expected flatten or sample_per_epoch");
                   c.question_mode = s == "flatten" ? QuestionMode::flatten : QuestionMode::sample_per_epoch;
               }},
              {"schedule",
               [](const json& v, const std::string& f) { require(read<std::string>(v, f) == "cosine", f, "only cosine is supported"); }},
          });
}

void merge_json(LossConfig& c, const json& j, const std::string& path) {
    apply(j, path,
          {{"w_focal", set(c.w_focal)},
           {"w_dice", set(c.w_dice)},
           {"w_text_ce", set(c.w_text_ce)},
           {"focal_alpha", set(c.focal_alpha)},
           {"focal_gamma", set(c.focal_gamma)},
           {"dice_smooth", set(c.dice_smooth)}});
}

void merge_json(RunConfig& c, const json& j) {
    apply(j, "config",
          {
              {"seed", set(c.seed)},
              {"model", [&](const json& v, const std::string& f) { merge_json(c.model, v, f); }},
              {"train", [&](const json& v, const std::string& f) { merge_json(c.train, v, f); }},
              {"loss", [&](const json& v, const std::string& f) { merge_json(c.loss, v, f); }},
              {"data",
               [&](const json& v, const std::string& f) {
                   apply(v, f,
                         {{"root", set(c.data.root)},
                          {"train_split", set(c.data.train_split)},
                          {"eval_split", set(c.data.eval_split)}});
               }},
              {"output_dir", set(c.output_dir)},
          });
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    merge_json(base, doc);
    return base;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << json(config).dump(2) << '\n';
}

}  // namespace geopix
