#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "geopix/config.hpp"
#include "geopix/encoder.hpp"
#include "geopix/segmenter.hpp"

namespace geopix {

// On-disk layout: "GEOPIXCK" | u32 version | u64 header length | JSON header | tensor bytes.
// The header lists every tensor's name, dtype, shape and byte range.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensor = std::pair<std::string, torch::Tensor>;

struct CheckpointData {
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    const torch::Tensor* find(const std::string& name) const;
};

// Written to a temporary file and renamed, so a crash never leaves a partial checkpoint.
void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
// Validates the magic, version and total length before returning anything.
CheckpointData read_checkpoint(const std::filesystem::path& path);

std::vector<NamedTensor> module_state(const torch::nn::Module& module, const std::string& prefix = "");

// Checks every parameter of the module against "<prefix><name>" first and only then copies,
// so a mismatch leaves the module untouched. Throws CheckpointError naming the first offender.
void install_state(torch::nn::Module& module, const CheckpointData& data, const std::string& prefix = "");

void save_model(const std::filesystem::path& path, SegmenterImpl& model, const RunConfig& config, int64_t step = 0,
                torch::optim::AdamW* optimizer = nullptr);

struct LoadedModel {
    Segmenter model{nullptr};
    RunConfig config;
    int64_t step = 0;
    CheckpointData data;
};

LoadedModel load_model(const std::filesystem::path& path);
// Restores AdamW moments stored by save_model for the optimizer's parameters.
void load_optimizer_state(torch::optim::AdamW& optimizer, SegmenterImpl& model, const CheckpointData& data);

// Encoder import hook: accepts an encoder-only checkpoint or a full model checkpoint.
struct PretrainedEncoder {
    EncoderConfig config;
    SwinEncoder encoder{nullptr};
};
void save_encoder(const std::filesystem::path& path, SwinEncoderImpl& encoder);
PretrainedEncoder load_pretrained(const std::filesystem::path& path);
void load_pretrained_into(SwinEncoderImpl& encoder, const std::filesystem::path& path);

}  // namespace geopix
