#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "geopix/attention.hpp"
#include "geopix/config.hpp"
#include "geopix/prompt.hpp"

namespace geopix {

// Token embeddings with the <IMAGE> slot expanded into visual tokens.
struct MultimodalSequence {
    torch::Tensor embeddings;             // [T, D]
    std::vector<std::int64_t> token_ids;  // visual positions carry ByteTokenizer::kImage
    Span visual;
    Span description;
    std::optional<Span> answer;
    Task task = Task::reasoning;

    std::int64_t length() const { return static_cast<std::int64_t>(token_ids.size()); }
};

struct DescriptionEmbeddings {
    torch::Tensor vectors;  // [K, D]
};

struct LMOutput {
    torch::Tensor hidden;  // [B, T, D], after the final norm
    torch::Tensor logits;  // [B, T, V]
};

class CausalBlockImpl : public torch::nn::Module {
public:
    CausalBlockImpl(int64_t dim, int64_t heads, double mlp_ratio);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& blocked);

private:
    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    MultiheadAttention attn{nullptr};
    torch::nn::Sequential mlp{nullptr};
};
TORCH_MODULE(CausalBlock);

// Decoder-only pre-norm transformer with learned absolute positions.
class CausalLMImpl : public torch::nn::Module {
public:
    explicit CausalLMImpl(const LMConfig& config);

    torch::Tensor embed(const torch::Tensor& ids);
    // embeddings: [B, T, D]. Throws std::length_error when T exceeds max_positions.
    LMOutput forward(const torch::Tensor& embeddings);

    const LMConfig& config() const { return config_; }

private:
    LMConfig config_;
    torch::nn::Embedding tokens{nullptr}, positions{nullptr};
    torch::nn::ModuleList blocks;
    torch::nn::LayerNorm final_norm{nullptr};
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(CausalLM);

// Replaces the <IMAGE> id with visual_tokens ([Tv, D]) and re-indexes all spans.
MultimodalSequence assemble(const PromptTokens& prompt, const torch::Tensor& visual_tokens, CausalLMImpl& lm);

// Right-pads sequences with zeros into [B, Tmax, D]; causal attention keeps padding invisible.
torch::Tensor pack(std::span<const MultimodalSequence> sequences);

// hidden: [T, D] for one sequence.
DescriptionEmbeddings extract_description_embeddings(const torch::Tensor& hidden, const Span& span);

struct DecodeConfig {
    int max_new_tokens = 96;
};

// Greedy decoding until the end token or the length cap.
std::string generate_answer(CausalLMImpl& lm, const MultimodalSequence& sequence, const DecodeConfig& config = {});

}  // namespace geopix
