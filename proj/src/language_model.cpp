#include "geopix/language_model.hpp"

#include <stdexcept>

#include "geopix/errors.hpp"
#include "geopix/tokenizer.hpp"

namespace geopix {

namespace {

torch::nn::Linear make_linear(int64_t in, int64_t out) {
    torch::nn::Linear layer(in, out);
    torch::NoGradGuard guard;
    layer->weight.normal_(0.0, 0.02);
    layer->bias.zero_();
    return layer;
}

}  // namespace

CausalBlockImpl::CausalBlockImpl(int64_t dim, int64_t heads, double mlp_ratio) {
    norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    attn = register_module("attn", MultiheadAttention(dim, heads));
    norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    const auto hidden = static_cast<int64_t>(dim * mlp_ratio);
    mlp = register_module("mlp", torch::nn::Sequential(make_linear(dim, hidden), torch::nn::GELU(), make_linear(hidden, dim)));
}

torch::Tensor CausalBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& blocked) {
    const auto h = norm1(x);
    auto out = x + attn(h, h, h, blocked);
    return out + mlp->forward(norm2(out));
}

CausalLMImpl::CausalLMImpl(const LMConfig& config) : config_(config) {
    config_.validate();
    tokens = register_module("tokens", torch::nn::Embedding(config_.vocab_size, config_.hidden_size));
    positions = register_module("positions", torch::nn::Embedding(config_.max_positions, config_.hidden_size));
    {
        torch::NoGradGuard guard;
        tokens->weight.normal_(0.0, 0.02);
        positions->weight.normal_(0.0, 0.01);
    }
    blocks = register_module("blocks", torch::nn::ModuleList());
    for (int i = 0; i < config_.layers; ++i) blocks->push_back(CausalBlock(config_.hidden_size, config_.heads, config_.mlp_ratio));
    final_norm = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({config_.hidden_size})));
    head = register_module("head", make_linear(config_.hidden_size, config_.vocab_size));
}

torch::Tensor CausalLMImpl::embed(const torch::Tensor& ids) {
    return tokens(ids);
}

LMOutput CausalLMImpl::forward(const torch::Tensor& embeddings) {
    const int64_t t = embeddings.size(1);
    if (t > config_.max_positions) {
        throw std::length_error("sequence of " + std::to_string(t) + " tokens exceeds max_positions " +
                                std::to_string(config_.max_positions));
    }
    const auto pos = torch::arange(t, torch::TensorOptions().dtype(torch::kLong).device(embeddings.device()));
    auto x = embeddings + positions(pos).unsqueeze(0);
    const auto blocked = torch::ones({t, t}, torch::TensorOptions().dtype(torch::kBool).device(embeddings.device())).triu(1);
    for (const auto& block : *blocks) x = block->as<CausalBlockImpl>()->forward(x, blocked);
    LMOutput out;
    out.hidden = final_norm(x);
    out.logits = head(out.hidden);
    return out;
}

MultimodalSequence assemble(const PromptTokens& prompt, const torch::Tensor& visual_tokens, CausalLMImpl& lm) {
    if (visual_tokens.dim() != 2 || visual_tokens.size(0) == 0) {
        throw std::invalid_argument("assemble: visual tokens must be a non-empty [Tv, D] tensor");
    }
    if (visual_tokens.size(1) != lm.config().hidden_size) {
        throw std::invalid_argument("assemble: visual token width " + std::to_string(visual_tokens.size(1)) +
                                    " does not match LM width " + std::to_string(lm.config().hidden_size));
    }
    const int64_t p = prompt.image_position;
    const int64_t nv = visual_tokens.size(0);
    const int64_t shift = nv - 1;
    auto reindex = [&](const Span& s) { return s.begin > p ? Span{s.begin + shift, s.end + shift} : s; };

    const auto ids = torch::tensor(prompt.ids, torch::TensorOptions().dtype(torch::kLong).device(visual_tokens.device()));
    const auto text = lm.embed(ids).to(visual_tokens.scalar_type());
    MultimodalSequence seq;
    seq.embeddings = torch::cat({text.slice(0, 0, p), visual_tokens, text.slice(0, p + 1)}, 0);
    seq.token_ids.reserve(prompt.ids.size() + static_cast<std::size_t>(shift));
    seq.token_ids.insert(seq.token_ids.end(), prompt.ids.begin(), prompt.ids.begin() + p);
    seq.token_ids.insert(seq.token_ids.end(), static_cast<std::size_t>(nv), ByteTokenizer::kImage);
    seq.token_ids.insert(seq.token_ids.end(), prompt.ids.begin() + p + 1, prompt.ids.end());
    seq.visual = {p, p + nv};
    seq.description = reindex(prompt.description);
    if (prompt.answer) seq.answer = reindex(*prompt.answer);
    seq.task = prompt.task;
    return seq;
}

torch::Tensor pack(std::span<const MultimodalSequence> sequences) {
    if (sequences.empty()) throw std::invalid_argument("pack: no sequences");
    int64_t t = 0;
    for (const auto& s : sequences) t = std::max(t, s.length());
    std::vector<torch::Tensor> rows;
    rows.reserve(sequences.size());
    for (const auto& s : sequences) {
        const int64_t pad = t - s.length();
        rows.push_back(pad == 0 ? s.embeddings
                                : torch::cat({s.embeddings, torch::zeros({pad, s.embeddings.size(1)}, s.embeddings.options())}, 0));
    }
    return torch::stack(rows, 0);
}

DescriptionEmbeddings extract_description_embeddings(const torch::Tensor& hidden, const Span& span) {
    if (span.empty()) throw std::invalid_argument("description span is empty");
    if (span.begin < 0 || span.end > hidden.size(0)) throw std::out_of_range("description span outside the sequence");
    return {hidden.slice(0, span.begin, span.end)};
}

std::string generate_answer(CausalLMImpl& lm, const MultimodalSequence& sequence, const DecodeConfig& config) {
    torch::NoGradGuard guard;
    auto embeddings = sequence.embeddings.unsqueeze(0);
    std::vector<std::int64_t> generated;
    const auto opts = torch::TensorOptions().dtype(torch::kLong).device(embeddings.device());
    for (int step = 0; step < config.max_new_tokens; ++step) {
        if (embeddings.size(1) >= lm.config().max_positions) break;
        const auto logits = lm.forward(embeddings).logits[0][-1];
        // Only bytes and the end token are valid outputs.
        auto allowed = logits.slice(0, 0, ByteTokenizer::kEos + 1);
        const int64_t next = allowed.argmax().item<int64_t>();
        if (next == ByteTokenizer::kEos) break;
        generated.push_back(next);
        const auto e = lm.embed(torch::tensor({next}, opts)).to(embeddings.scalar_type());
        embeddings = torch::cat({embeddings, e.unsqueeze(0)}, 1);
    }
    return ByteTokenizer::decode(generated);
}

}  // namespace geopix
