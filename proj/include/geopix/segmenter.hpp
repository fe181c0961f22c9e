#pragma once

#include <span>
#include <vector>

#include <torch/torch.h>

#include "geopix/config.hpp"
#include "geopix/connector.hpp"
#include "geopix/encoder.hpp"
#include "geopix/language_model.hpp"
#include "geopix/mask_generator.hpp"
#include "geopix/preprocess.hpp"
#include "geopix/prompt.hpp"

namespace geopix {

struct SegmenterInput {
    torch::Tensor images;                // [B, 3, S, S]
    std::vector<PromptTokens> prompts;   // one per instruction
    std::vector<int64_t> image_index;    // image row each prompt refers to
};

struct SegmenterOutput {
    std::vector<torch::Tensor> mask_logits;  // initial + one per decoder layer, each [N, S/4, S/4]
    torch::Tensor text_logits;               // [N, T, V]
    torch::Tensor hidden;                    // [N, T, D]
    std::vector<MultimodalSequence> sequences;
    torch::Tensor queries;                   // D-Projector output, [N, Dm]

    MaskPrediction final_prediction(int64_t image_size, double threshold) const {
        return make_prediction(mask_logits.back(), image_size, threshold);
    }
};

// Image + instruction -> one mask per instruction.
class SegmenterImpl : public torch::nn::Module {
public:
    explicit SegmenterImpl(const ModelConfig& config);

    SegmenterOutput forward(const SegmenterInput& input);

    const ModelConfig& config() const { return config_; }
    const PromptTemplate& prompt_template(Task task) const {
        return task == Task::reasoning ? reasoning_template_ : referring_template_;
    }
    void set_encoder_frozen(bool frozen);
    bool encoder_frozen() const { return encoder->config().frozen; }
    torch::Dtype dtype() const;

    SwinEncoder encoder{nullptr};
    TokenCompressor connector{nullptr};
    CausalLM lm{nullptr};
    DProjector projector{nullptr};
    PixelDecoder pixel_decoder{nullptr};
    MaskDecoder mask_decoder{nullptr};

private:
    ModelConfig config_;
    PromptTemplate reasoning_template_;
    PromptTemplate referring_template_;
};
TORCH_MODULE(Segmenter);

// [3, S, S] float tensor view of a preprocessed image.
torch::Tensor image_tensor(const PreprocessedSample& sample, torch::Dtype dtype = torch::kFloat32);

// One instruction per image, in order.
SegmenterInput make_input(std::span<const PreprocessedSample> images, std::vector<PromptTokens> prompts,
                          torch::Dtype dtype = torch::kFloat32);

}  // namespace geopix
