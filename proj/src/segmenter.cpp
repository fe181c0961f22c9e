#include "geopix/segmenter.hpp"

#include <stdexcept>

namespace geopix {

SegmenterImpl::SegmenterImpl(const ModelConfig& config)
    : config_(config),
      reasoning_template_(PromptTemplate::for_task(config.templates, Task::reasoning)),
      referring_template_(PromptTemplate::for_task(config.templates, Task::referring)) {
    config_.validate();
    const auto ch = config_.encoder.channels();
    encoder = register_module("encoder", SwinEncoder(config_.encoder));
    connector = register_module("connector", TokenCompressor(config_.connector()));
    lm = register_module("lm", CausalLM(config_.lm));
    projector = register_module("projector", DProjector(config_.lm.hidden_size, std::array<int64_t, 3>{ch[1], ch[2], ch[3]},
                                                        config_.mask.dim, config_.mask.heads));
    pixel_decoder = register_module("pixel_decoder",
                                    PixelDecoder(std::array<int64_t, 4>{ch[0], ch[1], ch[2], ch[3]}, config_.mask.dim,
                                                 config_.mask.groups));
    mask_decoder = register_module("mask_decoder", MaskDecoder(config_.mask.dim, config_.mask.heads, config_.mask.ffn_dim,
                                                               config_.mask.decoder_layers, config_.mask.threshold));
}

void SegmenterImpl::set_encoder_frozen(bool frozen) {
    encoder->set_frozen(frozen);
    config_.encoder.frozen = frozen;
}

torch::Dtype SegmenterImpl::dtype() const {
    return lm->parameters().front().scalar_type();
}

SegmenterOutput SegmenterImpl::forward(const SegmenterInput& input) {
    if (input.prompts.empty()) throw std::invalid_argument("segmenter: no instructions");
    if (input.prompts.size() != input.image_index.size()) {
        throw std::invalid_argument("segmenter: every instruction needs an image index");
    }
    const auto images = input.images.to(dtype());
    const int64_t batch = images.size(0);
    for (const int64_t i : input.image_index) {
        if (i < 0 || i >= batch) throw std::out_of_range("segmenter: image index out of range");
    }

    FeaturePyramid pyramid;
    if (encoder_frozen()) {
        torch::NoGradGuard guard;
        pyramid = encoder(images);
    } else {
        pyramid = encoder(images);
    }

    const auto visual = connector(pyramid.v4());
    SegmenterOutput out;
    out.sequences.reserve(input.prompts.size());
    for (std::size_t i = 0; i < input.prompts.size(); ++i) {
        out.sequences.push_back(assemble(input.prompts[i], visual[input.image_index[i]], *lm));
    }
    const LMOutput lm_out = lm(pack(out.sequences));
    out.hidden = lm_out.hidden;
    out.text_logits = lm_out.logits;

    std::vector<DescriptionEmbeddings> descriptions;
    descriptions.reserve(out.sequences.size());
    for (std::size_t i = 0; i < out.sequences.size(); ++i) {
        descriptions.push_back(extract_description_embeddings(out.hidden[static_cast<int64_t>(i)], out.sequences[i].description));
    }

    const auto index = torch::tensor(input.image_index, torch::TensorOptions().dtype(torch::kLong).device(images.device()));
    out.queries = projector(descriptions, pyramid.select(index));
    const PixelDecoderOutput pixels = pixel_decoder(pyramid).select(index);
    MaskDecoderOutput decoded = mask_decoder(out.queries, pixels);
    out.mask_logits = std::move(decoded.predictions);
    return out;
}

torch::Tensor image_tensor(const PreprocessedSample& sample, torch::Dtype dtype) {
    const int64_t s = sample.size;
    return torch::from_blob(const_cast<float*>(sample.image.data()), {3, s, s}, torch::kFloat32).clone().to(dtype);
}

SegmenterInput make_input(std::span<const PreprocessedSample> images, std::vector<PromptTokens> prompts, torch::Dtype dtype) {
    if (images.size() != prompts.size()) throw std::invalid_argument("make_input: one prompt per image expected");
    SegmenterInput input;
    std::vector<torch::Tensor> rows;
    rows.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        rows.push_back(image_tensor(images[i], dtype));
        input.image_index.push_back(static_cast<int64_t>(i));
    }
    input.images = torch::stack(rows, 0);
    input.prompts = std::move(prompts);
    return input;
}

}  // namespace geopix
