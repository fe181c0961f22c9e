#include <doctest.h>

#include <string>

#include "geopix/errors.hpp"
#include "geopix/language_model.hpp"
#include "geopix/losses.hpp"
#include "geopix/prompt.hpp"
#include "geopix/tokenizer.hpp"
#include "support.hpp"

using namespace geopix;

namespace {

LMConfig tiny_lm(int max_positions = 512) {
    LMConfig c;
    c.hidden_size = 32;
    c.layers = 2;
    c.heads = 2;
    c.max_positions = max_positions;
    return c;
}

PromptTemplate reasoning() { return PromptTemplate::for_task(TemplateConfig{}, Task::reasoning); }
PromptTemplate referring() { return PromptTemplate::for_task(TemplateConfig{}, Task::referring); }

bool contains(const std::vector<std::int64_t>& ids, const std::string& text) {
    const auto needle = ByteTokenizer::encode(text);
    return std::search(ids.begin(), ids.end(), needle.begin(), needle.end()) != ids.end();
}

}  // namespace

TEST_CASE("byte tokenizer") {
    const std::string text = "Tank \xE2\x80\x94 north side";
    const auto ids = ByteTokenizer::encode(text);
    CHECK(ids.size() == text.size());
    for (const auto id : ids) CHECK_FALSE(ByteTokenizer::is_special(id));
    CHECK(ByteTokenizer::decode(ids) == text);

    std::vector<std::int64_t> mixed = ids;
    mixed.insert(mixed.begin() + 2, ByteTokenizer::kImage);
    mixed.push_back(ByteTokenizer::kEos);
    CHECK(ByteTokenizer::decode(mixed) == text);
}

TEST_CASE("template placeholders are validated") {
    CHECK_THROWS_AS(PromptTemplate(Task::reasoning, "no image here <DESCRIPTION>"), ConfigError);
    CHECK_THROWS_AS(PromptTemplate(Task::reasoning, "<IMAGE> only"), ConfigError);
    CHECK_THROWS_AS(PromptTemplate(Task::reasoning, "<IMAGE><IMAGE> <DESCRIPTION>"), ConfigError);
    CHECK_THROWS_AS(PromptTemplate(Task::reasoning, "<IMAGE> <ANSWER> <DESCRIPTION>"), ConfigError);
    CHECK_NOTHROW(PromptTemplate(Task::referring, "<IMAGE> <DESCRIPTION>"));
    CHECK(reasoning().has_answer_slot());
}

TEST_CASE("shipped template wording") {
    const PromptTokens r = build_prompt("Where is the tank?", std::nullopt, reasoning());
    CHECK(contains(r.ids, "USER: This is an image "));
    CHECK(contains(r.ids, "please doing geospatial pixel reasoning according to the following instruction: "));
    const PromptTokens f = build_prompt("the red roof", std::nullopt, referring());
    CHECK(contains(f.ids, "referring segmentation"));
    CHECK_FALSE(contains(f.ids, "geospatial pixel reasoning"));
    CHECK(f.task == Task::referring);
}

TEST_CASE("prompt spans") {
    const PromptTokens a = build_prompt("Where is the tank?", std::nullopt, reasoning());
    const PromptTokens b = build_prompt("Which area floods first?", std::nullopt, reasoning());
    CHECK(a.ids[a.image_position] == ByteTokenizer::kImage);
    CHECK(ByteTokenizer::decode({a.ids.data() + a.description.begin, static_cast<std::size_t>(a.description.length())}) ==
          "Where is the tank?");
    CHECK(a.ids[a.description.begin - 1] == ByteTokenizer::kDescriptionBegin);
    CHECK(a.ids[a.description.end] == ByteTokenizer::kDescriptionEnd);
    CHECK_FALSE(a.answer.has_value());

    // Identical scaffold around different descriptions.
    CHECK(a.description.begin == b.description.begin);
    CHECK(std::equal(a.ids.begin(), a.ids.begin() + a.description.begin, b.ids.begin()));
    CHECK(std::equal(a.ids.begin() + a.description.end, a.ids.end(), b.ids.begin() + b.description.end,
                     b.ids.end()));
    CHECK_FALSE(std::equal(a.ids.begin() + a.description.begin, a.ids.begin() + a.description.end,
                           b.ids.begin() + b.description.begin));

    CHECK_THROWS_AS(build_prompt("", std::nullopt, reasoning()), std::invalid_argument);
}

TEST_CASE("answer text is appended with an end token") {
    const PromptTokens p = build_prompt("Where is the tank?", std::string("At the top."), reasoning());
    REQUIRE(p.answer.has_value());
    CHECK(p.answer->end == static_cast<std::int64_t>(p.ids.size()));
    CHECK(p.ids.back() == ByteTokenizer::kEos);
    CHECK(p.answer->length() == static_cast<std::int64_t>(std::string("At the top.").size()) + 1);
    CHECK_FALSE(p.answer->overlaps(p.description));

    ImageSample s;
    s.instruction = "Where?";
    s.task = Task::reasoning;
    CHECK_THROWS_AS(build_prompt(s, reasoning(), true), std::invalid_argument);
    CHECK_NOTHROW(build_prompt(s, reasoning(), false));
    CHECK_THROWS_AS(build_prompt("x", std::string("y"), PromptTemplate(Task::reasoning, "<IMAGE> <DESCRIPTION>")),
                    ConfigError);
}

TEST_CASE("assemble expands the image slot") {
    torch::manual_seed(0);
    CausalLM lm(tiny_lm());
    PromptTokens p;
    for (int i = 0; i < 20; ++i) p.ids.push_back(65 + i);
    p.image_position = 3;
    p.ids[3] = ByteTokenizer::kImage;
    p.description = {8, 12};
    p.answer = Span{15, 20};
    const auto visual = torch::randn({64, 32});
    const MultimodalSequence seq = assemble(p, visual, *lm);
    CHECK(seq.length() == 83);
    CHECK(seq.embeddings.sizes() == torch::IntArrayRef({83, 32}));
    CHECK(seq.visual == Span{3, 67});
    CHECK(torch::equal(seq.embeddings.slice(0, 3, 67), visual));
    CHECK_FALSE(seq.visual.overlaps(seq.description));
    CHECK_FALSE(seq.description.overlaps(*seq.answer));
    for (std::int64_t k = 0; k < p.description.length(); ++k) {
        CHECK(seq.token_ids[seq.description.begin + k] == p.ids[p.description.begin + k]);
    }
    for (std::int64_t k = 0; k < p.answer->length(); ++k) {
        CHECK(seq.token_ids[seq.answer->begin + k] == p.ids[p.answer->begin + k]);
    }
    CHECK_THROWS_AS(assemble(p, torch::randn({0, 32}), *lm), std::invalid_argument);
    CHECK_THROWS_AS(assemble(p, torch::randn({64, 16}), *lm), std::invalid_argument);
}

TEST_CASE("causal forward") {
    torch::manual_seed(1);
    CausalLM lm(tiny_lm(40));
    lm->eval();
    torch::NoGradGuard guard;
    const auto x = torch::randn({1, 12, 32});
    const LMOutput out = lm(x);
    CHECK(out.hidden.sizes() == x.sizes());
    CHECK(out.logits.sizes() == torch::IntArrayRef({1, 12, ByteTokenizer::kVocabSize}));

    auto y = x.clone();
    y.slice(1, 9, 10).copy_(x.slice(1, 11, 12));
    y.slice(1, 11, 12).copy_(x.slice(1, 9, 10));
    const LMOutput permuted = lm(y);
    CHECK(torch::equal(out.hidden.slice(1, 0, 9), permuted.hidden.slice(1, 0, 9)));
    CHECK_FALSE(torch::allclose(out.hidden.slice(1, 9, 10), permuted.hidden.slice(1, 9, 10)));

    CHECK_NOTHROW(lm(torch::randn({1, 40, 32})));
    CHECK_THROWS_AS(lm(torch::randn({1, 41, 32})), std::length_error);
}

TEST_CASE("description embeddings") {
    torch::manual_seed(2);
    const auto hidden = torch::randn({10, 32});
    const DescriptionEmbeddings d = extract_description_embeddings(hidden, {5, 8});
    CHECK(d.vectors.size(0) == 3);
    CHECK(torch::equal(d.vectors, hidden.slice(0, 5, 8)));
    CHECK_THROWS_AS(extract_description_embeddings(hidden, {4, 4}), std::invalid_argument);

    CausalLM lm(tiny_lm());
    lm->eval();
    torch::NoGradGuard guard;
    const auto visual = torch::randn({4, 32});
    const PromptTokens a = build_prompt("Where is the tank?", std::nullopt, reasoning());
    const PromptTokens b = build_prompt("Where is the tent?", std::nullopt, reasoning());
    const auto sa = assemble(a, visual, *lm), sb = assemble(b, visual, *lm);
    const auto ea = extract_description_embeddings(lm(sa.embeddings.unsqueeze(0)).hidden[0], sa.description);
    const auto eb = extract_description_embeddings(lm(sb.embeddings.unsqueeze(0)).hidden[0], sb.description);
    CHECK(ea.vectors.size(0) == sa.description.length());
    CHECK_FALSE(torch::allclose(ea.vectors, eb.vectors));
}

TEST_CASE("batch packing leaves per-sample embeddings unchanged") {
    torch::manual_seed(3);
    CausalLM lm(tiny_lm());
    lm->eval();
    torch::NoGradGuard guard;
    const PromptTokens a = build_prompt("short", std::nullopt, reasoning());
    const PromptTokens b = build_prompt("a considerably longer instruction about the harbour", std::nullopt, referring());
    const std::vector<MultimodalSequence> seqs{assemble(a, torch::randn({4, 32}), *lm),
                                               assemble(b, torch::randn({4, 32}), *lm)};
    const LMOutput packed = lm(pack(seqs));
    for (int i = 0; i < 2; ++i) {
        const auto alone = lm(seqs[i].embeddings.unsqueeze(0)).hidden[0];
        const auto e_alone = extract_description_embeddings(alone, seqs[i].description).vectors;
        const auto e_packed = extract_description_embeddings(packed.hidden[i], seqs[i].description).vectors;
        CHECK(torch::allclose(e_alone, e_packed, 1e-5, 1e-5));
    }
}

TEST_CASE("text loss only looks at the answer span") {
    torch::manual_seed(4);
    CausalLM lm(tiny_lm());
    const PromptTokens p = build_prompt("Where?", std::string("Here."), reasoning());
    const std::vector<MultimodalSequence> seqs{assemble(p, torch::randn({4, 32}), *lm)};
    const auto logits = torch::randn({1, seqs[0].length(), ByteTokenizer::kVocabSize});
    const double base = answer_cross_entropy(logits, seqs).item<double>();
    auto perturbed = logits.clone();
    const Span a = *seqs[0].answer;
    perturbed.slice(1, 0, a.begin - 1) += torch::randn({1, a.begin - 1, ByteTokenizer::kVocabSize}) * 5;
    perturbed.slice(1, a.end - 1) += 7.0;
    CHECK(answer_cross_entropy(perturbed, seqs).item<double>() == doctest::Approx(base).epsilon(1e-12));
    perturbed.slice(1, a.begin - 1, a.begin) += torch::randn({1, 1, ByteTokenizer::kVocabSize});
    CHECK(answer_cross_entropy(perturbed, seqs).item<double>() != doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("greedy generation") {
    torch::manual_seed(5);
    CausalLM lm(tiny_lm());
    const auto visual = torch::randn({4, 32});
    const std::string answer = "The tank is at the top left.";
    const PromptTokens train_prompt = build_prompt("Where is the tank?", answer, reasoning());
    const PromptTokens query = build_prompt("Where is the tank?", std::nullopt, reasoning());

    lm->eval();
    const auto q = assemble(query, visual, *lm);
    CHECK(generate_answer(*lm, q, {0}).empty());
    CHECK(generate_answer(*lm, q, {8}) == generate_answer(*lm, q, {8}));

    lm->train();
    torch::optim::Adam opt(lm->parameters(), torch::optim::AdamOptions(3e-3));
    for (int step = 0; step < 300; ++step) {
        const std::vector<MultimodalSequence> seqs{assemble(train_prompt, visual, *lm)};
        const auto out = lm(pack(seqs));
        const auto loss = answer_cross_entropy(out.logits, seqs);
        opt.zero_grad();
        loss.backward();
        opt.step();
    }
    lm->eval();
    CHECK(generate_answer(*lm, assemble(query, visual, *lm)) == answer);
}
