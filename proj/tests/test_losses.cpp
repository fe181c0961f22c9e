#include <doctest.h>

#include <random>

#include "geopix/language_model.hpp"
#include "geopix/losses.hpp"
#include "geopix/prompt.hpp"
#include "geopix/tokenizer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace geopix;

namespace {

std::vector<double> to_vector(const torch::Tensor& t) {
    const auto c = t.detach().to(torch::kFloat64).contiguous().reshape(-1);
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

torch::Tensor to_tensor(const std::vector<double>& v, torch::IntArrayRef shape) {
    return torch::tensor(v, torch::kFloat64).reshape(shape);
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

std::vector<double> random_binary(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng() % 2);
    return v;
}

std::vector<MultimodalSequence> sequences(CausalLM& lm, const std::vector<std::pair<Task, std::optional<std::string>>>& items) {
    std::vector<MultimodalSequence> out;
    const TemplateConfig tc;
    for (const auto& [task, answer] : items) {
        const PromptTokens p = build_prompt("find the pond", answer, PromptTemplate::for_task(tc, task));
        out.push_back(assemble(p, torch::randn({4, lm->config().hidden_size}), *lm));
    }
    return out;
}

CausalLM tiny_lm() {
    LMConfig c;
    c.hidden_size = 16;
    c.layers = 1;
    c.heads = 2;
    return CausalLM(c);
}

}  // namespace

TEST_CASE("focal loss matches the elementwise oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto logits = random_values(300, seed, 3.0);
        const auto target = random_binary(300, seed + 100);
        for (const auto& [alpha, gamma] : std::vector<std::pair<double, double>>{{0.25, 2.0}, {0.5, 0.0}, {0.8, 1.5}}) {
            const double got = focal_loss(to_tensor(logits, {300}), to_tensor(target, {300}), alpha, gamma).item<double>();
            CHECK(got == doctest::Approx(oracle::focal(logits, target, alpha, gamma)).epsilon(1e-6));
        }
    }
}

TEST_CASE("focal loss with gamma 0 and alpha 0.5 is half the binary cross-entropy") {
    const auto logits = random_values(200, 7, 4.0);
    const auto target = random_binary(200, 8);
    const double got = focal_loss(to_tensor(logits, {10, 20}), to_tensor(target, {10, 20}), 0.5, 0.0).item<double>();
    CHECK(std::abs(got - 0.5 * oracle::bce(logits, target)) <= 1e-8);
}

TEST_CASE("focal loss is stable at extreme logits") {
    const auto logits = torch::tensor({-80.0, 80.0, -80.0, 80.0}, torch::kFloat32);
    const auto target = torch::tensor({0.0, 1.0, 1.0, 0.0}, torch::kFloat32);
    const auto loss = focal_loss(logits, target, 0.25, 2.0);
    CHECK(test::all_finite(loss));
    CHECK(loss.item<double>() > 1.0);
}

TEST_CASE("loss gradients match finite differences") {
    const auto logits = random_values(40, 11, 2.0);
    const auto target = random_binary(40, 12);

    auto check = [&](const std::function<torch::Tensor(const torch::Tensor&)>& loss) {
        auto x = to_tensor(logits, {40}).requires_grad_(true);
        loss(x).backward();
        const auto analytic = to_vector(x.grad());
        const auto numeric =
            oracle::numeric_gradient([&](const std::vector<double>& v) { return loss(to_tensor(v, {40})).item<double>(); }, logits);
        for (std::size_t i = 0; i < numeric.size(); ++i) CHECK(std::abs(analytic[i] - numeric[i]) <= 1e-4);
    };
    const auto t = to_tensor(target, {40});
    check([&](const torch::Tensor& x) { return focal_loss(x, t, 0.25, 2.0); });
    check([&](const torch::Tensor& x) { return dice_loss(torch::sigmoid(x), t, 1.0); });
}

TEST_CASE("dice loss") {
    const auto p = random_values(64, 13, 1.0);
    std::vector<double> probs;
    for (const double v : p) probs.push_back(oracle::sigmoid(v));
    const auto target = random_binary(64, 14);
    CHECK(dice_loss(to_tensor(probs, {8, 8}), to_tensor(target, {8, 8}), 1.0).item<double>() ==
          doctest::Approx(oracle::dice(probs, target, 1.0)).epsilon(1e-12));

    const auto t = to_tensor(target, {8, 8});
    CHECK(dice_loss(t, t, 1.0).item<double>() == doctest::Approx(0.0));
    const auto disjoint = 1.0 - t;
    const double s = 1.0;
    CHECK(dice_loss(disjoint, t, s).item<double>() ==
          doctest::Approx(1.0 - s / (64.0 + s)).epsilon(1e-12));
    CHECK(dice_loss(torch::zeros({8, 8}), torch::zeros({8, 8}), 1.0).item<double>() == 0.0);

    // Per-mask reduction over a batch.
    const auto batch = torch::stack({t, disjoint});
    const auto truth = torch::stack({t, t});
    CHECK(dice_loss(batch, truth, s).item<double>() == doctest::Approx(0.5 * (1.0 - s / (64.0 + s))).epsilon(1e-12));
}

TEST_CASE("combined loss matches the oracle at two resolutions") {
    torch::manual_seed(15);
    CausalLM lm = tiny_lm();
    const auto seqs = sequences(lm, {{Task::referring, std::nullopt}, {Task::referring, std::nullopt}});
    const auto text_logits = torch::randn({2, seqs[0].length(), ByteTokenizer::kVocabSize});
    const auto full = to_tensor(random_binary(2 * 16 * 16, 16), {2, 16, 16}).to(torch::kFloat32);
    const auto fine = torch::randn({2, 16, 16}) * 2;
    const auto coarse = torch::randn({2, 8, 8}) * 2;

    LossConfig cfg;
    cfg.w_focal = 2.0;
    cfg.w_dice = 0.5;
    const LossBreakdown got = combined_loss({fine, coarse}, text_logits, seqs, full, cfg);

    // Half-pixel nearest downsampling by 2 picks odd rows and columns.
    const auto small = full.index({torch::indexing::Slice(), torch::indexing::Slice(1, 16, 2), torch::indexing::Slice(1, 16, 2)});
    double focal = 0.0, dice = 0.0;
    for (const auto& [logits, target] : {std::pair{fine, full}, std::pair{coarse, small}}) {
        focal += oracle::focal(to_vector(logits), to_vector(target), cfg.focal_alpha, cfg.focal_gamma);
        double d = 0.0;
        for (int n = 0; n < 2; ++n) {
            std::vector<double> probs;
            for (const double v : to_vector(logits[n])) probs.push_back(oracle::sigmoid(v));
            d += oracle::dice(probs, to_vector(target[n]), cfg.dice_smooth);
        }
        dice += d / 2.0;
    }
    CHECK(got.focal.item<double>() == doctest::Approx(cfg.w_focal * focal / 2.0).epsilon(1e-6));
    CHECK(got.dice.item<double>() == doctest::Approx(cfg.w_dice * dice / 2.0).epsilon(1e-6));
    CHECK(got.text_ce.item<double>() == 0.0);
    CHECK(got.total.item<double>() == doctest::Approx(got.focal.item<double>() + got.dice.item<double>()).epsilon(1e-6));
}

TEST_CASE("loss weights") {
    torch::manual_seed(17);
    CausalLM lm = tiny_lm();
    const auto seqs = sequences(lm, {{Task::reasoning, std::string("It is on the left.")}, {Task::referring, std::nullopt}});
    const auto text_logits = torch::randn({2, std::max(seqs[0].length(), seqs[1].length()), ByteTokenizer::kVocabSize});
    const auto targets = (torch::rand({2, 16, 16}) > 0.5).to(torch::kFloat32);
    const std::vector<torch::Tensor> logits{torch::randn({2, 4, 4}), torch::randn({2, 4, 4})};

    const LossBreakdown base = combined_loss(logits, text_logits, seqs, targets, LossConfig{});
    CHECK(base.text_ce.item<double>() > 0.0);
    const std::vector<MultimodalSequence> reasoning_only{seqs[0]};
    CHECK(base.text_ce.item<double>() ==
          doctest::Approx(answer_cross_entropy(text_logits.slice(0, 0, 1), reasoning_only).item<double>()).epsilon(1e-9));

    LossConfig doubled;
    doubled.w_dice = 2.0;
    const LossBreakdown d = combined_loss(logits, text_logits, seqs, targets, doubled);
    CHECK(d.dice.item<double>() == doctest::Approx(2.0 * base.dice.item<double>()).epsilon(1e-9));
    CHECK(d.focal.item<double>() == base.focal.item<double>());

    LossConfig zero;
    zero.w_focal = zero.w_dice = zero.w_text_ce = 0.0;
    CHECK(combined_loss(logits, text_logits, seqs, targets, zero).total.item<double>() == 0.0);

    auto missing = seqs;
    missing[0].answer.reset();
    CHECK_THROWS_AS(combined_loss(logits, text_logits, missing, targets, LossConfig{}), std::invalid_argument);
}

TEST_CASE("combined loss gradient on 4x4 inputs matches finite differences") {
    torch::manual_seed(19);
    CausalLM lm = tiny_lm();
    const auto seqs = sequences(lm, {{Task::referring, std::nullopt}});
    const auto text_logits = torch::randn({1, seqs[0].length(), ByteTokenizer::kVocabSize}, torch::kFloat64);
    const auto target = to_tensor(random_binary(16, 20), {1, 4, 4});
    const auto x0 = random_values(16 + 4, 21, 2.0);

    auto loss = [&](const torch::Tensor& flat) {
        const std::vector<torch::Tensor> logits{flat.slice(0, 0, 16).reshape({1, 4, 4}), flat.slice(0, 16).reshape({1, 2, 2})};
        return combined_loss(logits, text_logits, seqs, target, LossConfig{}).total;
    };
    auto x = to_tensor(x0, {20}).requires_grad_(true);
    loss(x).backward();
    const auto analytic = to_vector(x.grad());
    const auto numeric =
        oracle::numeric_gradient([&](const std::vector<double>& v) { return loss(to_tensor(v, {20})).item<double>(); }, x0);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        CHECK(std::abs(analytic[i] - numeric[i]) <= 1e-4 * std::max(1.0, std::abs(numeric[i])));
    }
}
