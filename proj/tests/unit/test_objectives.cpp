#include <doctest.h>

#include <cmath>

#include "../support/oracles.hpp"
#include "attrirec/errors.hpp"
#include "attrirec/objectives.hpp"
#include "attrirec/random.hpp"
#include "attrirec/text.hpp"

using namespace attrirec;

namespace {

std::vector<std::string> random_sentence(Rng& rng, std::size_t max_len, std::size_t vocab) {
    std::vector<std::string> out;
    const std::size_t n = rng.below(max_len + 1);
    for (std::size_t k = 0; k < n; ++k) {
        out.push_back("w" + std::to_string(rng.below(vocab)));
    }
    return out;
}

} // namespace

TEST_SUITE("objectives-suite") {

TEST_CASE("prediction loss") {
    CHECK(pred_loss(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(pred_loss(0.9, 0) == doctest::Approx(-std::log(0.1)).epsilon(1e-14));
    CHECK(pred_loss(1.0 - 1e-15, 1) < 1e-12);
    CHECK(std::isfinite(pred_loss(0.0, 1)));
    CHECK(pred_loss(0.0, 1) == doctest::Approx(-std::log(kProbabilityClamp)));
    Rng rng(1);
    for (int k = 0; k < 1000; ++k) {
        REQUIRE(pred_loss(rng.uniform(), static_cast<int>(rng.below(2))) >= 0.0);
    }
}

TEST_CASE("reason loss") {
    const std::vector<std::size_t> first = {0};
    CHECK(reason_loss(std::vector<double>{1.0, 0.0, 0.0}, first) == 0.0);
    const std::vector<double> uniform(5, 0.2);
    CHECK(reason_loss(uniform, std::vector<std::size_t>{1, 3}) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    CHECK(reason_loss(std::vector<double>{0.7, 0.2, 0.1}, std::vector<std::size_t>{0, 1}) ==
          doctest::Approx((-std::log(0.7) - std::log(0.2)) / 2.0).epsilon(1e-14));
    CHECK(reason_loss(std::vector<double>{0.7, 0.2, 0.1}, std::vector<std::size_t>{0, 1}) ==
          doctest::Approx(0.983056).epsilon(1e-6));
    CHECK(reason_loss(std::vector<double>{0.0, 1.0}, first) > 0.0);
    CHECK_THROWS_AS(reason_loss(uniform, std::vector<std::size_t>{}), InputError);
    CHECK_THROWS_AS(reason_loss(uniform, std::vector<std::size_t>{5}), InputError);
}

TEST_CASE("consistency loss") {
    CHECK(consistency_loss(0.3, 0.3) == 0.0);
    CHECK(consistency_loss(0.9, 0.1) == doctest::Approx(0.64).epsilon(1e-14));
    Rng rng(2);
    for (int k = 0; k < 100; ++k) {
        const double a = rng.uniform();
        const double b = rng.uniform();
        REQUIRE(consistency_loss(a, b) == consistency_loss(b, a));
    }
}

TEST_CASE("combine is the exact weighted sum") {
    CHECK(combine({1.0, 0.0, 0.0}, 0.6, 0.4, 0.2).total == 0.6);
    CHECK(combine({1.0, 0.5, 0.5}, 0.6, 0.4, 0.2).total == doctest::Approx(0.9).epsilon(1e-15));
    Rng rng(3);
    for (int k = 0; k < 10000; ++k) {
        const LossWeights w{rng.uniform(0, 3), rng.uniform(0, 3), rng.uniform(0, 3)};
        const double a = rng.uniform(0, 5);
        const double b = rng.uniform(0, 5);
        const double c = rng.uniform(0, 5);
        const LossBreakdown out = combine(w, a, b, c);
        REQUIRE(std::abs(out.total - (w.alpha * a + w.beta * b + w.gamma * c)) <= 1e-12);
        REQUIRE(out.l_pred == a);
        REQUIRE(out.l_reason == b);
        REQUIRE(out.l_consistency == c);
        const double s = rng.uniform(0, 4);
        const LossBreakdown scaled = combine({s * w.alpha, s * w.beta, s * w.gamma}, a, b, c);
        REQUIRE(std::abs(scaled.total - s * out.total) <= 1e-12 * std::max(1.0, std::abs(s * out.total)));
    }
}

TEST_CASE("loss weight validation") {
    CHECK_NOTHROW(LossWeights{}.validate());
    CHECK_THROWS_AS((LossWeights{0, 0, 0}.validate()), InputError);
    CHECK_THROWS_AS((LossWeights{-1, 1, 1}.validate()), InputError);
}

TEST_CASE("bleu basics") {
    const std::vector<std::string> ref = tokenize("because the user liked items with crime");
    CHECK(bleu(ref, ref) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bleu({}, ref) == 0.0);
    CHECK(bleu({"x"}, {"x"}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(bleu({"x"}, {}), InputError);
    CHECK(bleu_text("Because the USER liked items, with crime!", "because the user liked items with crime") ==
          doctest::Approx(1.0));

    // 6-token reference vs 4-token partial overlap, checked against the
    // written-out definition.
    const std::vector<std::string> r6 = {"the", "user", "liked", "crime", "and", "drama"};
    const std::vector<std::string> c4 = {"the", "user", "liked", "drama"};
    const double p1 = 4.0 / 4.0;
    const double p2 = (2.0 + 1.0) / (3.0 + 1.0);
    const double p3 = (1.0 + 1.0) / (2.0 + 1.0);
    const double p4 = (0.0 + 1.0) / (1.0 + 1.0);
    const double expected = std::exp(1.0 - 6.0 / 4.0) * std::pow(p1 * p2 * p3 * p4, 0.25);
    CHECK(bleu(c4, r6) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(oracle::bleu(c4, r6) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("bleu properties over random sentences") {
    Rng rng(77);
    for (int k = 0; k < 2000; ++k) {
        auto cand = random_sentence(rng, 9, 6);
        auto ref = random_sentence(rng, 9, 6);
        if (ref.empty()) {
            ref.push_back("w0");
        }
        const double b = bleu(cand, ref);
        REQUIRE(b >= 0.0);
        REQUIRE(b <= 1.0 + 1e-15);
        REQUIRE(std::abs(b - oracle::bleu(cand, ref)) <= 1e-12);
        if (!cand.empty()) {
            REQUIRE(bleu(cand, cand) == doctest::Approx(1.0).epsilon(1e-15));
        }
        // Joint relabeling of the vocabulary.
        auto relabel = [](std::vector<std::string> v) {
            for (auto& w : v) {
                w = "q" + w + "z";
            }
            return v;
        };
        REQUIRE(bleu(relabel(cand), relabel(ref)) == b);
    }
}

TEST_CASE("tokenizer") {
    CHECK(tokenize("Crime-Thriller, 2nd  ED!") == std::vector<std::string>{"crime", "thriller", "2nd", "ed"});
    CHECK(tokenize("   ").empty());
    CHECK(tokenize("caf\xc3\xa9 noir") == std::vector<std::string>{"caf\xc3\xa9", "noir"});
}

} // TEST_SUITE
