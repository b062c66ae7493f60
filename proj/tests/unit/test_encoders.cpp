#include <doctest.h>

#include <cmath>
#include <numeric>

#include "attrirec/encoders.hpp"
#include "attrirec/errors.hpp"
#include "attrirec/random.hpp"

using namespace attrirec;

namespace {

double norm(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

bool all_zero(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

std::string random_text(Rng& rng) {
    const std::string alphabet = "abcdeXYZ019 -,.!\t";
    std::string s;
    const std::size_t n = rng.below(40);
    for (std::size_t k = 0; k < n; ++k) {
        s += alphabet[rng.below(alphabet.size())];
    }
    return s;
}

} // namespace

TEST_SUITE("modality-encoders") {

TEST_CASE("text encoder basics") {
    const EncoderConfig cfg;
    const ModalityFeature empty = encode_text("", cfg);
    CHECK_FALSE(empty.present);
    CHECK(empty.vector.size() == cfg.text_dim);
    CHECK(all_zero(empty.vector));
    CHECK_FALSE(encode_text(" ,;! ", cfg).present);

    CHECK(encode_text("crime thriller", cfg).vector == encode_text("crime thriller", cfg).vector);

    EncoderConfig unigram = cfg;
    unigram.ngram_orders = {1};
    CHECK(encode_text("crime thriller", unigram).vector == encode_text("thriller crime", unigram).vector);
    CHECK(encode_text("crime thriller", cfg).vector != encode_text("thriller crime", cfg).vector);
}

TEST_CASE("text encoder invariants over random strings") {
    Rng rng(8);
    EncoderConfig other;
    other.hash_seed = 99;
    const EncoderConfig cfg;
    bool seed_changed_something = false;
    for (int trial = 0; trial < 500; ++trial) {
        const std::string s = random_text(rng);
        const ModalityFeature f = encode_text(s, cfg);
        REQUIRE(f.vector.size() == cfg.text_dim);
        if (f.present) {
            REQUIRE(std::abs(norm(f.vector) - 1.0) <= 1e-9);
        } else {
            REQUIRE(all_zero(f.vector));
        }
        std::string upper = "  " + s + " \n";
        for (auto& ch : upper) {
            ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        }
        REQUIRE(encode_text(upper, cfg).vector == f.vector);

        const ModalityFeature g = encode_text(s, other);
        REQUIRE(g.present == f.present);
        if (g.present) {
            REQUIRE(std::abs(norm(g.vector) - 1.0) <= 1e-9);
            seed_changed_something = seed_changed_something || g.vector != f.vector;
        }
        REQUIRE(encode_text(s, other).vector == g.vector);
    }
    CHECK(seed_changed_something);
}

TEST_CASE("visual encoder") {
    EncoderConfig cfg;
    cfg.visual_dim = 2;
    const ModalityFeature f = encode_visual(std::vector<double>{3.0, 4.0}, cfg);
    CHECK(f.present);
    CHECK(f.vector[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(f.vector[1] == doctest::Approx(0.8).epsilon(1e-15));
    const ModalityFeature absent = encode_visual(std::nullopt, cfg);
    CHECK_FALSE(absent.present);
    CHECK(absent.vector == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(encode_visual(std::vector<double>{1, 2, 3}, cfg), InputError);
    CHECK_THROWS_AS(encode_visual(std::vector<double>{0, 0}, cfg), InputError);

    Rng rng(4);
    cfg.visual_dim = 16;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> raw(16);
        for (auto& x : raw) {
            x = rng.normal(0.0, 1e3);
        }
        REQUIRE(std::abs(norm(encode_visual(raw, cfg).vector) - 1.0) <= 1e-9);
    }
}

} // TEST_SUITE
