#include "attrirec/encoders.hpp"

#include <cmath>
#include <string>

#include "attrirec/errors.hpp"
#include "attrirec/random.hpp"
#include "attrirec/text.hpp"

namespace attrirec {

namespace {

std::uint64_t hash_gram(std::string_view gram, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix_seed(seed, 0);
    for (const char c : gram) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return mix_seed(h, seed);
}

bool normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (const double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        return false;
    }
    for (double& x : v) {
        x /= norm;
    }
    return true;
}

} // namespace

ModalityFeature encode_text(std::string_view text, const EncoderConfig& config) {
    if (config.text_dim == 0) {
        throw InputError("text_dim must be positive");
    }
    ModalityFeature feature;
    feature.vector.assign(config.text_dim, 0.0);
    const auto tokens = tokenize(text);
    for (const std::size_t order : config.ngram_orders) {
        if (order == 0 || tokens.size() < order) {
            continue;
        }
        for (std::size_t start = 0; start + order <= tokens.size(); ++start) {
            std::string gram = std::to_string(order);
            for (std::size_t k = 0; k < order; ++k) {
                gram += '\x1f';
                gram += tokens[start + k];
            }
            const std::uint64_t h = hash_gram(gram, config.hash_seed);
            const std::size_t bucket = static_cast<std::size_t>(h % config.text_dim);
            const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
            feature.vector[bucket] += sign;
        }
    }
    feature.present = normalize(feature.vector);
    if (!feature.present) {
        feature.vector.assign(config.text_dim, 0.0);
    }
    return feature;
}

ModalityFeature encode_visual(const std::optional<std::vector<double>>& raw, const EncoderConfig& config) {
    ModalityFeature feature;
    if (!raw) {
        feature.vector.assign(config.visual_dim, 0.0);
        return feature;
    }
    if (raw->size() != config.visual_dim) {
        throw InputError("visual feature has dimension " + std::to_string(raw->size()) + ", expected " +
                         std::to_string(config.visual_dim));
    }
    for (const double x : *raw) {
        if (!std::isfinite(x)) {
            throw InputError("visual feature contains a non-finite value");
        }
    }
    feature.vector = *raw;
    if (!normalize(feature.vector)) {
        throw InputError("visual feature is all zeros");
    }
    feature.present = true;
    return feature;
}

} // namespace attrirec
