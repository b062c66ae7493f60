#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

namespace attrirec {

struct EncoderConfig {
    std::size_t text_dim = 64;
    std::size_t visual_dim = 16;
    std::set<std::size_t> ngram_orders = {1, 2};
    std::uint64_t hash_seed = 0x5eed;
};

// present == false implies an all-zero vector; present == true implies
// unit L2 norm.
struct ModalityFeature {
    std::vector<double> vector;
    bool present = false;

    bool operator==(const ModalityFeature&) const = default;
};

// Signed feature hashing over token n-grams, then L2 normalization.
// A text with no tokens (or whose buckets cancel out) is absent.
ModalityFeature encode_text(std::string_view text, const EncoderConfig& config);

// Throws InputError on a dimension mismatch or an all-zero vector.
ModalityFeature encode_visual(const std::optional<std::vector<double>>& raw, const EncoderConfig& config);

} // namespace attrirec
