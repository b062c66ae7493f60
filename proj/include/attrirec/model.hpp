#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attrirec/encoders.hpp"
#include "attrirec/features.hpp"
#include "attrirec/objectives.hpp"
#include "attrirec/tasks.hpp"

namespace attrirec {

struct ModelDims {
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    std::size_t latent = 32;
    std::size_t text_dim = 64;
    std::size_t visual_dim = 16;
    std::size_t n_attributes = 0;

    bool operator==(const ModelDims&) const = default;
};

// Parameter blocks, in flattening order.
enum class Block : std::size_t {
    user_embed,    // n_users x latent
    item_embed,    // n_items x latent
    w_text,        // latent x text_dim
    w_visual,      // latent x visual_dim
    attn_vec,      // latent
    attn_bias,     // 2: text, visual
    pred_bias,     // 1
    attr_head,     // n_attributes x latent
    polarity_head, // latent
    polarity_bias, // 1
    rating_head,   // latent
    rating_bias,   // 1
};

inline constexpr std::size_t kBlockCount = 12;

std::string_view block_name(Block block);

struct BlockRange {
    std::size_t offset = 0;
    std::size_t size = 0;
};

class ParamLayout {
public:
    explicit ParamLayout(const ModelDims& dims);

    const BlockRange& operator[](Block block) const { return ranges_[static_cast<std::size_t>(block)]; }
    std::size_t total() const { return total_; }

private:
    std::array<BlockRange, kBlockCount> ranges_{};
    std::size_t total_ = 0;
};

// All trainable values live in one flat vector; blocks are views into it.
// Matrices are row-major.
class ModelParams {
public:
    explicit ModelParams(const ModelDims& dims);

    const ModelDims& dims() const { return dims_; }
    const ParamLayout& layout() const { return layout_; }

    std::span<double> block(Block b);
    std::span<const double> block(Block b) const;

    std::span<double> user_row(std::size_t u);
    std::span<const double> user_row(std::size_t u) const;
    std::span<double> item_row(std::size_t i);
    std::span<const double> item_row(std::size_t i) const;

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    std::vector<double> flatten() const { return values_; }

    // Throws InputError when flat.size() differs from the layout total.
    static ModelParams unflatten(const ModelDims& dims, std::span<const double> flat);

    bool operator==(const ModelParams& other) const {
        return dims_ == other.dims_ && values_ == other.values_;
    }

private:
    ModelDims dims_;
    ParamLayout layout_;
    std::vector<double> values_;
};

// Embeddings, projection matrices, attention vector and heads drawn from a
// seeded uniform(-0.1, 0.1); biases start at zero.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

struct FusedItem {
    std::vector<double> h_multi;
    double a_text = 0.0;
    double a_visual = 0.0;
};

// Additive attention over the present modalities:
// z_m = W_m x_m, s_m = attn_vec . tanh(z_m) + bias_m, a = softmax(s),
// h_multi = sum_m a_m z_m. Throws InputError when both are absent.
FusedItem fuse(const ModalityFeature& text, const ModalityFeature& visual, const ModelParams& params);

// Catalog item representation: the fused content vector plus the item's
// own embedding row. An item with no content is its embedding alone.
FusedItem represent_item(std::size_t item, const FeatureTable& features, const ModelParams& params);

struct SignedItem {
    const FusedItem* item = nullptr;
    int sign = 1;
};

// c = user_embed[u] + mean_j sign_j h_j.
std::vector<double> user_context(std::size_t user, std::span<const SignedItem> history, const ModelParams& params);

// c . h + pred_bias. Throws InputError on a bad user index.
double preference_logit(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                        const ModelParams& params);

// sigmoid(c . h + pred_bias). Throws InputError on a bad user index.
double score(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
             const ModelParams& params);

struct Explanation {
    std::vector<double> attr_dist;
    double p_polarity = 0.5;
    std::string reason_text;
    std::vector<std::size_t> top_attributes;
};

// attr_dist = softmax(attr_head (c * h)); p_polarity = sigmoid(polarity_head . h + b).
// The reason names the top_k attributes, ties in vocabulary order.
Explanation explain(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                    const ModelParams& params, const std::vector<std::string>& attr_vocab,
                    std::size_t top_k = 2);

// 1 + 4 sigmoid(rating_head . (c * h) + b).
double rate(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
            const ModelParams& params);

struct PredictionOutput {
    double p_like = 0.5;
    std::vector<double> attr_dist;
    double p_polarity = 0.5;
    double rating_est = 3.0;
    std::string reason_text;
    std::vector<std::size_t> top_attributes;
};

PredictionOutput predict(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                         const ModelParams& params, const std::vector<std::string>& attr_vocab,
                         std::size_t top_k = 2);

// Representations of every catalog item under fixed parameters.
std::vector<FusedItem> represent_all(const FeatureTable& features, const ModelParams& params);

std::vector<SignedItem> signed_history(std::span<const HistoryEntry> history, const std::vector<FusedItem>& items);

// Prediction for one example against precomputed item representations.
PredictionOutput predict_example(const TrainingExample& example, const std::vector<FusedItem>& items,
                                 const ModelParams& params, const std::vector<std::string>& attr_vocab);

struct GradientResult {
    TaskLosses tasks;
    LossBreakdown attribution; // alpha/beta/gamma breakdown over the batch
    std::vector<double> gradient; // aligned with flatten(params)
};

// Mean-reduced objective over the batch:
//   pred  = alpha * BCE,                    every example
//   exp   = beta * reason NLL + gamma * consistency,
//          reason over examples with truth attributes
//   rate  = squared rating error / 16,      every example
//   cross = BCE,                            cross-domain examples only
// total = sum of lambda_t * task_t over the active tasks.
// Computes the same quantities as multitask_loss along with the exact
// gradient. Throws NumericError naming a non-finite term.
GradientResult forward_backward(std::span<const TrainingExample> batch, const ModelParams& params,
                                const FeatureTable& features, const LossWeights& loss_weights,
                                const TaskWeights& task_weights);

// Forward-only objective built from the public score/explain/rate functions.
// Throws InputError when the batch is empty or no task is active.
TaskLosses multitask_loss(std::span<const TrainingExample> batch, const ModelParams& params,
                          const FeatureTable& features, const TaskWeights& task_weights,
                          const LossWeights& loss_weights);

// Vocabularies a checkpoint carries so it can be applied to a corpus later.
struct CheckpointMeta {
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    std::vector<std::string> attributes;
    EncoderConfig encoder;
};

// JSON document {"header": {...}, "values": [...]}, doubles in shortest
// round-trip form. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta);

struct Checkpoint {
    ModelParams params;
    CheckpointMeta meta;
};

// Throws InputError on a malformed or mismatched file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace attrirec
