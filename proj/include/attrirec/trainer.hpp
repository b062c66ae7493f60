#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "attrirec/features.hpp"
#include "attrirec/model.hpp"
#include "attrirec/objectives.hpp"
#include "attrirec/tasks.hpp"

namespace attrirec {

// lambda_t <- lambda_t * exp(-eta * L_t) for active tasks, then clamp to the
// floor and rescale so the active lambdas sum to renorm_target. Inactive
// tasks keep their value. Throws InputError on negative or non-finite losses.
TaskWeights update_task_weights(const TaskWeights& weights, const TaskLosses& losses);

struct OptimizerState {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double grad_clip = 5.0; // max L2 norm; <= 0 disables clipping
    double weight_decay = 0.0; // L2 coefficient folded into the gradient
    std::vector<double> velocity;

    void validate() const;
};

// Clip, accumulate velocity, step. Returns the pre-clip gradient norm.
// An empty velocity is sized to the parameters on first use. Throws
// NumericError for a non-finite gradient, InputError on a length mismatch.
double sgd_step(std::span<double> params, std::span<const double> gradient, OptimizerState& opt);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::size_t patience = 5;
    bool adaptive_task_weights = true;
    bool record_wall_clock = false; // off keeps reports byte-identical across reruns
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    std::array<double, kTaskCount> task_loss{};
    std::array<bool, kTaskCount> task_active{};
    std::array<double, kTaskCount> lambdas{}; // after this epoch's update
    LossBreakdown attribution;                // epoch means
    double mean_grad_norm = 0.0;
    double max_grad_norm = 0.0;
    std::optional<double> valid_auc;
    double wall_clock_seconds = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainReport {
    std::uint64_t seed = 0;
    std::string config_echo;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    std::optional<double> best_valid_auc;
    bool early_stopped = false;
};

struct TrainResult {
    ModelParams params;
    TaskWeights task_weights;
    TrainReport report;
};

// Pooled AUC of p_like over the examples, nullopt when single-class.
std::optional<double> example_auc(std::span<const TrainingExample> examples, const ModelParams& params,
                                  const FeatureTable& features);

// Mini-batch training. The best-validation parameters are returned when a
// validation AUC is available, the last ones otherwise. Throws InputError on
// an empty train set.
TrainResult train(const ModelParams& initial, const FeatureTable& features, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> valid_set, const LossWeights& loss_weights,
                  const TaskWeights& task_weights, OptimizerState optimizer, const TrainConfig& config);

// Report as JSON Lines, one object per epoch.
std::string report_jsonl(const TrainReport& report);

struct MetaConfig {
    double inner_lr = 0.1;
    std::size_t inner_steps = 3;
    // Whole blocks eligible for adaptation; defaults to every head.
    std::set<Block> blocks = {Block::pred_bias,     Block::attr_head,   Block::polarity_head,
                              Block::polarity_bias, Block::rating_head, Block::rating_bias};
    // Also adapt the embedding row of the entity the support set is about.
    bool entity_row = true;

    void validate() const;
};

enum class EntityKind { user, item };

struct Entity {
    EntityKind kind = EntityKind::user;
    std::size_t index = 0;
};

// 1 where a parameter may move during adaptation.
std::vector<char> adaptation_mask(const ModelParams& params, const MetaConfig& meta, std::optional<Entity> entity);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// theta <- theta - lr * (mask . grad(theta)), steps times.
std::vector<double> adapt_steps(std::vector<double> theta, std::span<const char> mask, double lr,
                                std::size_t steps, const GradientFn& grad);

// Few-step adaptation of a copy of base on the support set under the
// prediction + attribution objective. The entity defaults to the user
// (or item) every support example shares. Empty support returns base.
// Throws InputError for unknown indices or an ambiguous entity.
ModelParams meta_adapt(const ModelParams& base, std::span<const TrainingExample> support,
                       const FeatureTable& features, const MetaConfig& meta, const LossWeights& loss_weights,
                       std::optional<Entity> entity = std::nullopt);

} // namespace attrirec
