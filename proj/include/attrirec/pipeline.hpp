#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "attrirec/data.hpp"
#include "attrirec/encoders.hpp"
#include "attrirec/features.hpp"
#include "attrirec/instruction.hpp"
#include "attrirec/knowledge_base.hpp"
#include "attrirec/model.hpp"
#include "attrirec/objectives.hpp"
#include "attrirec/tasks.hpp"
#include "attrirec/trainer.hpp"

namespace attrirec {

struct EvalConfig {
    std::vector<std::size_t> ks = {5, 10};
    std::size_t n_negatives = 50;
};

// Every knob of a train/evaluate run.
struct PipelineConfig {
    EncoderConfig encoder;
    std::size_t latent = 32;
    std::size_t max_history = 20;
    SplitRatios ratios;
    std::size_t coldstart_threshold = 5;
    LossWeights loss;
    TaskWeights tasks;
    OptimizerState optimizer;
    TrainConfig train;
    MetaConfig meta;
    ZeroShotMix mix;
    ZeroShotMix cross_mix{0.2, 0.6, 0.2};
    double kb_smoothing = 5.0;
    EvalConfig eval;
    std::uint64_t seed = 7;

    void validate() const;
};

// Train and valid examples plus the shared per-user history index.
struct PreparedData {
    FeatureTable features;
    HistoryIndex history;
    std::vector<TrainingExample> train;
    std::vector<TrainingExample> valid;
};

PreparedData prepare(const Corpus& corpus, const DatasetSplit& split, const PipelineConfig& config);

ModelDims model_dims(const Corpus& corpus, const PipelineConfig& config);

CheckpointMeta checkpoint_meta(const Corpus& corpus, const EncoderConfig& encoder);

struct FitResult {
    TrainResult trained;
    PreparedData data;
};

// Seeded init followed by train().
FitResult fit(const Corpus& corpus, const DatasetSplit& split, const PipelineConfig& config);

// Model scores against precomputed item representations, with each user's
// train history as context.
// Instruction for (user, item) built from the user's train rows, minus
// `exclude` when given. Each history item appears once, at its latest
// rating. With a target row the expected verdict and recorded reason are
// filled in.
AttributionInstruction instruction_for(const Corpus& corpus, const HistoryIndex& history, std::size_t user,
                                       std::size_t item, std::optional<std::size_t> target_row = std::nullopt,
                                       std::optional<std::size_t> exclude = std::nullopt);

class ModelView {
public:
    ModelView(const Corpus& corpus, const FeatureTable& features, const ModelParams& params,
              const HistoryIndex& history, std::size_t max_history);
    ModelView(const ModelView&) = delete;
    ModelView& operator=(const ModelView&) = delete;
    ModelView(ModelView&&) = default;

    double score(std::size_t user, std::size_t item) const;
    PredictionOutput predict(std::size_t user, std::size_t item) const;
    std::vector<double> score_items(std::size_t user, std::span<const std::size_t> items) const;

    const ModelParams& params() const { return *params_; }

private:
    const std::vector<SignedItem>& user_history(std::size_t user) const;

    const Corpus* corpus_;
    const ModelParams* params_;
    const HistoryIndex* history_;
    std::size_t max_history_;
    std::vector<FusedItem> items_;
    mutable std::map<std::size_t, std::vector<HistoryEntry>> raw_history_;
    mutable std::map<std::size_t, std::vector<SignedItem>> signed_;
};

} // namespace attrirec
