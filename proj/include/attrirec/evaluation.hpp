#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrirec/data.hpp"
#include "attrirec/knowledge_base.hpp"
#include "attrirec/pipeline.hpp"

namespace attrirec {

struct MetricsReport {
    std::string bucket;
    std::string variant;
    std::optional<double> auc;              // mean per-user AUC over candidates
    std::map<std::size_t, double> ndcg_at;
    std::map<std::size_t, double> hit_at;
    std::optional<double> interaction_auc;  // pooled over the rated rows alone
    std::optional<double> mean_bleu;
    std::optional<double> consistency_rate;
    std::size_t n_cases = 0;                // rated rows evaluated
    std::size_t n_users = 0;                // users contributing ranking metrics

    bool operator==(const MetricsReport&) const = default;
};

// Scores for one user over a candidate item list.
using Scorer = std::function<std::vector<double>(std::size_t user, std::span<const std::size_t> items)>;

struct ExplainedCase {
    double p_like = 0.5;
    double p_polarity = 0.5;
    std::string reason_text;
};

// Explanation for one interaction row.
using Explainer = std::function<ExplainedCase(std::size_t row)>;

// Whether an item may serve as a sampled negative for a user.
using NegativeFilter = std::function<bool(std::size_t user, std::size_t item)>;

struct EvalRequest {
    std::vector<std::size_t> rows;          // rated rows under evaluation
    EvalConfig config;
    std::uint64_t seed = 0;
    Explainer explainer;                    // optional
    NegativeFilter negatives;               // optional
};

// Per user: the user's rows plus n_negatives items sampled from those the
// user never interacted with. Ranking ties fall back to item_id order.
// Users without a positive row are left out of the ranking averages.
// Throws InputError on an empty row list.
MetricsReport evaluate(const Corpus& corpus, const Scorer& scorer, const EvalRequest& request);

// Per-user negatives, as evaluate draws them.
std::vector<std::size_t> sample_negatives(const Corpus& corpus, std::size_t user, std::size_t count,
                                          std::uint64_t seed, const NegativeFilter& filter = {});

Scorer model_scorer(const ModelView& view);
Explainer model_explainer(const Corpus& corpus, const ModelView& view);

// evaluate() over the test split with the model's scores and explanations.
MetricsReport evaluate_model(const Corpus& corpus, const DatasetSplit& split, const PreparedData& data,
                             const ModelParams& params, const PipelineConfig& config);

struct ColdstartResult {
    std::map<std::string, MetricsReport> buckets;
    std::vector<std::string> warnings;
};

// Buckets:
//   new_users              zero-shot over the cold users' test rows
//   new_users_meta_adapted the model after meta_adapt on each cold user's
//                          train rows (at most 5)
//   new_items              zero-shot over test rows whose item is unseen in train
//   cross_domain           cross-weighted zero-shot over test rows outside the
//                          user's home domain, using home-domain history
// With kb == nullptr every zero-shot score comes from the unadapted model.
// Empty buckets are omitted and noted in warnings.
ColdstartResult coldstart_eval(const Corpus& corpus, const DatasetSplit& split, const PreparedData& data,
                               const ModelParams& params, const KnowledgeBase* kb, const PipelineConfig& config);

struct AblationRow {
    std::string variant;
    MetricsReport test;
    std::optional<double> new_user_auc;
    std::optional<double> cross_domain_auc;
};

// full, no_attribution, no_zero_shot, no_multimodal, no_multitask; every
// variant from the same seed.
std::vector<AblationRow> ablation_run(const Corpus& corpus, const DatasetSplit& split, const PipelineConfig& config);

// JSON object for one report, with an optional config echo.
std::string report_json(const MetricsReport& report, const std::string& config_echo = {});

} // namespace attrirec
