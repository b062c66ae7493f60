#include "attrirec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "attrirec/errors.hpp"
#include "attrirec/metrics.hpp"
#include "attrirec/objectives.hpp"
#include "attrirec/random.hpp"

namespace attrirec {

namespace {

enum Stream : std::uint64_t { kEval = 3 };

std::vector<std::set<std::size_t>> interacted(const Corpus& corpus) {
    std::vector<std::set<std::size_t>> seen(corpus.users().size());
    for (std::size_t r = 0; r < corpus.interactions().size(); ++r) {
        seen[corpus.user_of(r)].insert(corpus.item_of(r));
    }
    return seen;
}

std::vector<std::size_t> sample_from(const Corpus& corpus, std::size_t user, std::size_t count, std::uint64_t seed,
                                     const NegativeFilter& filter, const std::set<std::size_t>& seen) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < corpus.items().size(); ++i) {
        if (!seen.contains(i) && (!filter || filter(user, i))) {
            pool.push_back(i);
        }
    }
    if (pool.size() <= count) {
        return pool;
    }
    Rng rng(mix_seed(seed, user));
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.below(pool.size() - k));
        std::swap(pool[k], pool[j]);
    }
    pool.resize(count);
    return pool;
}

} // namespace

std::vector<std::size_t> sample_negatives(const Corpus& corpus, std::size_t user, std::size_t count,
                                          std::uint64_t seed, const NegativeFilter& filter) {
    if (user >= corpus.users().size()) {
        throw InputError("user index out of range");
    }
    std::set<std::size_t> seen;
    for (std::size_t r = 0; r < corpus.interactions().size(); ++r) {
        if (corpus.user_of(r) == user) {
            seen.insert(corpus.item_of(r));
        }
    }
    return sample_from(corpus, user, count, seed, filter, seen);
}

MetricsReport evaluate(const Corpus& corpus, const Scorer& scorer, const EvalRequest& request) {
    if (request.rows.empty()) {
        throw InputError("cannot evaluate an empty split");
    }
    const auto& log = corpus.interactions();
    const auto& items = corpus.items();
    const auto seen = interacted(corpus);

    std::map<std::size_t, std::vector<std::size_t>> by_user;
    for (const std::size_t r : request.rows) {
        if (r >= log.size()) {
            throw InputError("evaluation row out of range");
        }
        by_user[corpus.user_of(r)].push_back(r);
    }

    MetricsReport report;
    report.n_cases = request.rows.size();
    double auc_sum = 0.0;
    std::map<std::size_t, double> ndcg_sum;
    std::map<std::size_t, double> hit_sum;
    std::vector<double> pooled_scores;
    std::vector<int> pooled_labels;

    for (const auto& [user, rows] : by_user) {
        std::vector<std::size_t> candidates;
        std::vector<int> labels;
        for (const std::size_t r : rows) {
            candidates.push_back(corpus.item_of(r));
            labels.push_back(binarize(log[r].rating));
        }
        const auto negatives =
            sample_from(corpus, user, request.config.n_negatives, request.seed, request.negatives, seen[user]);
        candidates.insert(candidates.end(), negatives.begin(), negatives.end());
        labels.resize(candidates.size(), 0);

        const std::vector<double> scores = scorer(user, candidates);
        if (scores.size() != candidates.size()) {
            throw InputError("scorer returned the wrong number of scores");
        }
        for (const double s : scores) {
            if (!std::isfinite(s)) {
                throw NumericError("score", "scorer returned a non-finite score");
            }
        }
        for (std::size_t k = 0; k < rows.size(); ++k) {
            pooled_scores.push_back(scores[k]);
            pooled_labels.push_back(labels[k]);
        }
        const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
        const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
        if (!has_pos || !has_neg) {
            continue;
        }
        ++report.n_users;
        auc_sum += auc(scores, labels);
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) {
                return scores[a] > scores[b];
            }
            const auto& ia = items[candidates[a]].item_id;
            const auto& ib = items[candidates[b]].item_id;
            return ia != ib ? ia < ib : a < b;
        });
        std::vector<int> ranked;
        ranked.reserve(order.size());
        for (const std::size_t o : order) {
            ranked.push_back(labels[o]);
        }
        for (const std::size_t k : request.config.ks) {
            ndcg_sum[k] += ndcg_at_k(ranked, k);
            hit_sum[k] += hit_at_k(ranked, k);
        }
    }

    if (report.n_users > 0) {
        const double n = static_cast<double>(report.n_users);
        report.auc = auc_sum / n;
        for (const std::size_t k : request.config.ks) {
            report.ndcg_at[k] = ndcg_sum[k] / n;
            report.hit_at[k] = hit_sum[k] / n;
        }
    }
    const bool pooled_pos = std::find(pooled_labels.begin(), pooled_labels.end(), 1) != pooled_labels.end();
    const bool pooled_neg = std::find(pooled_labels.begin(), pooled_labels.end(), 0) != pooled_labels.end();
    if (pooled_pos && pooled_neg) {
        report.interaction_auc = auc(pooled_scores, pooled_labels);
    }

    if (request.explainer) {
        double bleu_sum = 0.0;
        std::size_t bleu_cases = 0;
        std::size_t agree = 0;
        for (const std::size_t r : request.rows) {
            const ExplainedCase c = request.explainer(r);
            agree += (c.p_like >= 0.5) == (c.p_polarity >= 0.5) ? 1 : 0;
            if (!log[r].reason.empty() && !c.reason_text.empty()) {
                bleu_sum += bleu_text(c.reason_text, log[r].reason);
                ++bleu_cases;
            }
        }
        report.consistency_rate = static_cast<double>(agree) / static_cast<double>(request.rows.size());
        if (bleu_cases > 0) {
            report.mean_bleu = bleu_sum / static_cast<double>(bleu_cases);
        }
    }
    return report;
}

Scorer model_scorer(const ModelView& view) {
    return [&view](std::size_t user, std::span<const std::size_t> items) { return view.score_items(user, items); };
}

Explainer model_explainer(const Corpus& corpus, const ModelView& view) {
    return [&corpus, &view](std::size_t row) {
        const PredictionOutput out = view.predict(corpus.user_of(row), corpus.item_of(row));
        return ExplainedCase{out.p_like, out.p_polarity, out.reason_text};
    };
}

MetricsReport evaluate_model(const Corpus& corpus, const DatasetSplit& split, const PreparedData& data,
                             const ModelParams& params, const PipelineConfig& config) {
    const ModelView view(corpus, data.features, params, data.history, config.max_history);
    EvalRequest request;
    request.rows = split.test;
    request.config = config.eval;
    request.seed = mix_seed(config.seed, kEval);
    request.explainer = model_explainer(corpus, view);
    MetricsReport report = evaluate(corpus, model_scorer(view), request);
    report.bucket = "test";
    return report;
}

namespace {

std::vector<SourceEvent> source_events(const Corpus& corpus, const std::vector<std::size_t>& rows,
                                       const std::string& domain) {
    std::vector<SourceEvent> events;
    for (const std::size_t r : rows) {
        const auto& item = corpus.items()[corpus.item_of(r)];
        if (item.domain == domain) {
            events.push_back({item.attribute_tags, binarize(corpus.interactions()[r].rating)});
        }
    }
    return events;
}

// Domain holding most of the user's train history outside `exclude`.
std::optional<std::string> dominant_other_domain(const Corpus& corpus, const std::vector<std::size_t>& rows,
                                                 const std::string& exclude) {
    std::map<std::string, std::size_t> counts;
    for (const std::size_t r : rows) {
        const auto& domain = corpus.items()[corpus.item_of(r)].domain;
        if (domain != exclude) {
            ++counts[domain];
        }
    }
    std::optional<std::string> best;
    std::size_t best_count = 0;
    for (const auto& [domain, count] : counts) {
        if (count > best_count) {
            best = domain;
            best_count = count;
        }
    }
    return best;
}

std::int64_t latest_timestamp(const Corpus& corpus, const std::vector<std::size_t>& rows, std::size_t user) {
    std::int64_t t = 0;
    for (const std::size_t r : rows) {
        if (corpus.user_of(r) == user) {
            t = std::max(t, corpus.interactions()[r].timestamp);
        }
    }
    return t;
}

} // namespace

ColdstartResult coldstart_eval(const Corpus& corpus, const DatasetSplit& split, const PreparedData& data,
                               const ModelParams& params, const KnowledgeBase* kb, const PipelineConfig& config) {
    ColdstartResult result;
    const auto& log = corpus.interactions();
    const auto& users = corpus.users();
    const auto& items = corpus.items();
    const std::uint64_t seed = mix_seed(config.seed, kEval);
    const ModelView base_view(corpus, data.features, params, data.history, config.max_history);
    const Scorer base_scorer = model_scorer(base_view);
    const std::string variant = kb != nullptr ? "zero_shot" : "model_only";

    auto run = [&](const std::string& bucket, const std::vector<std::size_t>& rows, const Scorer& scorer,
                   const Explainer& explainer, const NegativeFilter& negatives, const std::string& label) {
        if (rows.empty()) {
            result.warnings.push_back("bucket " + bucket + " is empty; omitted");
            return;
        }
        EvalRequest request{rows, config.eval, seed, explainer, negatives};
        MetricsReport report = evaluate(corpus, scorer, request);
        report.bucket = bucket;
        report.variant = label;
        result.buckets[bucket] = std::move(report);
    };

    // New users.
    std::vector<std::size_t> cold_rows;
    for (const std::size_t r : split.test) {
        if (split.coldstart_users.contains(log[r].user_id)) {
            cold_rows.push_back(r);
        }
    }
    if (kb != nullptr) {
        const Scorer zero_shot = [&](std::size_t user, std::span<const std::size_t> cand) {
            const std::int64_t t = latest_timestamp(corpus, cold_rows, user);
            std::vector<double> out;
            for (const std::size_t i : cand) {
                out.push_back(zero_shot_score(users[user], items[i], t, *kb, config.mix));
            }
            return out;
        };
        run("new_users", cold_rows, zero_shot, {}, {}, variant);
    } else {
        run("new_users", cold_rows, base_scorer, model_explainer(corpus, base_view), {}, variant);
    }

    // The same users after adapting on their few train interactions.
    std::map<std::size_t, ModelParams> adapted;
    auto adapted_for = [&](std::size_t user) -> const ModelParams& {
        auto it = adapted.find(user);
        if (it == adapted.end()) {
            std::vector<std::size_t> rows = data.history.rows(user);
            if (rows.size() > 5) {
                rows.erase(rows.begin(), rows.end() - 5);
            }
            const auto support = build_examples(corpus, data.history, rows, true, config.max_history);
            it = adapted
                     .emplace(user, meta_adapt(params, support, data.features, config.meta, config.loss,
                                               Entity{EntityKind::user, user}))
                     .first;
        }
        return it->second;
    };
    const Scorer meta_scorer = [&](std::size_t user, std::span<const std::size_t> cand) {
        const ModelView view(corpus, data.features, adapted_for(user), data.history, config.max_history);
        return view.score_items(user, cand);
    };
    const Explainer meta_explainer = [&](std::size_t row) {
        const std::size_t user = corpus.user_of(row);
        const ModelView view(corpus, data.features, adapted_for(user), data.history, config.max_history);
        const PredictionOutput out = view.predict(user, corpus.item_of(row));
        return ExplainedCase{out.p_like, out.p_polarity, out.reason_text};
    };
    run("new_users_meta_adapted", cold_rows, meta_scorer, meta_explainer, {}, "meta_adapted");

    // New items.
    std::vector<std::size_t> new_item_rows;
    for (const std::size_t r : split.test) {
        if (split.coldstart_items.contains(log[r].item_id)) {
            new_item_rows.push_back(r);
        }
    }
    if (kb != nullptr) {
        const Scorer zero_shot = [&](std::size_t user, std::span<const std::size_t> cand) {
            const std::int64_t t = latest_timestamp(corpus, new_item_rows, user);
            const auto& train_rows = data.history.rows(user);
            std::vector<double> out;
            for (const std::size_t i : cand) {
                std::optional<CrossContext> cross;
                if (const auto src = dominant_other_domain(corpus, train_rows, items[i].domain)) {
                    cross = CrossContext{source_events(corpus, train_rows, *src), *src};
                }
                out.push_back(zero_shot_score(users[user], items[i], t, *kb, config.mix, cross));
            }
            return out;
        };
        run("new_items", new_item_rows, zero_shot, {}, {}, variant);
    } else {
        run("new_items", new_item_rows, base_scorer, model_explainer(corpus, base_view), {}, variant);
    }

    // Cross-domain: targets outside the user's home domain, scored from the
    // home-domain history.
    std::vector<std::size_t> cross_rows;
    for (const std::size_t r : split.test) {
        const auto& home = users[corpus.user_of(r)].domain;
        const auto& domain = items[corpus.item_of(r)].domain;
        if (!home.empty() && !domain.empty() && home != domain) {
            cross_rows.push_back(r);
        }
    }
    const NegativeFilter off_home = [&](std::size_t user, std::size_t item) {
        return items[item].domain != users[user].domain;
    };
    if (kb != nullptr) {
        const Scorer cross_scorer = [&](std::size_t user, std::span<const std::size_t> cand) {
            const std::int64_t t = latest_timestamp(corpus, cross_rows, user);
            const auto& home = users[user].domain;
            const CrossContext ctx{source_events(corpus, data.history.rows(user), home), home};
            std::vector<double> out;
            for (const std::size_t i : cand) {
                out.push_back(zero_shot_score(users[user], items[i], t, *kb, config.cross_mix, ctx));
            }
            return out;
        };
        run("cross_domain", cross_rows, cross_scorer, {}, off_home, variant);
    } else {
        run("cross_domain", cross_rows, base_scorer, model_explainer(corpus, base_view), off_home, variant);
    }
    return result;
}

std::vector<AblationRow> ablation_run(const Corpus& corpus, const DatasetSplit& split, const PipelineConfig& config) {
    config.validate();
    const KnowledgeBase kb = build_kb(corpus, split.train, config.kb_smoothing);
    std::vector<AblationRow> table;

    auto row_for = [&](const std::string& variant, const Corpus& c, const FitResult& fitted, const KnowledgeBase* k) {
        AblationRow row;
        row.variant = variant;
        row.test = evaluate_model(c, split, fitted.data, fitted.trained.params, config);
        row.test.variant = variant;
        const ColdstartResult cold = coldstart_eval(c, split, fitted.data, fitted.trained.params, k, config);
        if (const auto it = cold.buckets.find("new_users"); it != cold.buckets.end()) {
            row.new_user_auc = it->second.auc;
        }
        if (const auto it = cold.buckets.find("cross_domain"); it != cold.buckets.end()) {
            row.cross_domain_auc = it->second.auc;
        }
        return row;
    };

    const FitResult full = fit(corpus, split, config);
    table.push_back(row_for("full", corpus, full, &kb));

    PipelineConfig no_attr = config;
    no_attr.loss.beta = 0.0;
    no_attr.loss.gamma = 0.0;
    table.push_back(row_for("no_attribution", corpus, fit(corpus, split, no_attr), &kb));

    table.push_back(row_for("no_zero_shot", corpus, full, nullptr));

    const Corpus plain = corpus.without_visual();
    table.push_back(row_for("no_multimodal", plain, fit(plain, split, config), &kb));

    PipelineConfig single = config;
    single.tasks = TaskWeights::only(Task::pred);
    single.tasks.eta = config.tasks.eta;
    single.tasks.floor = config.tasks.floor;
    single.train.adaptive_task_weights = false;
    table.push_back(row_for("no_multitask", corpus, fit(corpus, split, single), &kb));
    return table;
}

std::string report_json(const MetricsReport& report, const std::string& config_echo) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(); };
    json ndcg = json::object();
    json hit = json::object();
    for (const auto& [k, v] : report.ndcg_at) {
        ndcg[std::to_string(k)] = v;
    }
    for (const auto& [k, v] : report.hit_at) {
        hit[std::to_string(k)] = v;
    }
    json doc = {
        {"bucket", report.bucket},
        {"variant", report.variant},
        {"auc", opt(report.auc)},
        {"ndcg_at", ndcg},
        {"hit_at", hit},
        {"interaction_auc", opt(report.interaction_auc)},
        {"mean_bleu", opt(report.mean_bleu)},
        {"consistency_rate", opt(report.consistency_rate)},
        {"n_cases", report.n_cases},
        {"n_users", report.n_users},
    };
    if (!config_echo.empty()) {
        doc["config"] = json::parse(config_echo);
    }
    return doc.dump();
}

} // namespace attrirec
