#include "attrirec/pipeline.hpp"

#include <cmath>
#include <cstdint>
#include <map>

#include "attrirec/errors.hpp"
#include "attrirec/random.hpp"

namespace attrirec {

namespace {

// Sub-seed streams derived from the run seed.
enum Stream : std::uint64_t { kInit = 1, kTrain = 2 };

} // namespace

void PipelineConfig::validate() const {
    if (encoder.text_dim == 0 || encoder.visual_dim == 0) {
        throw InputError("encoder dimensions must be positive");
    }
    if (latent == 0) {
        throw InputError("latent dimension must be positive");
    }
    const double ratio_sum = ratios.train + ratios.valid + ratios.test;
    if (ratios.train < 0.0 || ratios.valid < 0.0 || ratios.test < 0.0 || std::abs(ratio_sum - 1.0) > 1e-9) {
        throw InputError("split ratios must be nonnegative and sum to 1");
    }
    loss.validate();
    for (const double l : tasks.lambdas) {
        if (!(l >= 0.0) || !std::isfinite(l)) {
            throw InputError("task weights must be nonnegative");
        }
    }
    if (!(tasks.eta >= 0.0) || !(tasks.floor >= 0.0)) {
        throw InputError("eta and floor must be nonnegative");
    }
    if (tasks.renorm_target && !(*tasks.renorm_target > 0.0)) {
        throw InputError("renorm_target must be positive");
    }
    optimizer.validate();
    train.validate();
    meta.validate();
    mix.validate();
    cross_mix.validate();
    if (!(kb_smoothing >= 0.0)) {
        throw InputError("kb smoothing must be nonnegative");
    }
    if (eval.ks.empty()) {
        throw InputError("eval.ks must list at least one cutoff");
    }
    for (const std::size_t k : eval.ks) {
        if (k == 0) {
            throw InputError("eval cutoffs must be at least 1");
        }
    }
}

PreparedData prepare(const Corpus& corpus, const DatasetSplit& split, const PipelineConfig& config) {
    PreparedData data{build_features(corpus, config.encoder), HistoryIndex(corpus, split.train), {}, {}};
    data.train = build_examples(corpus, data.history, split.train, true, config.max_history);
    data.valid = build_examples(corpus, data.history, split.valid, false, config.max_history);
    return data;
}

ModelDims model_dims(const Corpus& corpus, const PipelineConfig& config) {
    return {corpus.users().size(), corpus.items().size(), config.latent, config.encoder.text_dim,
            config.encoder.visual_dim, corpus.attributes().size()};
}

CheckpointMeta checkpoint_meta(const Corpus& corpus, const EncoderConfig& encoder) {
    CheckpointMeta meta;
    for (const auto& u : corpus.users()) {
        meta.user_ids.push_back(u.user_id);
    }
    for (const auto& i : corpus.items()) {
        meta.item_ids.push_back(i.item_id);
    }
    meta.attributes = corpus.attributes();
    meta.encoder = encoder;
    return meta;
}

FitResult fit(const Corpus& corpus, const DatasetSplit& split, const PipelineConfig& config) {
    config.validate();
    PreparedData data = prepare(corpus, split, config);
    const ModelParams initial = init_params(model_dims(corpus, config), mix_seed(config.seed, kInit));
    TrainConfig tc = config.train;
    tc.seed = mix_seed(config.seed, kTrain);
    TrainResult trained = train(initial, data.features, data.train, data.valid, config.loss, config.tasks,
                                config.optimizer, tc);
    return {std::move(trained), std::move(data)};
}

ModelView::ModelView(const Corpus& corpus, const FeatureTable& features, const ModelParams& params,
                     const HistoryIndex& history, std::size_t max_history)
    : corpus_(&corpus), params_(&params), history_(&history), max_history_(max_history),
      items_(represent_all(features, params)) {}

const std::vector<SignedItem>& ModelView::user_history(std::size_t user) const {
    if (user >= corpus_->users().size()) {
        throw InputError("user index out of range");
    }
    auto it = signed_.find(user);
    if (it == signed_.end()) {
        auto& raw = raw_history_[user] = history_->history(user, max_history_);
        it = signed_.emplace(user, signed_history(raw, items_)).first;
    }
    return it->second;
}

double ModelView::score(std::size_t user, std::size_t item) const {
    return attrirec::score(user, items_.at(item), user_history(user), *params_);
}

PredictionOutput ModelView::predict(std::size_t user, std::size_t item) const {
    return attrirec::predict(user, items_.at(item), user_history(user), *params_, corpus_->attributes());
}

std::vector<double> ModelView::score_items(std::size_t user, std::span<const std::size_t> items) const {
    const auto& history = user_history(user);
    std::vector<double> out;
    out.reserve(items.size());
    for (const std::size_t i : items) {
        out.push_back(attrirec::score(user, items_.at(i), history, *params_));
    }
    return out;
}

AttributionInstruction instruction_for(const Corpus& corpus, const HistoryIndex& history, std::size_t user,
                                       std::size_t item, std::optional<std::size_t> target_row,
                                       std::optional<std::size_t> exclude) {
    if (user >= corpus.users().size() || item >= corpus.items().size()) {
        throw InputError("instruction_for: user or item index out of range");
    }
    const auto& rows = history.rows(user);
    // Latest rating per item wins; order follows each item's latest row.
    std::map<std::size_t, std::size_t> latest_pos;
    std::vector<std::size_t> kept;
    for (const std::size_t r : rows) {
        if (exclude && r == *exclude) {
            continue;
        }
        const std::size_t it = corpus.item_of(r);
        if (it == item) {
            continue;
        }
        if (const auto found = latest_pos.find(it); found != latest_pos.end()) {
            kept[found->second] = SIZE_MAX;
        }
        latest_pos[it] = kept.size();
        kept.push_back(r);
    }

    AttributionInstruction instr;
    instr.task_text = kDefaultTaskText;
    for (const std::size_t r : kept) {
        if (r == SIZE_MAX) {
            continue;
        }
        const auto& rec = corpus.items()[corpus.item_of(r)];
        const auto& inter = corpus.interactions()[r];
        const bool liked = binarize(inter.rating) == 1;
        AttributedEvent ev{rec.item_id, rec.title, inter.reason, liked ? Polarity::liked : Polarity::disliked};
        (liked ? instr.liked : instr.disliked).push_back(std::move(ev));
    }
    const auto& target = corpus.items()[item];
    instr.target_id = target.item_id;
    instr.target_title = target.title;
    if (target_row) {
        const auto& inter = corpus.interactions().at(*target_row);
        instr.expected_pred = binarize(inter.rating) == 1 ? Verdict::yes : Verdict::no;
        if (!inter.reason.empty()) {
            instr.expected_reason = inter.reason;
        }
    }
    return instr;
}

} // namespace attrirec
