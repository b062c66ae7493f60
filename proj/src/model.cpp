#include "attrirec/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "attrirec/errors.hpp"
#include "attrirec/instruction.hpp"
#include "attrirec/io.hpp"
#include "attrirec/random.hpp"

namespace attrirec {

using nlohmann::json;

std::string_view block_name(Block block) {
    switch (block) {
    case Block::user_embed: return "user_embed";
    case Block::item_embed: return "item_embed";
    case Block::w_text: return "w_text";
    case Block::w_visual: return "w_visual";
    case Block::attn_vec: return "attn_vec";
    case Block::attn_bias: return "attn_bias";
    case Block::pred_bias: return "pred_bias";
    case Block::attr_head: return "attr_head";
    case Block::polarity_head: return "polarity_head";
    case Block::polarity_bias: return "polarity_bias";
    case Block::rating_head: return "rating_head";
    case Block::rating_bias: return "rating_bias";
    }
    return "?";
}

ParamLayout::ParamLayout(const ModelDims& d) {
    const std::array<std::size_t, kBlockCount> sizes = {
        d.n_users * d.latent, d.n_items * d.latent, d.latent * d.text_dim, d.latent * d.visual_dim,
        d.latent,             2,                    1,                     d.n_attributes * d.latent,
        d.latent,             1,                    d.latent,              1,
    };
    for (std::size_t b = 0; b < kBlockCount; ++b) {
        ranges_[b] = {total_, sizes[b]};
        total_ += sizes[b];
    }
}

ModelParams::ModelParams(const ModelDims& dims) : dims_(dims), layout_(dims), values_(layout_.total(), 0.0) {
    if (dims.latent == 0 || dims.text_dim == 0 || dims.visual_dim == 0) {
        throw InputError("model dimensions must be positive");
    }
}

std::span<double> ModelParams::block(Block b) {
    const auto& r = layout_[b];
    return std::span<double>(values_).subspan(r.offset, r.size);
}

std::span<const double> ModelParams::block(Block b) const {
    const auto& r = layout_[b];
    return std::span<const double>(values_).subspan(r.offset, r.size);
}

std::span<double> ModelParams::user_row(std::size_t u) {
    return block(Block::user_embed).subspan(u * dims_.latent, dims_.latent);
}

std::span<const double> ModelParams::user_row(std::size_t u) const {
    return block(Block::user_embed).subspan(u * dims_.latent, dims_.latent);
}

std::span<double> ModelParams::item_row(std::size_t i) {
    return block(Block::item_embed).subspan(i * dims_.latent, dims_.latent);
}

std::span<const double> ModelParams::item_row(std::size_t i) const {
    return block(Block::item_embed).subspan(i * dims_.latent, dims_.latent);
}

ModelParams ModelParams::unflatten(const ModelDims& dims, std::span<const double> flat) {
    ModelParams params(dims);
    if (flat.size() != params.values_.size()) {
        throw InputError("parameter vector has " + std::to_string(flat.size()) + " values, layout needs " +
                         std::to_string(params.values_.size()));
    }
    std::copy(flat.begin(), flat.end(), params.values_.begin());
    return params;
}

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    ModelParams params(dims);
    Rng rng(seed);
    for (const Block b : {Block::user_embed, Block::item_embed, Block::w_text, Block::w_visual, Block::attn_vec,
                          Block::attr_head, Block::polarity_head, Block::rating_head}) {
        for (double& v : params.block(b)) {
            v = rng.uniform(-0.1, 0.1);
        }
    }
    return params;
}

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        s += a[k] * b[k];
    }
    return s;
}

// out = W x for row-major W (rows x cols).
std::vector<double> matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
                           std::span<const double> x) {
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = dot(w.subspan(r * cols, cols), x);
    }
    return out;
}

double attention_logit(std::span<const double> z, std::span<const double> attn_vec, double bias) {
    double s = bias;
    for (std::size_t k = 0; k < z.size(); ++k) {
        s += attn_vec[k] * std::tanh(z[k]);
    }
    return s;
}

void check_user(std::size_t user, const ModelParams& params) {
    if (user >= params.dims().n_users) {
        throw InputError("user index " + std::to_string(user) + " out of range");
    }
}

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) {
        return out;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - top);
        sum += out[k];
    }
    for (double& p : out) {
        p /= sum;
    }
    return out;
}

struct Heads {
    std::vector<double> context;
    double p_like = 0.5;
    std::vector<double> attr_dist;
    double p_polarity = 0.5;
    double rating = 3.0;
};

Heads evaluate_heads(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                     const ModelParams& params) {
    const auto& d = params.dims();
    Heads out;
    out.context = user_context(user, history, params);
    const auto& h = target.h_multi;
    out.p_like = sigmoid(dot(out.context, h) + params.block(Block::pred_bias)[0]);

    std::vector<double> q(d.latent);
    for (std::size_t k = 0; k < d.latent; ++k) {
        q[k] = out.context[k] * h[k];
    }
    out.attr_dist = softmax(matvec(params.block(Block::attr_head), d.n_attributes, d.latent, q));
    out.p_polarity = sigmoid(dot(params.block(Block::polarity_head), h) + params.block(Block::polarity_bias)[0]);
    out.rating = 1.0 + 4.0 * sigmoid(dot(params.block(Block::rating_head), q) + params.block(Block::rating_bias)[0]);
    return out;
}

std::vector<std::size_t> top_attributes(const std::vector<double>& dist, std::size_t k) {
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    order.resize(std::min(k, order.size()));
    return order;
}

std::string reason_for(const std::vector<std::size_t>& top, double p_polarity,
                       const std::vector<std::string>& vocab) {
    std::vector<std::string> names;
    for (const std::size_t a : top) {
        names.push_back(a < vocab.size() ? vocab[a] : "attr" + std::to_string(a));
    }
    return render_attribution_reason(p_polarity >= 0.5 ? Polarity::liked : Polarity::disliked, names);
}

} // namespace

FusedItem fuse(const ModalityFeature& text, const ModalityFeature& visual, const ModelParams& params) {
    if (!text.present && !visual.present) {
        throw InputError("fuse needs at least one present modality");
    }
    const auto& d = params.dims();
    const auto attn = params.block(Block::attn_vec);
    const auto bias = params.block(Block::attn_bias);
    FusedItem out;
    out.h_multi.assign(d.latent, 0.0);
    std::vector<double> z_text;
    std::vector<double> z_visual;
    double s_text = 0.0;
    double s_visual = 0.0;
    if (text.present) {
        if (text.vector.size() != d.text_dim) {
            throw InputError("text feature dimension mismatch");
        }
        z_text = matvec(params.block(Block::w_text), d.latent, d.text_dim, text.vector);
        s_text = attention_logit(z_text, attn, bias[0]);
    }
    if (visual.present) {
        if (visual.vector.size() != d.visual_dim) {
            throw InputError("visual feature dimension mismatch");
        }
        z_visual = matvec(params.block(Block::w_visual), d.latent, d.visual_dim, visual.vector);
        s_visual = attention_logit(z_visual, attn, bias[1]);
    }
    if (text.present && visual.present) {
        const double top = std::max(s_text, s_visual);
        const double e_text = std::exp(s_text - top);
        const double e_visual = std::exp(s_visual - top);
        out.a_text = e_text / (e_text + e_visual);
        out.a_visual = e_visual / (e_text + e_visual);
    } else if (text.present) {
        out.a_text = 1.0;
    } else {
        out.a_visual = 1.0;
    }
    for (std::size_t k = 0; k < d.latent; ++k) {
        if (text.present) {
            out.h_multi[k] += out.a_text * z_text[k];
        }
        if (visual.present) {
            out.h_multi[k] += out.a_visual * z_visual[k];
        }
    }
    return out;
}

FusedItem represent_item(std::size_t item, const FeatureTable& features, const ModelParams& params) {
    if (item >= params.dims().n_items || item >= features.size()) {
        throw InputError("item index " + std::to_string(item) + " out of range");
    }
    FusedItem out;
    if (features.text[item].present || features.visual[item].present) {
        out = fuse(features.text[item], features.visual[item], params);
    } else {
        out.h_multi.assign(params.dims().latent, 0.0);
    }
    const auto row = params.item_row(item);
    for (std::size_t k = 0; k < row.size(); ++k) {
        out.h_multi[k] += row[k];
    }
    return out;
}

std::vector<double> user_context(std::size_t user, std::span<const SignedItem> history, const ModelParams& params) {
    check_user(user, params);
    const auto row = params.user_row(user);
    std::vector<double> c(row.begin(), row.end());
    if (!history.empty()) {
        const double scale = 1.0 / static_cast<double>(history.size());
        for (const auto& entry : history) {
            for (std::size_t k = 0; k < c.size(); ++k) {
                c[k] += scale * entry.sign * entry.item->h_multi[k];
            }
        }
    }
    return c;
}

double preference_logit(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                        const ModelParams& params) {
    const auto c = user_context(user, history, params);
    return dot(c, target.h_multi) + params.block(Block::pred_bias)[0];
}

double score(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
             const ModelParams& params) {
    return sigmoid(preference_logit(user, target, history, params));
}

Explanation explain(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                    const ModelParams& params, const std::vector<std::string>& attr_vocab, std::size_t top_k) {
    const auto heads = evaluate_heads(user, target, history, params);
    Explanation out;
    out.attr_dist = heads.attr_dist;
    out.p_polarity = heads.p_polarity;
    out.top_attributes = top_attributes(out.attr_dist, top_k);
    out.reason_text = reason_for(out.top_attributes, out.p_polarity, attr_vocab);
    return out;
}

double rate(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
            const ModelParams& params) {
    return evaluate_heads(user, target, history, params).rating;
}

PredictionOutput predict(std::size_t user, const FusedItem& target, std::span<const SignedItem> history,
                         const ModelParams& params, const std::vector<std::string>& attr_vocab,
                         std::size_t top_k) {
    const auto heads = evaluate_heads(user, target, history, params);
    PredictionOutput out;
    out.p_like = heads.p_like;
    out.attr_dist = heads.attr_dist;
    out.p_polarity = heads.p_polarity;
    out.rating_est = heads.rating;
    out.top_attributes = top_attributes(out.attr_dist, top_k);
    out.reason_text = reason_for(out.top_attributes, out.p_polarity, attr_vocab);
    return out;
}

std::vector<FusedItem> represent_all(const FeatureTable& features, const ModelParams& params) {
    std::vector<FusedItem> out;
    out.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        out.push_back(represent_item(i, features, params));
    }
    return out;
}

std::vector<SignedItem> signed_history(std::span<const HistoryEntry> history, const std::vector<FusedItem>& items) {
    std::vector<SignedItem> out;
    out.reserve(history.size());
    for (const auto& entry : history) {
        out.push_back({&items.at(entry.item), entry.sign});
    }
    return out;
}

PredictionOutput predict_example(const TrainingExample& example, const std::vector<FusedItem>& items,
                                 const ModelParams& params, const std::vector<std::string>& attr_vocab) {
    const auto history = signed_history(example.history, items);
    return predict(example.user, items.at(example.item), history, params, attr_vocab);
}

TaskLosses multitask_loss(std::span<const TrainingExample> batch, const ModelParams& params,
                          const FeatureTable& features, const TaskWeights& task_weights,
                          const LossWeights& loss_weights) {
    if (batch.empty()) {
        throw InputError("multitask_loss needs a non-empty batch");
    }
    double bce_sum = 0.0;
    double reason_sum = 0.0;
    double consistency_sum = 0.0;
    double rate_sum = 0.0;
    double cross_sum = 0.0;
    std::size_t n_reason = 0;
    std::size_t n_cross = 0;
    const std::vector<std::string> no_vocab;
    for (const auto& ex : batch) {
        const FusedItem target = represent_item(ex.item, features, params);
        std::vector<FusedItem> past;
        past.reserve(ex.history.size());
        for (const auto& h : ex.history) {
            past.push_back(represent_item(h.item, features, params));
        }
        std::vector<SignedItem> history;
        for (std::size_t k = 0; k < past.size(); ++k) {
            history.push_back({&past[k], ex.history[k].sign});
        }
        const double p = score(ex.user, target, history, params);
        const Explanation why = explain(ex.user, target, history, params, no_vocab);
        const double r = rate(ex.user, target, history, params);
        const double bce = pred_loss(p, ex.label);
        bce_sum += bce;
        if (!ex.truth_attrs.empty()) {
            reason_sum += reason_loss(why.attr_dist, ex.truth_attrs);
            ++n_reason;
        }
        consistency_sum += consistency_loss(p, why.p_polarity);
        const double err = r - static_cast<double>(ex.rating);
        rate_sum += err * err / 16.0;
        if (ex.cross_domain) {
            cross_sum += bce;
            ++n_cross;
        }
    }
    const double n = static_cast<double>(batch.size());
    TaskLosses out;
    out.loss[index_of(Task::pred)] = loss_weights.alpha * bce_sum / n;
    out.loss[index_of(Task::exp)] =
        (n_reason > 0 ? loss_weights.beta * reason_sum / static_cast<double>(n_reason) : 0.0) +
        loss_weights.gamma * consistency_sum / n;
    out.loss[index_of(Task::rate)] = rate_sum / n;
    out.loss[index_of(Task::cross)] = n_cross > 0 ? cross_sum / static_cast<double>(n_cross) : 0.0;
    for (const Task t : kAllTasks) {
        const bool has_data = t != Task::cross || n_cross > 0;
        out.active[index_of(t)] = has_data && task_weights[t] > 0.0;
        if (out.active[index_of(t)]) {
            out.total += task_weights[t] * out.loss[index_of(t)];
        }
    }
    if (std::none_of(out.active.begin(), out.active.end(), [](bool a) { return a; })) {
        throw InputError("multitask_loss: no active tasks");
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const CheckpointMeta& meta) {
    const auto& d = params.dims();
    json header = {
        {"format", "attrirec-checkpoint"},
        {"version", 1},
        {"dims",
         {{"n_users", d.n_users},
          {"n_items", d.n_items},
          {"latent", d.latent},
          {"text_dim", d.text_dim},
          {"visual_dim", d.visual_dim},
          {"n_attributes", d.n_attributes}}},
        {"encoder",
         {{"text_dim", meta.encoder.text_dim},
          {"visual_dim", meta.encoder.visual_dim},
          {"ngram_orders", meta.encoder.ngram_orders},
          {"hash_seed", meta.encoder.hash_seed}}},
        {"user_ids", meta.user_ids},
        {"item_ids", meta.item_ids},
        {"attributes", meta.attributes},
        {"parameter_count", params.values().size()},
    };
    const json doc = {{"header", header}, {"values", params.flatten()}};
    write_text_file_atomic(path, doc.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": malformed checkpoint (" + e.what() + ")");
    }
    try {
        const auto& header = doc.at("header");
        if (header.at("format").get<std::string>() != "attrirec-checkpoint" || header.at("version").get<int>() != 1) {
            throw InputError(path.string() + ": unsupported checkpoint format or version");
        }
        const auto& jd = header.at("dims");
        ModelDims dims;
        dims.n_users = jd.at("n_users").get<std::size_t>();
        dims.n_items = jd.at("n_items").get<std::size_t>();
        dims.latent = jd.at("latent").get<std::size_t>();
        dims.text_dim = jd.at("text_dim").get<std::size_t>();
        dims.visual_dim = jd.at("visual_dim").get<std::size_t>();
        dims.n_attributes = jd.at("n_attributes").get<std::size_t>();
        CheckpointMeta meta;
        const auto& je = header.at("encoder");
        meta.encoder.text_dim = je.at("text_dim").get<std::size_t>();
        meta.encoder.visual_dim = je.at("visual_dim").get<std::size_t>();
        meta.encoder.ngram_orders = je.at("ngram_orders").get<std::set<std::size_t>>();
        meta.encoder.hash_seed = je.at("hash_seed").get<std::uint64_t>();
        meta.user_ids = header.at("user_ids").get<std::vector<std::string>>();
        meta.item_ids = header.at("item_ids").get<std::vector<std::string>>();
        meta.attributes = header.at("attributes").get<std::vector<std::string>>();
        if (meta.user_ids.size() != dims.n_users || meta.item_ids.size() != dims.n_items ||
            meta.attributes.size() != dims.n_attributes) {
            throw InputError(path.string() + ": checkpoint vocabularies disagree with its dimensions");
        }
        const auto values = doc.at("values").get<std::vector<double>>();
        return {ModelParams::unflatten(dims, values), std::move(meta)};
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": malformed checkpoint (" + e.what() + ")");
    }
}

} // namespace attrirec
