#include <algorithm>
#include <cmath>
#include <string>

#include "attrirec/errors.hpp"
#include "attrirec/model.hpp"

namespace attrirec {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_finite(double value, const char* term) {
    if (!std::isfinite(value)) {
        throw NumericError(term, std::string("non-finite value in ") + term);
    }
}

// Forward state of one catalog item inside a batch.
struct ItemSlot {
    std::size_t item = 0;
    bool has_text = false;
    bool has_visual = false;
    double a_text = 0.0;
    double a_visual = 0.0;
    std::vector<double> z_text;
    std::vector<double> tanh_text;
    std::vector<double> z_visual;
    std::vector<double> tanh_visual;
    std::vector<double> h;
    std::vector<double> dh;
};

class BatchItems {
public:
    BatchItems(const ModelParams& params, const FeatureTable& features)
        : params_(params), features_(features), slot_of_(params.dims().n_items, -1) {}

    std::size_t slot(std::size_t item) {
        if (item >= slot_of_.size() || item >= features_.size()) {
            throw InputError("item index " + std::to_string(item) + " out of range");
        }
        if (slot_of_[item] < 0) {
            slot_of_[item] = static_cast<long>(slots_.size());
            slots_.push_back(forward(item));
        }
        return static_cast<std::size_t>(slot_of_[item]);
    }

    ItemSlot& operator[](std::size_t s) { return slots_[s]; }

    void backward(std::vector<double>& grad) const {
        for (const auto& slot : slots_) {
            backward_slot(slot, grad);
        }
    }

private:
    ItemSlot forward(std::size_t item) const {
        const auto& d = params_.dims();
        const auto attn = params_.block(Block::attn_vec);
        const auto bias = params_.block(Block::attn_bias);
        ItemSlot s;
        s.item = item;
        s.has_text = features_.text[item].present;
        s.has_visual = features_.visual[item].present;
        s.h.assign(d.latent, 0.0);
        s.dh.assign(d.latent, 0.0);
        double logit_text = 0.0;
        double logit_visual = 0.0;
        if (s.has_text) {
            const auto w = params_.block(Block::w_text);
            const auto& x = features_.text[item].vector;
            const auto& nz = features_.text_nonzero[item];
            s.z_text.assign(d.latent, 0.0);
            s.tanh_text.resize(d.latent);
            logit_text = bias[0];
            for (std::size_t r = 0; r < d.latent; ++r) {
                double acc = 0.0;
                const double* row = w.data() + r * d.text_dim;
                for (const std::size_t k : nz) {
                    acc += row[k] * x[k];
                }
                s.z_text[r] = acc;
                s.tanh_text[r] = std::tanh(acc);
                logit_text += attn[r] * s.tanh_text[r];
            }
        }
        if (s.has_visual) {
            const auto w = params_.block(Block::w_visual);
            const auto& x = features_.visual[item].vector;
            s.z_visual.assign(d.latent, 0.0);
            s.tanh_visual.resize(d.latent);
            logit_visual = bias[1];
            for (std::size_t r = 0; r < d.latent; ++r) {
                double acc = 0.0;
                const double* row = w.data() + r * d.visual_dim;
                for (std::size_t k = 0; k < d.visual_dim; ++k) {
                    acc += row[k] * x[k];
                }
                s.z_visual[r] = acc;
                s.tanh_visual[r] = std::tanh(acc);
                logit_visual += attn[r] * s.tanh_visual[r];
            }
        }
        if (s.has_text && s.has_visual) {
            const double top = std::max(logit_text, logit_visual);
            const double et = std::exp(logit_text - top);
            const double ev = std::exp(logit_visual - top);
            s.a_text = et / (et + ev);
            s.a_visual = ev / (et + ev);
        } else if (s.has_text) {
            s.a_text = 1.0;
        } else if (s.has_visual) {
            s.a_visual = 1.0;
        }
        const auto row = params_.item_row(item);
        for (std::size_t k = 0; k < d.latent; ++k) {
            s.h[k] = row[k];
            if (s.has_text) {
                s.h[k] += s.a_text * s.z_text[k];
            }
            if (s.has_visual) {
                s.h[k] += s.a_visual * s.z_visual[k];
            }
        }
        return s;
    }

    void backward_slot(const ItemSlot& s, std::vector<double>& grad) const {
        const auto& d = params_.dims();
        const auto& layout = params_.layout();
        const auto attn = params_.block(Block::attn_vec);
        double* g_item = grad.data() + layout[Block::item_embed].offset + s.item * d.latent;
        for (std::size_t k = 0; k < d.latent; ++k) {
            g_item[k] += s.dh[k];
        }
        if (!s.has_text && !s.has_visual) {
            return;
        }
        // d loss / d attention weight, then through the softmax.
        double da_text = 0.0;
        double da_visual = 0.0;
        for (std::size_t k = 0; k < d.latent; ++k) {
            if (s.has_text) {
                da_text += s.dh[k] * s.z_text[k];
            }
            if (s.has_visual) {
                da_visual += s.dh[k] * s.z_visual[k];
            }
        }
        double ds_text = 0.0;
        double ds_visual = 0.0;
        if (s.has_text && s.has_visual) {
            const double mean = s.a_text * da_text + s.a_visual * da_visual;
            ds_text = s.a_text * (da_text - mean);
            ds_visual = s.a_visual * (da_visual - mean);
        }
        double* g_attn = grad.data() + layout[Block::attn_vec].offset;
        double* g_attn_bias = grad.data() + layout[Block::attn_bias].offset;
        std::vector<double> dz(d.latent);
        if (s.has_text) {
            g_attn_bias[0] += ds_text;
            for (std::size_t k = 0; k < d.latent; ++k) {
                g_attn[k] += ds_text * s.tanh_text[k];
                dz[k] = s.a_text * s.dh[k] + ds_text * attn[k] * (1.0 - s.tanh_text[k] * s.tanh_text[k]);
            }
            const auto& x = features_.text[s.item].vector;
            const auto& nz = features_.text_nonzero[s.item];
            double* g_w = grad.data() + layout[Block::w_text].offset;
            for (std::size_t r = 0; r < d.latent; ++r) {
                double* row = g_w + r * d.text_dim;
                for (const std::size_t k : nz) {
                    row[k] += dz[r] * x[k];
                }
            }
        }
        if (s.has_visual) {
            g_attn_bias[1] += ds_visual;
            for (std::size_t k = 0; k < d.latent; ++k) {
                g_attn[k] += ds_visual * s.tanh_visual[k];
                dz[k] = s.a_visual * s.dh[k] + ds_visual * attn[k] * (1.0 - s.tanh_visual[k] * s.tanh_visual[k]);
            }
            const auto& x = features_.visual[s.item].vector;
            double* g_w = grad.data() + layout[Block::w_visual].offset;
            for (std::size_t r = 0; r < d.latent; ++r) {
                double* row = g_w + r * d.visual_dim;
                for (std::size_t k = 0; k < d.visual_dim; ++k) {
                    row[k] += dz[r] * x[k];
                }
            }
        }
    }

    const ModelParams& params_;
    const FeatureTable& features_;
    std::vector<long> slot_of_;
    std::vector<ItemSlot> slots_;
};

} // namespace

GradientResult forward_backward(std::span<const TrainingExample> batch, const ModelParams& params,
                                const FeatureTable& features, const LossWeights& loss_weights,
                                const TaskWeights& task_weights) {
    if (batch.empty()) {
        throw InputError("forward_backward needs a non-empty batch");
    }
    const auto& d = params.dims();
    const auto& layout = params.layout();
    GradientResult result;
    result.gradient.assign(layout.total(), 0.0);
    auto& grad = result.gradient;

    std::size_t n_reason = 0;
    std::size_t n_cross = 0;
    for (const auto& ex : batch) {
        if (ex.user >= d.n_users) {
            throw InputError("user index " + std::to_string(ex.user) + " out of range");
        }
        n_reason += ex.truth_attrs.empty() ? 0 : 1;
        n_cross += ex.cross_domain ? 1 : 0;
    }
    const double n = static_cast<double>(batch.size());

    auto& active = result.tasks.active;
    for (const Task t : kAllTasks) {
        const bool has_data = t != Task::cross || n_cross > 0;
        active[index_of(t)] = has_data && task_weights[t] > 0.0;
    }
    const double w_pred = active[index_of(Task::pred)] ? task_weights[Task::pred] * loss_weights.alpha / n : 0.0;
    const double w_cross = active[index_of(Task::cross)] ? task_weights[Task::cross] / static_cast<double>(n_cross) : 0.0;
    const double w_reason = active[index_of(Task::exp)] && n_reason > 0
                                ? task_weights[Task::exp] * loss_weights.beta / static_cast<double>(n_reason)
                                : 0.0;
    const double w_cons = active[index_of(Task::exp)] ? task_weights[Task::exp] * loss_weights.gamma / n : 0.0;
    const double w_rate = active[index_of(Task::rate)] ? task_weights[Task::rate] / n : 0.0;

    const auto attr_head = params.block(Block::attr_head);
    const auto pol_head = params.block(Block::polarity_head);
    const auto rate_head = params.block(Block::rating_head);
    const double pred_bias = params.block(Block::pred_bias)[0];
    const double pol_bias = params.block(Block::polarity_bias)[0];
    const double rate_bias = params.block(Block::rating_bias)[0];

    double* g_user = grad.data() + layout[Block::user_embed].offset;
    double* g_pred_bias = grad.data() + layout[Block::pred_bias].offset;
    double* g_attr = grad.data() + layout[Block::attr_head].offset;
    double* g_pol = grad.data() + layout[Block::polarity_head].offset;
    double* g_pol_bias = grad.data() + layout[Block::polarity_bias].offset;
    double* g_rate = grad.data() + layout[Block::rating_head].offset;
    double* g_rate_bias = grad.data() + layout[Block::rating_bias].offset;

    double bce_sum = 0.0;
    double reason_sum = 0.0;
    double consistency_sum = 0.0;
    double rate_sum = 0.0;
    double cross_sum = 0.0;

    BatchItems items(params, features);
    std::vector<std::size_t> history_slots;
    std::vector<double> c(d.latent);
    std::vector<double> q(d.latent);
    std::vector<double> dc(d.latent);
    std::vector<double> dq(d.latent);
    std::vector<double> attr_logits(d.n_attributes);
    std::vector<double> d_attr(d.n_attributes);

    for (const auto& ex : batch) {
        const std::size_t target = items.slot(ex.item);
        history_slots.clear();
        for (const auto& h : ex.history) {
            history_slots.push_back(items.slot(h.item));
        }
        const double scale = ex.history.empty() ? 0.0 : 1.0 / static_cast<double>(ex.history.size());

        // Forward.
        const auto urow = params.user_row(ex.user);
        std::copy(urow.begin(), urow.end(), c.begin());
        for (std::size_t j = 0; j < ex.history.size(); ++j) {
            const auto& hh = items[history_slots[j]].h;
            const double w = scale * ex.history[j].sign;
            for (std::size_t k = 0; k < d.latent; ++k) {
                c[k] += w * hh[k];
            }
        }
        const auto& h = items[target].h;
        double logit = pred_bias;
        double pol_logit = pol_bias;
        double rate_logit = rate_bias;
        for (std::size_t k = 0; k < d.latent; ++k) {
            logit += c[k] * h[k];
            q[k] = c[k] * h[k];
            pol_logit += pol_head[k] * h[k];
            rate_logit += rate_head[k] * q[k];
        }
        const double p = sigmoid(logit);
        const double p_pol = sigmoid(pol_logit);
        const double s_rate = sigmoid(rate_logit);
        const double rating = 1.0 + 4.0 * s_rate;

        double top = -INFINITY;
        for (std::size_t a = 0; a < d.n_attributes; ++a) {
            double acc = 0.0;
            const double* row = attr_head.data() + a * d.latent;
            for (std::size_t k = 0; k < d.latent; ++k) {
                acc += row[k] * q[k];
            }
            attr_logits[a] = acc;
            top = std::max(top, acc);
        }
        double norm = 0.0;
        for (std::size_t a = 0; a < d.n_attributes; ++a) {
            d_attr[a] = std::exp(attr_logits[a] - top); // softmax numerators for now
            norm += d_attr[a];
        }
        const double log_norm = top + std::log(norm);

        const double bce = pred_loss(p, ex.label);
        require_finite(bce, "l_pred");
        bce_sum += bce;
        if (ex.cross_domain) {
            cross_sum += bce;
        }
        const double gap = p - p_pol;
        consistency_sum += gap * gap;
        const double err = rating - static_cast<double>(ex.rating);
        rate_sum += err * err / 16.0;
        double reason = 0.0;
        if (!ex.truth_attrs.empty()) {
            for (const std::size_t a : ex.truth_attrs) {
                if (a >= d.n_attributes) {
                    throw InputError("truth attribute outside the vocabulary");
                }
                reason -= std::max(attr_logits[a] - log_norm, std::log(kProbabilityClamp));
            }
            reason /= static_cast<double>(ex.truth_attrs.size());
            require_finite(reason, "l_reason");
            reason_sum += reason;
        }

        // Backward.
        const double y = static_cast<double>(ex.label);
        double d_logit = (w_pred + (ex.cross_domain ? w_cross : 0.0)) * (p - y);
        d_logit += w_cons * 2.0 * gap * p * (1.0 - p);
        const double d_pol = -w_cons * 2.0 * gap * p_pol * (1.0 - p_pol);
        const double d_rate = w_rate * (2.0 * err / 16.0) * 4.0 * s_rate * (1.0 - s_rate);

        for (std::size_t a = 0; a < d.n_attributes; ++a) {
            d_attr[a] /= norm;
        }
        const bool with_reason = !ex.truth_attrs.empty() && w_reason != 0.0;
        if (with_reason) {
            const double share = 1.0 / static_cast<double>(ex.truth_attrs.size());
            for (std::size_t a = 0; a < d.n_attributes; ++a) {
                d_attr[a] *= w_reason;
            }
            for (const std::size_t a : ex.truth_attrs) {
                d_attr[a] -= w_reason * share;
            }
        }

        auto& dh = items[target].dh;
        g_pred_bias[0] += d_logit;
        *g_pol_bias += d_pol;
        *g_rate_bias += d_rate;
        for (std::size_t k = 0; k < d.latent; ++k) {
            dc[k] = d_logit * h[k];
            dh[k] += d_logit * c[k] + d_pol * pol_head[k];
            g_pol[k] += d_pol * h[k];
            g_rate[k] += d_rate * q[k];
            dq[k] = d_rate * rate_head[k];
        }
        if (with_reason) {
            for (std::size_t a = 0; a < d.n_attributes; ++a) {
                const double da = d_attr[a];
                double* grow = g_attr + a * d.latent;
                const double* row = attr_head.data() + a * d.latent;
                for (std::size_t k = 0; k < d.latent; ++k) {
                    grow[k] += da * q[k];
                    dq[k] += da * row[k];
                }
            }
        }
        for (std::size_t k = 0; k < d.latent; ++k) {
            dc[k] += dq[k] * h[k];
            dh[k] += dq[k] * c[k];
        }
        double* gu = g_user + ex.user * d.latent;
        for (std::size_t k = 0; k < d.latent; ++k) {
            gu[k] += dc[k];
        }
        for (std::size_t j = 0; j < ex.history.size(); ++j) {
            auto& dhh = items[history_slots[j]].dh;
            const double w = scale * ex.history[j].sign;
            for (std::size_t k = 0; k < d.latent; ++k) {
                dhh[k] += w * dc[k];
            }
        }
    }
    items.backward(grad);

    auto& tl = result.tasks;
    tl.loss[index_of(Task::pred)] = loss_weights.alpha * bce_sum / n;
    const double mean_reason = n_reason > 0 ? reason_sum / static_cast<double>(n_reason) : 0.0;
    tl.loss[index_of(Task::exp)] = loss_weights.beta * mean_reason + loss_weights.gamma * consistency_sum / n;
    tl.loss[index_of(Task::rate)] = rate_sum / n;
    tl.loss[index_of(Task::cross)] = n_cross > 0 ? cross_sum / static_cast<double>(n_cross) : 0.0;
    for (const Task t : kAllTasks) {
        if (active[index_of(t)]) {
            tl.total += task_weights[t] * tl.loss[index_of(t)];
        }
    }
    result.attribution = combine(loss_weights, bce_sum / n, mean_reason, consistency_sum / n);
    require_finite(result.attribution.l_consistency, "l_consistency");
    require_finite(tl.loss[index_of(Task::rate)], "l_rate");
    require_finite(tl.total, "total");
    for (const double g : grad) {
        if (!std::isfinite(g)) {
            throw NumericError("gradient", "non-finite gradient entry");
        }
    }
    return result;
}

} // namespace attrirec
