#include "attrirec/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "attrirec/errors.hpp"
#include "attrirec/metrics.hpp"
#include "attrirec/random.hpp"

namespace attrirec {

TaskWeights update_task_weights(const TaskWeights& weights, const TaskLosses& losses) {
    TaskWeights next = weights;
    std::size_t active = 0;
    for (const Task t : kAllTasks) {
        if (!losses.is_active(t)) {
            continue;
        }
        const double l = losses[t];
        if (!std::isfinite(l) || l < 0.0) {
            throw InputError("task losses must be finite and nonnegative");
        }
        ++active;
        next[t] = std::max(weights.floor, weights[t] * std::exp(-weights.eta * l));
    }
    if (active == 0) {
        return next;
    }
    const double target = weights.renorm_target.value_or(static_cast<double>(active));
    double sum = 0.0;
    for (const Task t : kAllTasks) {
        if (losses.is_active(t)) {
            sum += next[t];
        }
    }
    for (const Task t : kAllTasks) {
        if (losses.is_active(t)) {
            next[t] *= target / sum;
        }
    }
    return next;
}

void OptimizerState::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InputError("learning_rate must be positive");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw InputError("momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
        throw InputError("weight_decay must be nonnegative");
    }
    if (!std::isfinite(grad_clip)) {
        throw InputError("grad_clip must be finite");
    }
}

double sgd_step(std::span<double> params, std::span<const double> gradient, OptimizerState& opt) {
    if (gradient.size() != params.size()) {
        throw InputError("gradient length does not match the parameters");
    }
    if (opt.velocity.empty()) {
        opt.velocity.assign(params.size(), 0.0);
    }
    if (opt.velocity.size() != params.size()) {
        throw InputError("velocity length does not match the parameters");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!std::isfinite(gradient[i])) {
            throw NumericError("gradient", "non-finite gradient entry");
        }
        const double g = gradient[i] + opt.weight_decay * params[i];
        sq += g * g;
    }
    const double norm = std::sqrt(sq);
    const double scale = opt.grad_clip > 0.0 && norm > opt.grad_clip ? opt.grad_clip / norm : 1.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = gradient[i] + opt.weight_decay * params[i];
        opt.velocity[i] = opt.momentum * opt.velocity[i] + scale * g;
        params[i] -= opt.learning_rate * opt.velocity[i];
    }
    return norm;
}

void TrainConfig::validate() const {
    if (batch_size == 0) {
        throw InputError("batch_size must be at least 1");
    }
    if (patience == 0) {
        throw InputError("patience must be at least 1");
    }
}

std::optional<double> example_auc(std::span<const TrainingExample> examples, const ModelParams& params,
                                  const FeatureTable& features) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(examples.size());
    labels.reserve(examples.size());
    bool pos = false;
    bool neg = false;
    const auto items = represent_all(features, params);
    for (const auto& ex : examples) {
        const auto history = signed_history(ex.history, items);
        scores.push_back(score(ex.user, items.at(ex.item), history, params));
        labels.push_back(ex.label);
        pos = pos || ex.label == 1;
        neg = neg || ex.label == 0;
    }
    if (!pos || !neg) {
        return std::nullopt;
    }
    return auc(scores, labels);
}

namespace {

nlohmann::json config_json(const TrainConfig& config, const LossWeights& lw, const TaskWeights& tw,
                           const OptimizerState& opt) {
    return {
        {"epochs", config.epochs},
        {"batch_size", config.batch_size},
        {"patience", config.patience},
        {"adaptive_task_weights", config.adaptive_task_weights},
        {"loss_weights", {{"alpha", lw.alpha}, {"beta", lw.beta}, {"gamma", lw.gamma}}},
        {"task_weights",
         {{"lambdas", tw.lambdas},
          {"eta", tw.eta},
          {"floor", tw.floor},
          {"renorm_target", tw.renorm_target ? nlohmann::json(*tw.renorm_target) : nlohmann::json()}}},
        {"optimizer",
         {{"learning_rate", opt.learning_rate}, {"momentum", opt.momentum}, {"grad_clip", opt.grad_clip}, {"weight_decay", opt.weight_decay}}},
    };
}

} // namespace

TrainResult train(const ModelParams& initial, const FeatureTable& features, std::span<const TrainingExample> train_set,
                  std::span<const TrainingExample> valid_set, const LossWeights& loss_weights,
                  const TaskWeights& task_weights, OptimizerState optimizer, const TrainConfig& config) {
    if (train_set.empty()) {
        throw InputError("cannot train on an empty train split");
    }
    config.validate();
    optimizer.validate();

    TrainResult result{initial, task_weights, {}};
    result.report.seed = config.seed;
    result.report.config_echo = config_json(config, loss_weights, task_weights, optimizer).dump();
    if (config.epochs == 0) {
        return result;
    }

    ModelParams params = initial;
    TaskWeights weights = task_weights;
    std::optional<ModelParams> best;
    std::optional<double> best_auc;
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<TrainingExample> batch;
    batch.reserve(config.batch_size);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        Rng rng(mix_seed(config.seed, epoch));
        rng.shuffle(std::span<std::size_t>(order));

        EpochRecord record;
        record.epoch = epoch + 1;
        std::array<double, kTaskCount> loss_sum{};
        std::array<double, kTaskCount> loss_batches{};
        double grad_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            batch.clear();
            for (std::size_t k = begin; k < end; ++k) {
                batch.push_back(train_set[order[k]]);
            }
            const GradientResult g = forward_backward(batch, params, features, loss_weights, weights);
            const double norm = sgd_step(params.values(), g.gradient, optimizer);
            grad_sum += norm;
            record.max_grad_norm = std::max(record.max_grad_norm, norm);
            record.attribution.l_pred += g.attribution.l_pred;
            record.attribution.l_reason += g.attribution.l_reason;
            record.attribution.l_consistency += g.attribution.l_consistency;
            record.attribution.total += g.attribution.total;
            for (const Task t : kAllTasks) {
                if (g.tasks.is_active(t)) {
                    loss_sum[index_of(t)] += g.tasks[t];
                    loss_batches[index_of(t)] += 1.0;
                }
            }
            ++n_batches;
        }
        const double nb = static_cast<double>(n_batches);
        record.mean_grad_norm = grad_sum / nb;
        record.attribution.l_pred /= nb;
        record.attribution.l_reason /= nb;
        record.attribution.l_consistency /= nb;
        record.attribution.total /= nb;

        TaskLosses epoch_losses;
        for (const Task t : kAllTasks) {
            const std::size_t i = index_of(t);
            if (loss_batches[i] > 0.0) {
                epoch_losses.loss[i] = loss_sum[i] / loss_batches[i];
                epoch_losses.active[i] = true;
            }
        }
        if (config.adaptive_task_weights) {
            weights = update_task_weights(weights, epoch_losses);
        }
        record.task_loss = epoch_losses.loss;
        record.task_active = epoch_losses.active;
        record.lambdas = weights.lambdas;

        record.valid_auc = valid_set.empty() ? std::nullopt : example_auc(valid_set, params, features);
        if (config.record_wall_clock) {
            record.wall_clock_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        result.report.epochs.push_back(record);

        if (record.valid_auc) {
            if (!best_auc || *record.valid_auc > *best_auc) {
                best_auc = record.valid_auc;
                best = params;
                result.report.best_epoch = record.epoch;
                result.task_weights = weights;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                result.report.early_stopped = true;
                break;
            }
        }
    }

    result.report.best_valid_auc = best_auc;
    if (best) {
        result.params = std::move(*best);
    } else {
        result.params = std::move(params);
        result.task_weights = weights;
        result.report.best_epoch = result.report.epochs.size();
    }
    return result;
}

std::string report_jsonl(const TrainReport& report) {
    std::string out;
    for (const auto& r : report.epochs) {
        nlohmann::json losses = nlohmann::json::object();
        nlohmann::json lambdas = nlohmann::json::object();
        for (const Task t : kAllTasks) {
            const std::string name(task_name(t));
            losses[name] = r.task_active[index_of(t)] ? nlohmann::json(r.task_loss[index_of(t)]) : nlohmann::json();
            lambdas[name] = r.lambdas[index_of(t)];
        }
        const nlohmann::json line = {
            {"epoch", r.epoch},
            {"seed", report.seed},
            {"task_loss", losses},
            {"lambdas", lambdas},
            {"l_pred", r.attribution.l_pred},
            {"l_reason", r.attribution.l_reason},
            {"l_consistency", r.attribution.l_consistency},
            {"mean_grad_norm", r.mean_grad_norm},
            {"max_grad_norm", r.max_grad_norm},
            {"valid_auc", r.valid_auc ? nlohmann::json(*r.valid_auc) : nlohmann::json()},
            {"wall_clock_seconds", r.wall_clock_seconds},
            {"config", nlohmann::json::parse(report.config_echo)},
        };
        out += line.dump();
        out += '\n';
    }
    return out;
}

void MetaConfig::validate() const {
    if (!(inner_lr > 0.0) || !std::isfinite(inner_lr)) {
        throw InputError("inner_lr must be positive");
    }
    if (inner_steps < 1) {
        throw InputError("inner_steps must be at least 1");
    }
}

std::vector<char> adaptation_mask(const ModelParams& params, const MetaConfig& meta, std::optional<Entity> entity) {
    std::vector<char> mask(params.layout().total(), 0);
    for (const Block b : meta.blocks) {
        const BlockRange& r = params.layout()[b];
        std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r.offset), r.size, char{1});
    }
    if (meta.entity_row && entity) {
        const auto& dims = params.dims();
        const Block b = entity->kind == EntityKind::user ? Block::user_embed : Block::item_embed;
        const std::size_t rows = entity->kind == EntityKind::user ? dims.n_users : dims.n_items;
        if (entity->index >= rows) {
            throw InputError("adaptation entity index out of range");
        }
        const std::size_t offset = params.layout()[b].offset + entity->index * dims.latent;
        std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(offset), dims.latent, char{1});
    }
    return mask;
}

std::vector<double> adapt_steps(std::vector<double> theta, std::span<const char> mask, double lr,
                                std::size_t steps, const GradientFn& grad) {
    if (mask.size() != theta.size()) {
        throw InputError("adaptation mask length does not match the parameters");
    }
    for (std::size_t s = 0; s < steps; ++s) {
        const std::vector<double> g = grad(theta);
        if (g.size() != theta.size()) {
            throw InputError("gradient length does not match the parameters");
        }
        for (std::size_t i = 0; i < theta.size(); ++i) {
            if (mask[i] != 0) {
                theta[i] -= lr * g[i];
            }
        }
    }
    return theta;
}

ModelParams meta_adapt(const ModelParams& base, std::span<const TrainingExample> support,
                       const FeatureTable& features, const MetaConfig& meta, const LossWeights& loss_weights,
                       std::optional<Entity> entity) {
    meta.validate();
    if (support.empty()) {
        return base;
    }
    const auto& dims = base.dims();
    for (const auto& ex : support) {
        if (ex.user >= dims.n_users) {
            throw InputError("support example references an unknown user");
        }
        bool bad = ex.item >= dims.n_items || ex.item >= features.size();
        for (const auto& h : ex.history) {
            bad = bad || h.item >= dims.n_items || h.item >= features.size();
        }
        if (bad) {
            throw InputError("support example references an unknown item");
        }
    }
    if (!entity && meta.entity_row) {
        const auto same = [&](auto field) {
            return std::all_of(support.begin(), support.end(),
                               [&](const TrainingExample& ex) { return field(ex) == field(support.front()); });
        };
        if (same([](const TrainingExample& ex) { return ex.user; })) {
            entity = Entity{EntityKind::user, support.front().user};
        } else if (same([](const TrainingExample& ex) { return ex.item; })) {
            entity = Entity{EntityKind::item, support.front().item};
        } else {
            throw InputError("support set mixes users and items; name the entity to adapt");
        }
    }

    // Prediction plus attribution: the pred and exp tasks at unit weight.
    TaskWeights tw = TaskWeights::only(Task::pred);
    tw[Task::exp] = 1.0;
    const std::vector<char> mask = adaptation_mask(base, meta, entity);
    const GradientFn grad = [&](std::span<const double> theta) {
        const ModelParams p = ModelParams::unflatten(dims, theta);
        return forward_backward(support, p, features, loss_weights, tw).gradient;
    };
    std::vector<double> theta =
        adapt_steps(base.flatten(), mask, meta.inner_lr, meta.inner_steps, grad);
    return ModelParams::unflatten(dims, theta);
}

} // namespace attrirec
