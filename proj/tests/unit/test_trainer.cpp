#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "../support/fixtures.hpp"
#include "attrirec/data.hpp"
#include "attrirec/errors.hpp"
#include "attrirec/pipeline.hpp"
#include "attrirec/synthetic.hpp"
#include "attrirec/trainer.hpp"

using namespace attrirec;

namespace {

TaskLosses losses_of(std::array<double, kTaskCount> values, std::array<bool, kTaskCount> active = {true, true, true, true}) {
    TaskLosses l;
    l.loss = values;
    l.active = active;
    return l;
}

double active_sum(const TaskWeights& tw, const TaskLosses& l) {
    double s = 0.0;
    for (const Task t : kAllTasks) {
        if (l.is_active(t)) {
            s += tw[t];
        }
    }
    return s;
}

Corpus synthetic_corpus(std::size_t users, std::size_t items, std::size_t interactions, double noise,
                        std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.n_users = users;
    cfg.n_items = items;
    cfg.n_interactions = interactions;
    cfg.noise_std = noise;
    cfg.seed = seed;
    auto data = generate_synthetic(cfg);
    return Corpus(std::move(data.users), std::move(data.items), std::move(data.interactions));
}

} // namespace

TEST_SUITE("adaptive-trainer") {

TEST_CASE("task weight update: fixed points") {
    TaskWeights tw;
    tw.eta = 0.0;
    const auto l = losses_of({0.7, 1.3, 0.2, 2.5});
    const TaskWeights same = update_task_weights(tw, l);
    for (const Task t : kAllTasks) {
        CHECK(same[t] == doctest::Approx(1.0).epsilon(1e-15));
    }
    TaskWeights equal;
    const TaskWeights eq = update_task_weights(equal, losses_of({0.9, 0.9, 0.9, 0.9}));
    for (const Task t : kAllTasks) {
        CHECK(eq[t] == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("task weight update: ratio law for the two-task example") {
    TaskWeights tw;
    tw.renorm_target = 2.0;
    const auto l = losses_of({2.0, 1.0, 0.0, 0.0}, {true, true, false, false});
    const TaskWeights next = update_task_weights(tw, l);
    CHECK(next[Task::pred] / next[Task::exp] == doctest::Approx(std::exp(-0.1)).epsilon(1e-15));
    const double a = std::exp(-0.2);
    const double b = std::exp(-0.1);
    CHECK(next[Task::pred] == doctest::Approx(2.0 * a / (a + b)).epsilon(1e-15));
    CHECK(next[Task::exp] == doctest::Approx(2.0 * b / (a + b)).epsilon(1e-15));
    CHECK(next[Task::pred] + next[Task::exp] == doctest::Approx(2.0).epsilon(1e-15));
    // inactive tasks keep their value
    CHECK(next[Task::rate] == 1.0);
    CHECK(next[Task::cross] == 1.0);
}

TEST_CASE("task weight update: ratio law, floor and sum over random draws") {
    Rng rng(21);
    for (int trial = 0; trial < 2000; ++trial) {
        TaskWeights tw;
        for (auto& v : tw.lambdas) {
            v = rng.uniform(0.2, 2.0);
        }
        tw.eta = rng.uniform(0.0, 0.5);
        tw.floor = 0.05;
        std::array<bool, kTaskCount> active{};
        for (auto& a : active) {
            a = rng.uniform() < 0.7;
        }
        active[0] = true;
        std::array<double, kTaskCount> values{};
        for (auto& v : values) {
            v = rng.uniform(0.0, 3.0);
        }
        const TaskLosses l = losses_of(values, active);
        const TaskWeights next = update_task_weights(tw, l);
        std::size_t n_active = 0;
        bool clamped = false;
        for (const Task t : kAllTasks) {
            if (l.is_active(t)) {
                ++n_active;
                clamped = clamped || tw[t] * std::exp(-tw.eta * l[t]) < tw.floor;
            } else {
                REQUIRE(next[t] == tw[t]);
            }
        }
        REQUIRE(std::abs(active_sum(next, l) - static_cast<double>(n_active)) <= 1e-9);
        for (const Task t : kAllTasks) {
            REQUIRE(next[t] >= tw.floor * (1.0 - 1e-12));
        }
        if (clamped) {
            continue;
        }
        for (const Task a : kAllTasks) {
            for (const Task b : kAllTasks) {
                if (!l.is_active(a) || !l.is_active(b)) {
                    continue;
                }
                const double expected = tw[a] / tw[b] * std::exp(-tw.eta * (l[a] - l[b]));
                REQUIRE(next[a] / next[b] == doctest::Approx(expected).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("task weight update rejects bad losses") {
    CHECK_THROWS_AS(update_task_weights({}, losses_of({-1.0, 0.0, 0.0, 0.0})), InputError);
    CHECK_THROWS_AS(update_task_weights({}, losses_of({NAN, 0.0, 0.0, 0.0})), InputError);
    // an inactive task's value is never read
    const auto l = losses_of({1.0, NAN, 0.5, 0.5}, {true, false, true, true});
    CHECK_NOTHROW(update_task_weights({}, l));
}

TEST_CASE("multitask total is linear in the task weights") {
    const auto m = fixture::tiny_model();
    const LossWeights lw;
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        TaskWeights a;
        TaskWeights b;
        for (std::size_t t = 0; t < kTaskCount; ++t) {
            a.lambdas[t] = rng.uniform(0.1, 2.0);
            b.lambdas[t] = rng.uniform(0.1, 2.0);
        }
        const double s = rng.uniform(0.1, 0.9);
        TaskWeights mix;
        for (std::size_t t = 0; t < kTaskCount; ++t) {
            mix.lambdas[t] = s * a.lambdas[t] + (1 - s) * b.lambdas[t];
        }
        const auto la = multitask_loss(m.batch, m.params, m.features, a, lw);
        const auto lb = multitask_loss(m.batch, m.params, m.features, b, lw);
        const auto lm = multitask_loss(m.batch, m.params, m.features, mix, lw);
        CHECK(lm.total == doctest::Approx(s * la.total + (1 - s) * lb.total).epsilon(1e-12));
        double hand = 0.0;
        for (const Task t : kAllTasks) {
            hand += a[t] * la[t];
        }
        CHECK(la.total == doctest::Approx(hand).epsilon(1e-14));
    }
}

TEST_CASE("sgd_step") {
    std::vector<double> theta = {0.5, -1.0, 2.0};
    OptimizerState opt;
    const std::vector<double> zero(3, 0.0);
    sgd_step(theta, zero, opt);
    CHECK(theta == std::vector<double>{0.5, -1.0, 2.0});
    REQUIRE(opt.velocity.size() == 3);

    OptimizerState plain;
    plain.momentum = 0.0;
    plain.learning_rate = 0.1;
    const std::vector<double> g = {1.0, -2.0, 0.5};
    sgd_step(theta, g, plain);
    sgd_step(theta, g, plain);
    CHECK(theta[0] == doctest::Approx(0.5 - 0.2).epsilon(1e-15));
    CHECK(theta[1] == doctest::Approx(-1.0 + 0.4).epsilon(1e-15));
    CHECK(theta[2] == doctest::Approx(2.0 - 0.1).epsilon(1e-15));

    // f(t) = (t - 3)^2 from t = 0: gradient -6, step 0.25.
    std::vector<double> q = {0.0};
    OptimizerState probe;
    probe.momentum = 0.0;
    probe.learning_rate = 0.25;
    probe.grad_clip = 0.0; // the default bound of 5 would clip this gradient
    const std::vector<double> gq = {2.0 * (q[0] - 3.0)};
    const double norm = sgd_step(q, gq, probe);
    CHECK(norm == 6.0);
    CHECK(q[0] == 1.5);

    // clipping rescales to the bound but reports the raw norm
    std::vector<double> c = {0.0, 0.0};
    OptimizerState clip;
    clip.momentum = 0.0;
    clip.learning_rate = 1.0;
    clip.grad_clip = 5.0;
    CHECK(sgd_step(c, std::vector<double>{30.0, 40.0}, clip) == 50.0);
    CHECK(c[0] == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(c[1] == doctest::Approx(-4.0).epsilon(1e-15));

    OptimizerState bad;
    CHECK_THROWS_AS(sgd_step(theta, std::vector<double>{1.0, INFINITY, 0.0}, bad), NumericError);
    CHECK_THROWS_AS(sgd_step(theta, std::vector<double>{1.0}, bad), InputError);
    OptimizerState lr0;
    lr0.learning_rate = 0.0;
    CHECK_THROWS_AS(lr0.validate(), InputError);
}

TEST_CASE("train: zero epochs and determinism") {
    const auto m = fixture::tiny_model();
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto none = train(m.params, m.features, m.batch, {}, {}, {}, {}, cfg);
    CHECK(none.params == m.params);
    CHECK(none.report.epochs.empty());
    CHECK_THROWS_AS(train(m.params, m.features, {}, {}, {}, {}, {}, TrainConfig{}), InputError);

    const Corpus c = synthetic_corpus(120, 60, 2400, 0.1, 3);
    const DatasetSplit split = make_splits(c.interactions(), {}, 5, 3);
    PipelineConfig pc;
    pc.train.epochs = 3;
    const FitResult a = fit(c, split, pc);
    const FitResult b = fit(c, split, pc);
    CHECK(a.trained.params == b.trained.params);
    CHECK(report_jsonl(a.trained.report) == report_jsonl(b.trained.report));
    CHECK(a.trained.report.epochs.size() == 3);
    pc.seed = 8;
    const FitResult other = fit(c, split, pc);
    CHECK_FALSE(other.trained.params == a.trained.params);
}

TEST_CASE("train: report carries per-epoch state") {
    const Corpus c = synthetic_corpus(120, 60, 2400, 0.1, 4);
    const DatasetSplit split = make_splits(c.interactions(), {}, 5, 4);
    PipelineConfig pc;
    pc.train.epochs = 4;
    const FitResult r = fit(c, split, pc);
    const auto& rep = r.trained.report;
    REQUIRE(rep.epochs.size() == 4);
    for (std::size_t e = 0; e < rep.epochs.size(); ++e) {
        const auto& rec = rep.epochs[e];
        CHECK(rec.epoch == e + 1);
        CHECK(rec.valid_auc.has_value());
        CHECK(rec.max_grad_norm >= rec.mean_grad_norm);
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < kTaskCount; ++t) {
            if (rec.task_active[t]) {
                sum += rec.lambdas[t];
                ++n;
                CHECK(rec.lambdas[t] >= pc.tasks.floor);
            }
        }
        CHECK(sum == doctest::Approx(static_cast<double>(n)).epsilon(1e-9));
    }
    const std::string jsonl = report_jsonl(rep);
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 4);
    for (const auto& rec : rep.epochs) {
        CHECK(rec.wall_clock_seconds == 0.0); // not recorded by default
    }
}

TEST_CASE("train: planted signal without noise is learned") {
    const Corpus c = synthetic_corpus(400, 150, 8000, 0.0, 11);
    const DatasetSplit split = make_splits(c.interactions(), {}, 5, 11);
    PipelineConfig pc;
    pc.train.epochs = 30;
    const FitResult r = fit(c, split, pc);
    REQUIRE(r.trained.report.best_valid_auc.has_value());
    MESSAGE("best validation AUC " << *r.trained.report.best_valid_auc << " at epoch " << r.trained.report.best_epoch);
    CHECK(*r.trained.report.best_valid_auc > 0.75);
    CHECK(r.trained.report.epochs.size() <= 30);
}

TEST_CASE("meta_adapt: empty support and masked parameters") {
    const auto m = fixture::tiny_model();
    const MetaConfig meta;
    const ModelParams same = meta_adapt(m.params, {}, m.features, meta, {});
    CHECK(same == m.params);

    std::vector<TrainingExample> support;
    for (const auto& ex : m.batch) {
        if (ex.user == 1) {
            support.push_back(ex);
        }
    }
    REQUIRE(support.size() == 2);
    const ModelParams adapted = meta_adapt(m.params, support, m.features, meta, {});
    const auto mask = adaptation_mask(m.params, meta, Entity{EntityKind::user, 1});
    const auto before = m.params.values();
    const auto after = adapted.values();
    std::size_t moved = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (!mask[i]) {
            REQUIRE(std::memcmp(&before[i], &after[i], sizeof(double)) == 0);
        } else if (before[i] != after[i]) {
            ++moved;
        }
    }
    CHECK(moved > 0);
    // user 1's row is adaptable, the other rows are not
    const auto& ur = m.params.layout()[Block::user_embed];
    for (std::size_t k = 0; k < ur.size; ++k) {
        CHECK(static_cast<bool>(mask[ur.offset + k]) == (k / m.dims.latent == 1));
    }
    const auto& wt = m.params.layout()[Block::w_text];
    for (std::size_t k = 0; k < wt.size; ++k) {
        CHECK_FALSE(mask[wt.offset + k]);
    }
}

TEST_CASE("meta_adapt: a single adaptable scalar descends the support loss") {
    const auto m = fixture::tiny_model();
    std::vector<TrainingExample> support;
    for (const auto& ex : m.batch) {
        if (ex.user == 2) {
            support.push_back(ex);
        }
    }
    MetaConfig meta;
    meta.blocks = {Block::pred_bias};
    meta.entity_row = false;
    meta.inner_steps = 1;
    meta.inner_lr = 0.5;
    TaskWeights tw = TaskWeights::only(Task::pred);
    tw[Task::exp] = 1.0;
    const LossWeights lw;
    const ModelParams adapted = meta_adapt(m.params, support, m.features, meta, lw);
    const double before = multitask_loss(support, m.params, m.features, tw, lw).total;
    const double after = multitask_loss(support, adapted, m.features, tw, lw).total;
    CHECK(after < before);

    // one step is theta - lr * grad on that scalar, literally
    const auto g = forward_backward(support, m.params, m.features, lw, tw).gradient;
    const auto off = m.params.layout()[Block::pred_bias].offset;
    CHECK(adapted.values()[off] == m.params.values()[off] - 0.5 * g[off]);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (i != off) {
            REQUIRE(adapted.values()[i] == m.params.values()[i]);
        }
    }
}

TEST_CASE("adapt_steps on a quadratic probe") {
    // f(t) = 2 (t - 1)^2 has curvature 4; any lr below 0.5 descends.
    const GradientFn grad = [](std::span<const double> t) {
        return std::vector<double>{4.0 * (t[0] - 1.0), 100.0};
    };
    const std::vector<char> mask = {1, 0};
    const auto f = [](double t) { return 2.0 * (t - 1.0) * (t - 1.0); };
    for (const double lr : {0.01, 0.1, 0.3, 0.49}) {
        std::vector<double> theta = {-2.0, 7.0};
        double prev = f(theta[0]);
        for (int s = 0; s < 5; ++s) {
            theta = adapt_steps(theta, mask, lr, 1, grad);
            REQUIRE(f(theta[0]) < prev);
            REQUIRE(theta[1] == 7.0);
            prev = f(theta[0]);
        }
    }
    const auto three = adapt_steps({-2.0, 7.0}, mask, 0.1, 3, grad);
    CHECK(three[0] == doctest::Approx(1.0 - 3.0 * std::pow(0.6, 3)).epsilon(1e-14));
}

TEST_CASE("meta_adapt: errors") {
    const auto m = fixture::tiny_model();
    auto bad = m.batch;
    bad[0].item = 99;
    CHECK_THROWS_AS(meta_adapt(m.params, std::span(bad).first(1), m.features, MetaConfig{}, {}), InputError);
    auto bad_user = m.batch;
    bad_user[0].user = 50;
    CHECK_THROWS_AS(meta_adapt(m.params, std::span(bad_user).first(1), m.features, MetaConfig{}, {}), InputError);
    // mixed users and items with no entity named
    CHECK_THROWS_AS(meta_adapt(m.params, m.batch, m.features, MetaConfig{}, {}), InputError);
    MetaConfig zero;
    zero.inner_steps = 0;
    CHECK_THROWS_AS(zero.validate(), InputError);
}

} // TEST_SUITE
