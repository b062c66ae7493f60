#include "attrirec/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attrirec/config.hpp"
#include "attrirec/errors.hpp"
#include "attrirec/evaluation.hpp"
#include "attrirec/io.hpp"
#include "attrirec/knowledge_base.hpp"
#include "attrirec/pipeline.hpp"
#include "attrirec/random.hpp"
#include "attrirec/synthetic.hpp"

namespace attrirec {

namespace {

namespace fs = std::filesystem;

struct GlobalFlags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> epochs;
};

struct GenerateFlags {
    std::optional<std::size_t> n_users;
    std::optional<std::size_t> n_items;
    std::optional<std::size_t> n_interactions;
};

RunConfig resolve_config(const GlobalFlags& flags) {
    RunConfig config = flags.config ? load_run_config(*flags.config) : RunConfig{};
    if (flags.seed) {
        config.pipeline.seed = *flags.seed;
        config.synthetic.seed = *flags.seed;
    }
    if (flags.out) {
        config.paths.output_dir = *flags.out;
    }
    if (flags.epochs) {
        config.pipeline.train.epochs = *flags.epochs;
    }
    return config;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw InputError("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) {
        throw InputError(what + " not found: " + path.string());
    }
}

Corpus load_corpus(const RunConfig& config) {
    const auto ratings = config.paths.ratings_path();
    const auto items = config.paths.items_path();
    const auto users = config.paths.users_path();
    require_file(ratings, "ratings file");
    require_file(items, "items file");
    require_file(users, "users file");
    return Corpus(load_users(users), load_items(items), load_ratings(ratings));
}

DatasetSplit split_of(const Corpus& corpus, const PipelineConfig& p) {
    return make_splits(corpus.interactions(), p.ratios, p.coldstart_threshold, p.seed);
}

Checkpoint load_matching_checkpoint(const RunConfig& config, const Corpus& corpus) {
    const auto path = config.paths.checkpoint_path();
    require_file(path, "checkpoint");
    Checkpoint ckpt = load_checkpoint(path);
    const CheckpointMeta expected = checkpoint_meta(corpus, ckpt.meta.encoder);
    auto mismatch = [&](const char* what) {
        return InputError("checkpoint " + path.string() + " does not match the corpus (" + what + " differ)");
    };
    if (ckpt.meta.user_ids != expected.user_ids) {
        throw mismatch("user ids");
    }
    if (ckpt.meta.item_ids != expected.item_ids) {
        throw mismatch("item ids");
    }
    if (ckpt.meta.attributes != expected.attributes) {
        throw mismatch("attributes");
    }
    return ckpt;
}

std::string compact_config(const RunConfig& config) {
    return nlohmann::json::parse(run_config_json(config)).dump();
}

std::string fmt(const std::optional<double>& v) {
    if (!v) {
        return "-";
    }
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *v;
    return s.str();
}

std::string fmt(double v) { return fmt(std::optional<double>(v)); }

void print_table(std::ostream& out, const std::vector<MetricsReport>& reports, const std::vector<std::size_t>& ks) {
    std::vector<std::string> header = {"bucket", "variant", "auc"};
    for (const auto k : ks) {
        header.push_back("ndcg@" + std::to_string(k));
    }
    for (const auto k : ks) {
        header.push_back("hit@" + std::to_string(k));
    }
    for (const char* h : {"bleu", "consistency", "users", "cases"}) {
        header.emplace_back(h);
    }
    std::vector<std::vector<std::string>> rows = {header};
    for (const auto& r : reports) {
        std::vector<std::string> row = {r.bucket, r.variant.empty() ? "-" : r.variant, fmt(r.auc)};
        for (const auto k : ks) {
            const auto it = r.ndcg_at.find(k);
            row.push_back(it == r.ndcg_at.end() ? "-" : fmt(it->second));
        }
        for (const auto k : ks) {
            const auto it = r.hit_at.find(k);
            row.push_back(it == r.hit_at.end() ? "-" : fmt(it->second));
        }
        row.push_back(fmt(r.mean_bleu));
        row.push_back(fmt(r.consistency_rate));
        row.push_back(std::to_string(r.n_users));
        row.push_back(std::to_string(r.n_cases));
        rows.push_back(std::move(row));
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << row[c];
        }
        out << '\n';
    }
}

void write_reports(const fs::path& path, const std::vector<MetricsReport>& reports, const std::string& echo) {
    std::string body;
    for (const auto& r : reports) {
        body += report_json(r, echo);
        body += '\n';
    }
    write_text_file_atomic(path, body);
}

// --- commands -------------------------------------------------------------

void cmd_generate(const RunConfig& config, std::ostream& out) {
    const SyntheticDataset data = generate_synthetic(config.synthetic);
    ensure_dir(config.paths.output_dir);
    write_ratings(config.paths.ratings_path(), data.interactions);
    write_items(config.paths.items_path(), data.items);
    write_users(config.paths.users_path(), data.users);
    out << "generated " << data.users.size() << " users, " << data.items.size() << " items, "
        << data.interactions.size() << " interactions in " << config.paths.output_dir.string() << '\n';
}

void cmd_build_kb(const RunConfig& config, std::ostream& out) {
    const Corpus corpus = load_corpus(config);
    const DatasetSplit split = split_of(corpus, config.pipeline);
    const KnowledgeBase kb = build_kb(corpus, split.train, config.pipeline.kb_smoothing);
    ensure_dir(config.paths.kb_path().parent_path().empty() ? fs::path(".") : config.paths.kb_path().parent_path());
    save_kb(kb, config.paths.kb_path());
    out << "knowledge base: " << kb.demo_affinity.size() << " groups, " << kb.temporal.size()
        << " attributes, built from " << kb.meta.source_interactions << " interactions -> "
        << config.paths.kb_path().string() << '\n';
}

fs::path parent_or_cwd(const fs::path& p) { return p.parent_path().empty() ? fs::path(".") : p.parent_path(); }

void cmd_train(const RunConfig& config, std::ostream& out) {
    const Corpus corpus = load_corpus(config);
    const DatasetSplit split = split_of(corpus, config.pipeline);
    const FitResult fitted = fit(corpus, split, config.pipeline);
    const auto& report = fitted.trained.report;

    ensure_dir(parent_or_cwd(config.paths.checkpoint_path()));
    ensure_dir(config.paths.output_dir);
    save_checkpoint(config.paths.checkpoint_path(), fitted.trained.params,
                    checkpoint_meta(corpus, config.pipeline.encoder));
    const fs::path report_path = config.paths.output_dir / "train_report.jsonl";
    write_text_file_atomic(report_path, report_jsonl(report));

    for (const auto& e : report.epochs) {
        double loss = 0.0;
        for (std::size_t t = 0; t < kTaskCount; ++t) {
            if (e.task_active[t]) {
                loss += e.lambdas[t] * e.task_loss[t];
            }
        }
        out << "epoch " << e.epoch << "  loss " << fmt(loss) << "  valid_auc " << fmt(e.valid_auc) << '\n';
    }
    out << "best epoch " << report.best_epoch << ", valid AUC " << fmt(report.best_valid_auc)
        << (report.early_stopped ? " (early stop)" : "") << '\n';
    out << "checkpoint -> " << config.paths.checkpoint_path().string() << ", report -> " << report_path.string()
        << '\n';
}

void cmd_evaluate(RunConfig config, const std::string& scorer_name, std::ostream& out) {
    const Corpus corpus = load_corpus(config);
    const DatasetSplit split = split_of(corpus, config.pipeline);
    const auto& p = config.pipeline;

    MetricsReport report;
    if (scorer_name == "model") {
        const Checkpoint ckpt = load_matching_checkpoint(config, corpus);
        config.pipeline.encoder = ckpt.meta.encoder;
        const PreparedData data = prepare(corpus, split, config.pipeline);
        report = evaluate_model(corpus, split, data, ckpt.params, config.pipeline);
        report.variant = "model";
    } else {
        std::set<std::pair<std::size_t, std::size_t>> positives;
        for (const std::size_t r : split.test) {
            if (binarize(corpus.interactions()[r].rating) == 1) {
                positives.emplace(corpus.user_of(r), corpus.item_of(r));
            }
        }
        Scorer scorer;
        if (scorer_name == "oracle") {
            scorer = [&positives](std::size_t user, std::span<const std::size_t> items) {
                std::vector<double> s;
                for (const std::size_t i : items) {
                    s.push_back(positives.count({user, i}) ? 1.0 : 0.0);
                }
                return s;
            };
        } else {
            const std::uint64_t seed = mix_seed(p.seed, 4);
            scorer = [seed](std::size_t user, std::span<const std::size_t> items) {
                Rng rng(mix_seed(seed, user));
                std::vector<double> s;
                for (std::size_t k = 0; k < items.size(); ++k) {
                    s.push_back(rng.uniform());
                }
                return s;
            };
        }
        EvalRequest request;
        request.rows = split.test;
        request.config = p.eval;
        request.seed = mix_seed(p.seed, 3);
        report = evaluate(corpus, scorer, request);
        report.bucket = "test";
        report.variant = scorer_name;
    }
    ensure_dir(config.paths.output_dir);
    const fs::path path = config.paths.output_dir / "eval_report.jsonl";
    write_reports(path, {report}, compact_config(config));
    print_table(out, {report}, p.eval.ks);
    out << "report -> " << path.string() << '\n';
}

void cmd_coldstart(RunConfig config, std::ostream& out, std::ostream& err) {
    const Corpus corpus = load_corpus(config);
    const DatasetSplit split = split_of(corpus, config.pipeline);
    const Checkpoint ckpt = load_matching_checkpoint(config, corpus);
    require_file(config.paths.kb_path(), "knowledge base");
    const KnowledgeBase kb = load_kb(config.paths.kb_path());
    config.pipeline.encoder = ckpt.meta.encoder;
    const PreparedData data = prepare(corpus, split, config.pipeline);
    const ColdstartResult result = coldstart_eval(corpus, split, data, ckpt.params, &kb, config.pipeline);
    for (const auto& w : result.warnings) {
        err << "warning: " << w << '\n';
    }
    std::vector<MetricsReport> reports;
    for (const auto& [name, r] : result.buckets) {
        reports.push_back(r);
    }
    ensure_dir(config.paths.output_dir);
    const fs::path path = config.paths.output_dir / "coldstart_report.jsonl";
    write_reports(path, reports, compact_config(config));
    if (reports.empty()) {
        out << "no cold-start buckets to report\n";
    } else {
        print_table(out, reports, config.pipeline.eval.ks);
    }
    out << "report -> " << path.string() << '\n';
}

void cmd_ablate(const RunConfig& config, std::ostream& out) {
    const Corpus corpus = load_corpus(config);
    const DatasetSplit split = split_of(corpus, config.pipeline);
    const std::vector<AblationRow> rows = ablation_run(corpus, split, config.pipeline);

    const std::string echo = compact_config(config);
    std::string body;
    for (const auto& row : rows) {
        auto doc = nlohmann::json::parse(report_json(row.test, echo));
        doc["new_user_auc"] = row.new_user_auc ? nlohmann::json(*row.new_user_auc) : nlohmann::json();
        doc["cross_domain_auc"] = row.cross_domain_auc ? nlohmann::json(*row.cross_domain_auc) : nlohmann::json();
        body += doc.dump() + '\n';
    }
    ensure_dir(config.paths.output_dir);
    const fs::path path = config.paths.output_dir / "ablation_report.jsonl";
    write_text_file_atomic(path, body);

    const std::size_t k = config.pipeline.eval.ks.empty() ? 10 : config.pipeline.eval.ks.back();
    std::vector<std::vector<std::string>> cells = {
        {"variant", "auc", "ndcg@" + std::to_string(k), "bleu", "consistency", "new_user_auc", "cross_domain_auc"}};
    for (const auto& row : rows) {
        const auto it = row.test.ndcg_at.find(k);
        cells.push_back({row.variant, fmt(row.test.auc), it == row.test.ndcg_at.end() ? "-" : fmt(it->second),
                         fmt(row.test.mean_bleu), fmt(row.test.consistency_rate), fmt(row.new_user_auc),
                         fmt(row.cross_domain_auc)});
    }
    std::vector<std::size_t> width(cells[0].size(), 0);
    for (const auto& r : cells) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            width[c] = std::max(width[c], r[c].size());
        }
    }
    for (const auto& r : cells) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << r[c];
        }
        out << '\n';
    }
    out << "report -> " << path.string() << '\n';
}

struct ExplainFlags {
    std::string user;
    std::string item;
    std::vector<std::string> tags;
    std::size_t top_k = 5;
};

void print_distribution(std::ostream& out, const std::vector<std::pair<std::string, double>>& dist, std::size_t k) {
    for (std::size_t i = 0; i < std::min(k, dist.size()); ++i) {
        out << "  " << dist[i].first << ' ' << fmt(dist[i].second) << '\n';
    }
}

// Mean group affinity of an unseen user for each attribute of the item.
std::vector<std::pair<std::string, double>> kb_affinities(const UserProfile& user, const ItemRecord& item,
                                                          const KnowledgeBase& kb) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& a : item.attribute_tags) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& g : user.demographic_tags) {
            const auto git = kb.demo_affinity.find(g);
            if (git == kb.demo_affinity.end()) {
                continue;
            }
            const auto ait = git->second.find(a);
            sum += ait == git->second.end() ? kb.meta.prior : ait->second;
            ++n;
        }
        out.emplace_back(a, n ? sum / static_cast<double>(n) : kb.meta.prior);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
    return out;
}

void cmd_explain(RunConfig config, const ExplainFlags& flags, std::ostream& out) {
    const Corpus corpus = load_corpus(config);
    const auto item = corpus.item_index(flags.item);
    if (!item) {
        throw InputError("unknown item '" + flags.item + "'");
    }
    const auto& record = corpus.items()[*item];
    const auto user = corpus.user_index(flags.user);

    if (!user) {
        const fs::path kb_path = config.paths.kb_path();
        if (!fs::is_regular_file(kb_path)) {
            throw InputError("unknown user '" + flags.user + "' and no knowledge base at " + kb_path.string());
        }
        const KnowledgeBase kb = load_kb(kb_path);
        const UserProfile profile{flags.user, flags.tags, ""};
        const double p = zero_shot_score(profile, record, kb.meta.build_timestamp, kb, config.pipeline.mix);
        const auto affinities = kb_affinities(profile, record, kb);
        const Verdict verdict = p >= 0.5 ? Verdict::yes : Verdict::no;
        std::vector<std::string> top;
        for (std::size_t i = 0; i < std::min<std::size_t>(2, affinities.size()); ++i) {
            top.push_back(affinities[i].first);
        }
        AttributionInstruction instr;
        instr.task_text = kDefaultTaskText;
        instr.target_id = record.item_id;
        instr.target_title = record.title;
        out << "fallback: user '" << flags.user
            << "' is not in the checkpoint; scored zero-shot from the preference knowledge base\n";
        out << "prompt:\n" << render_prompt(instr, config.pipeline.max_history).text << '\n';
        out << "output: "
            << render_expected_output(verdict, render_attribution_reason(
                                                   verdict == Verdict::yes ? Polarity::liked : Polarity::disliked, top))
            << '\n';
        out << "p_like: " << fmt(p) << '\n';
        out << "attribute affinity:\n";
        print_distribution(out, affinities, flags.top_k);
        return;
    }

    const DatasetSplit split = split_of(corpus, config.pipeline);
    const Checkpoint ckpt = load_matching_checkpoint(config, corpus);
    const FeatureTable features = build_features(corpus, ckpt.meta.encoder);
    const HistoryIndex history(corpus, split.train);
    const ModelView view(corpus, features, ckpt.params, history, config.pipeline.max_history);
    const PredictionOutput pred = view.predict(*user, *item);

    const AttributionInstruction instr = instruction_for(corpus, history, *user, *item);
    const Verdict verdict = pred.p_like >= 0.5 ? Verdict::yes : Verdict::no;
    std::vector<std::pair<std::string, double>> dist;
    for (std::size_t a = 0; a < pred.attr_dist.size(); ++a) {
        dist.emplace_back(corpus.attributes()[a], pred.attr_dist[a]);
    }
    std::stable_sort(dist.begin(), dist.end(), [](const auto& x, const auto& y) { return x.second > y.second; });

    out << "prompt:\n" << render_prompt(instr, config.pipeline.max_history).text << '\n';
    out << "output: " << render_expected_output(verdict, pred.reason_text) << '\n';
    out << "p_like: " << fmt(pred.p_like) << '\n';
    out << "p_polarity: " << fmt(pred.p_polarity) << '\n';
    out << "rating_est: " << fmt(pred.rating_est) << '\n';
    out << "attribute distribution:\n";
    print_distribution(out, dist, flags.top_k);
}

void cmd_export(const RunConfig& config, const std::string& which, std::ostream& out) {
    const Corpus corpus = load_corpus(config);
    const DatasetSplit split = split_of(corpus, config.pipeline);
    const std::vector<std::size_t>& rows = which == "train" ? split.train : which == "valid" ? split.valid : split.test;
    const HistoryIndex history(corpus, split.train);
    const bool is_train = which == "train";

    std::string body;
    for (const std::size_t r : rows) {
        const std::size_t u = corpus.user_of(r);
        const std::size_t i = corpus.item_of(r);
        const AttributionInstruction instr =
            instruction_for(corpus, history, u, i, r, is_train ? std::optional<std::size_t>(r) : std::nullopt);
        const RenderedPrompt prompt = render_prompt(instr, config.pipeline.max_history);
        nlohmann::json doc = {
            {"prompt", prompt.text},
            {"output", render_expected_output(*instr.expected_pred, instr.expected_reason.value_or(""))},
            {"meta",
             {{"row", r},
              {"user_id", corpus.users()[u].user_id},
              {"item_id", corpus.items()[i].item_id},
              {"split", which},
              {"truncated", prompt.truncated}}},
        };
        body += doc.dump() + '\n';
    }
    ensure_dir(config.paths.output_dir);
    const fs::path path = config.paths.output_dir / ("instructions_" + which + ".jsonl");
    write_text_file_atomic(path, body);
    out << "exported " << rows.size() << " instructions -> " << path.string() << '\n';
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Attribution-aware recommender: data generation, training, evaluation and explanation", "attrirec"};
    app.require_subcommand(1);
    // Top-level help expands every subcommand and its flags.
    app.set_help_flag();
    app.set_help_all_flag("-h,--help", "Print help for every command and flag, then exit");

    GlobalFlags global;
    app.add_option("--config", global.config, "JSON run configuration; flags override its values");
    app.add_option("--seed", global.seed, "Seed for data generation, splitting and training");
    app.add_option("--out", global.out, "Output directory (default: out)");
    app.add_option("--epochs", global.epochs, "Maximum training epochs");

    GenerateFlags gen;
    auto* generate = app.add_subcommand("generate-data", "Write a synthetic ratings/items/users dataset");
    generate->add_option("--n-users", gen.n_users, "Number of users");
    generate->add_option("--n-items", gen.n_items, "Number of items");
    generate->add_option("--n-interactions", gen.n_interactions, "Number of interactions");

    auto* build = app.add_subcommand("build-kb", "Build the preference knowledge base from the train split");
    auto* trainc = app.add_subcommand("train", "Train the model; writes a checkpoint and an epoch report");

    std::string scorer = "model";
    auto* evaluatec = app.add_subcommand("evaluate", "Ranking and explanation metrics on the test split");
    evaluatec->add_option("--scorer", scorer, "model, oracle or random")
        ->check(CLI::IsMember({"model", "oracle", "random"}));

    auto* coldstart = app.add_subcommand("coldstart", "Cold-start buckets: new users, new items, cross-domain");
    auto* ablate = app.add_subcommand("ablate", "Train and evaluate the five ablation variants");

    ExplainFlags ex;
    auto* explainc = app.add_subcommand("explain", "Recommendation and explanation for one user/item pair");
    explainc->add_option("--user", ex.user, "User id")->required();
    explainc->add_option("--item", ex.item, "Item id")->required();
    explainc->add_option("--tags", ex.tags, "Demographic tags for a user absent from the data")->delimiter(',');
    explainc->add_option("--top-k", ex.top_k, "Attributes to list")->check(CLI::PositiveNumber);

    std::string which = "train";
    auto* exportc = app.add_subcommand("export-instructions", "Write prompt/output pairs as JSON Lines");
    exportc->add_option("--split", which, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));

    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig config = resolve_config(global);
        if (gen.n_users) {
            config.synthetic.n_users = *gen.n_users;
        }
        if (gen.n_items) {
            config.synthetic.n_items = *gen.n_items;
        }
        if (gen.n_interactions) {
            config.synthetic.n_interactions = *gen.n_interactions;
        }
        config.validate();

        if (*generate) {
            cmd_generate(config, out);
        } else if (*build) {
            cmd_build_kb(config, out);
        } else if (*trainc) {
            cmd_train(config, out);
        } else if (*evaluatec) {
            cmd_evaluate(config, scorer, out);
        } else if (*coldstart) {
            cmd_coldstart(config, out, err);
        } else if (*ablate) {
            cmd_ablate(config, out);
        } else if (*explainc) {
            cmd_explain(config, ex, out);
        } else if (*exportc) {
            cmd_export(config, which, out);
        }
        return 0;
    } catch (const NumericError& e) {
        err << "numeric error in " << e.term() << ": " << e.what() << '\n';
        return 3;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace attrirec
