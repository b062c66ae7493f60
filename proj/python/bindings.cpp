#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "attrirec/cli.hpp"
#include "attrirec/config.hpp"
#include "attrirec/data.hpp"
#include "attrirec/errors.hpp"
#include "attrirec/evaluation.hpp"
#include "attrirec/instruction.hpp"
#include "attrirec/knowledge_base.hpp"
#include "attrirec/metrics.hpp"
#include "attrirec/objectives.hpp"
#include "attrirec/pipeline.hpp"
#include "attrirec/synthetic.hpp"
#include "attrirec/text.hpp"
#include "attrirec/trainer.hpp"

namespace py = pybind11;
using namespace attrirec;

namespace {

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

struct Dataset {
    std::unique_ptr<Corpus> corpus;
    DatasetSplit split;
    RunConfig config;

    const Interaction& row(std::size_t r) const { return corpus->interactions().at(r); }
};

std::unique_ptr<Dataset> load_dataset(const std::filesystem::path& dir, const std::string& config_json) {
    auto ds = std::make_unique<Dataset>();
    ds->config = config_json.empty() ? RunConfig{} : parse_run_config(config_json);
    ds->config.paths.output_dir = dir;
    ds->config.validate();
    const auto& paths = ds->config.paths;
    ds->corpus = std::make_unique<Corpus>(load_users(paths.users_path()), load_items(paths.items_path()),
                                          load_ratings(paths.ratings_path()));
    const auto& p = ds->config.pipeline;
    ds->split = make_splits(ds->corpus->interactions(), p.ratios, p.coldstart_threshold, p.seed);
    return ds;
}

py::dict train_evaluate(const Dataset& ds) {
    const FitResult fitted = fit(*ds.corpus, ds.split, ds.config.pipeline);
    const MetricsReport test =
        evaluate_model(*ds.corpus, ds.split, fitted.data, fitted.trained.params, ds.config.pipeline);
    py::dict out;
    out["test"] = json_loads(report_json(test));
    out["train_report"] = py::list();
    std::istringstream lines(report_jsonl(fitted.trained.report));
    for (std::string line; std::getline(lines, line);) {
        if (!line.empty()) {
            out["train_report"].cast<py::list>().append(json_loads(line));
        }
    }
    out["best_epoch"] = fitted.trained.report.best_epoch;
    return out;
}

} // namespace

PYBIND11_MODULE(_attrirec, m) {
    m.doc() = "Attribution-aware recommendation engine";

    static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
    static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const NumericError& e) {
            py::set_error(numeric_error, (e.term() + ": " + e.what()).c_str());
        } catch (const InputError& e) {
            py::set_error(input_error, e.what());
        }
    });

    m.def("tokenize", &tokenize, py::arg("text"));
    m.def("bleu_text", &bleu_text, py::arg("candidate"), py::arg("reference"), py::arg("max_n") = 4);

    m.def(
        "auc", [](const std::vector<double>& s, const std::vector<int>& l) { return auc(s, l); },
        py::arg("scores"), py::arg("labels"));
    m.def(
        "ndcg_at_k", [](const std::vector<int>& l, std::size_t k) { return ndcg_at_k(l, k); },
        py::arg("ranked_labels"), py::arg("k"));
    m.def(
        "hit_at_k", [](const std::vector<int>& l, std::size_t k) { return hit_at_k(l, k); },
        py::arg("ranked_labels"), py::arg("k"));

    m.def(
        "combine",
        [](double alpha, double beta, double gamma, double l_pred, double l_reason, double l_cons) {
            return combine(LossWeights{alpha, beta, gamma}, l_pred, l_reason, l_cons).total;
        },
        py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("l_pred"), py::arg("l_reason"),
        py::arg("l_consistency"));

    m.def(
        "update_task_weights",
        [](const std::vector<double>& lambdas, const std::vector<double>& losses, double eta, double floor) {
            if (lambdas.size() != kTaskCount || losses.size() != kTaskCount) {
                throw InputError("expected one lambda and one loss per task (pred, exp, rate, cross)");
            }
            TaskWeights tw;
            TaskLosses tl;
            for (std::size_t t = 0; t < kTaskCount; ++t) {
                tw.lambdas[t] = lambdas[t];
                tl.loss[t] = losses[t];
                tl.active[t] = lambdas[t] > 0.0;
            }
            tw.eta = eta;
            tw.floor = floor;
            const TaskWeights next = update_task_weights(tw, tl);
            return std::vector<double>(next.lambdas.begin(), next.lambdas.end());
        },
        py::arg("lambdas"), py::arg("losses"), py::arg("eta") = 0.1, py::arg("floor") = 0.05);

    m.def(
        "render_prompt",
        [](const std::vector<std::pair<std::string, std::string>>& liked,
           const std::vector<std::pair<std::string, std::string>>& disliked, const std::string& target_title,
           std::size_t max_history) {
            AttributionInstruction instr;
            instr.task_text = kDefaultTaskText;
            for (const auto& [title, reason] : liked) {
                instr.liked.push_back({title, title, reason, Polarity::liked});
            }
            for (const auto& [title, reason] : disliked) {
                instr.disliked.push_back({title, title, reason, Polarity::disliked});
            }
            instr.target_id = target_title;
            instr.target_title = target_title;
            return render_prompt(instr, max_history).text;
        },
        py::arg("liked"), py::arg("disliked"), py::arg("target_title"), py::arg("max_history") = kDefaultMaxHistory,
        "Liked and disliked histories are lists of (title, reason) pairs.");
    m.def(
        "render_expected_output",
        [](bool yes, const std::string& reason) { return render_expected_output(yes ? Verdict::yes : Verdict::no, reason); },
        py::arg("yes"), py::arg("reason"));
    m.def(
        "parse_output",
        [](const std::string& text) {
            const ParsedOutput p = parse_output(text);
            return py::make_tuple(p.pred == Verdict::yes, p.reason);
        },
        py::arg("text"), "Returns (is_yes, reason).");

    py::class_<SyntheticConfig>(m, "SyntheticConfig")
        .def(py::init<>())
        .def_readwrite("n_users", &SyntheticConfig::n_users)
        .def_readwrite("n_items", &SyntheticConfig::n_items)
        .def_readwrite("n_interactions", &SyntheticConfig::n_interactions)
        .def_readwrite("n_groups", &SyntheticConfig::n_groups)
        .def_readwrite("n_attributes", &SyntheticConfig::n_attributes)
        .def_readwrite("noise_std", &SyntheticConfig::noise_std)
        .def_readwrite("seed", &SyntheticConfig::seed)
        .def_readwrite("visual_coverage", &SyntheticConfig::visual_coverage)
        .def_readwrite("coldstart_user_fraction", &SyntheticConfig::coldstart_user_fraction);

    m.def(
        "generate_data",
        [](const SyntheticConfig& config, const std::filesystem::path& dir) {
            config.validate();
            const SyntheticDataset data = generate_synthetic(config);
            std::filesystem::create_directories(dir);
            RunPaths paths;
            paths.output_dir = dir;
            write_ratings(paths.ratings_path(), data.interactions);
            write_items(paths.items_path(), data.items);
            write_users(paths.users_path(), data.users);
            return py::make_tuple(data.users.size(), data.items.size(), data.interactions.size());
        },
        py::arg("config"), py::arg("directory"),
        "Writes ratings.csv, items.jsonl and users.jsonl; returns the three row counts.");

    py::class_<KnowledgeBase>(m, "KnowledgeBase")
        .def_static("load", &load_kb, py::arg("path"))
        .def("save", [](const KnowledgeBase& kb, const std::filesystem::path& p) { save_kb(kb, p); }, py::arg("path"))
        .def_property_readonly("prior", [](const KnowledgeBase& kb) { return kb.meta.prior; })
        .def_property_readonly("groups",
                               [](const KnowledgeBase& kb) {
                                   std::vector<std::string> g;
                                   for (const auto& [name, _] : kb.demo_affinity) {
                                       g.push_back(name);
                                   }
                                   return g;
                               })
        .def("affinity", [](const KnowledgeBase& kb, const std::string& group,
                            const std::string& attribute) { return kb.demo_affinity.at(group).at(attribute); })
        .def("__eq__", [](const KnowledgeBase& a, const KnowledgeBase& b) { return a == b; });

    py::class_<Dataset>(m, "Dataset")
        .def_static("load", &load_dataset, py::arg("directory"), py::arg("config_json") = "",
                    "Loads ratings.csv, items.jsonl and users.jsonl from a directory and splits them.")
        .def_property_readonly("n_users", [](const Dataset& d) { return d.corpus->users().size(); })
        .def_property_readonly("n_items", [](const Dataset& d) { return d.corpus->items().size(); })
        .def_property_readonly("n_interactions", [](const Dataset& d) { return d.corpus->interactions().size(); })
        .def_property_readonly("attributes", [](const Dataset& d) { return d.corpus->attributes(); })
        .def_property_readonly("split_sizes",
                               [](const Dataset& d) {
                                   return py::make_tuple(d.split.train.size(), d.split.valid.size(),
                                                         d.split.test.size());
                               })
        .def_property_readonly("coldstart_users", [](const Dataset& d) { return d.split.coldstart_users; })
        .def("build_kb",
             [](const Dataset& d) { return build_kb(*d.corpus, d.split.train, d.config.pipeline.kb_smoothing); })
        .def(
            "zero_shot_score",
            [](const Dataset& d, const KnowledgeBase& kb, const std::string& user_id, const std::string& item_id,
               std::int64_t timestamp) {
                const auto u = d.corpus->user_index(user_id);
                const auto i = d.corpus->item_index(item_id);
                if (!u || !i) {
                    throw InputError("unknown user or item id");
                }
                return zero_shot_score(d.corpus->users()[*u], d.corpus->items()[*i], timestamp, kb,
                                       d.config.pipeline.mix);
            },
            py::arg("kb"), py::arg("user_id"), py::arg("item_id"), py::arg("timestamp") = -1)
        .def("train_evaluate", &train_evaluate,
             "Fits the model on the train split and reports test metrics and the per-epoch log.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv = {"attrirec"};
            for (const auto& a : args) {
                argv.push_back(a.c_str());
            }
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
