#include "attrirec/config.hpp"

#include <set>

#include <json.hpp>

#include "attrirec/errors.hpp"
#include "attrirec/io.hpp"

namespace attrirec {

using nlohmann::json;

void RunConfig::validate() const {
    synthetic.validate();
    pipeline.validate();
}

namespace {

const std::map<Block, std::string>& block_names() {
    static const std::map<Block, std::string> names = [] {
        std::map<Block, std::string> m;
        for (std::size_t b = 0; b < kBlockCount; ++b) {
            const auto block = static_cast<Block>(b);
            m[block] = std::string(block_name(block));
        }
        return m;
    }();
    return names;
}

Block block_from_name(const std::string& name) {
    for (const auto& [block, n] : block_names()) {
        if (n == name) {
            return block;
        }
    }
    throw InputError("unknown parameter block '" + name + "'");
}

json opt_path(const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(); }

json to_doc(const RunConfig& c) {
    const auto& p = c.pipeline;
    json lambdas = json::object();
    for (const Task t : kAllTasks) {
        lambdas[std::string(task_name(t))] = p.tasks[t];
    }
    json blocks = json::array();
    for (const Block b : p.meta.blocks) {
        blocks.push_back(std::string(block_name(b)));
    }
    const auto& s = c.synthetic;
    return {
        {"seed", p.seed},
        {"epochs", p.train.epochs},
        {"paths",
         {{"ratings", opt_path(c.paths.ratings)},
          {"items", opt_path(c.paths.items)},
          {"users", opt_path(c.paths.users)},
          {"kb", opt_path(c.paths.kb)},
          {"checkpoint", opt_path(c.paths.checkpoint)},
          {"output_dir", c.paths.output_dir.string()}}},
        {"synthetic",
         {{"n_users", s.n_users},
          {"n_items", s.n_items},
          {"n_interactions", s.n_interactions},
          {"n_groups", s.n_groups},
          {"n_attributes", s.n_attributes},
          {"latent_dim", s.latent_dim},
          {"noise_std", s.noise_std},
          {"seed", s.seed},
          {"visual_dim", s.visual_dim},
          {"visual_coverage", s.visual_coverage},
          {"coldstart_user_fraction", s.coldstart_user_fraction},
          {"new_item_fraction", s.new_item_fraction},
          {"cross_domain_rate", s.cross_domain_rate},
          {"personal_affinity", s.personal_affinity},
          {"exposure_bias", s.exposure_bias}}},
        {"encoder",
         {{"text_dim", p.encoder.text_dim},
          {"visual_dim", p.encoder.visual_dim},
          {"ngram_orders", p.encoder.ngram_orders},
          {"hash_seed", p.encoder.hash_seed}}},
        {"model", {{"latent", p.latent}, {"max_history", p.max_history}}},
        {"split",
         {{"train", p.ratios.train},
          {"valid", p.ratios.valid},
          {"test", p.ratios.test},
          {"coldstart_threshold", p.coldstart_threshold}}},
        {"loss_weights", {{"alpha", p.loss.alpha}, {"beta", p.loss.beta}, {"gamma", p.loss.gamma}}},
        {"task_weights",
         {{"lambdas", lambdas},
          {"eta", p.tasks.eta},
          {"floor", p.tasks.floor},
          {"renorm_target", p.tasks.renorm_target ? json(*p.tasks.renorm_target) : json()}}},
        {"optimizer",
         {{"learning_rate", p.optimizer.learning_rate},
          {"momentum", p.optimizer.momentum},
          {"grad_clip", p.optimizer.grad_clip},
          {"weight_decay", p.optimizer.weight_decay}}},
        {"train",
         {{"batch_size", p.train.batch_size},
          {"patience", p.train.patience},
          {"adaptive_task_weights", p.train.adaptive_task_weights},
          {"record_wall_clock", p.train.record_wall_clock}}},
        {"meta",
         {{"inner_lr", p.meta.inner_lr},
          {"inner_steps", p.meta.inner_steps},
          {"blocks", blocks},
          {"entity_row", p.meta.entity_row}}},
        {"mix", {{"demo", p.mix.demo}, {"cross", p.mix.cross}, {"temporal", p.mix.temporal}}},
        {"cross_mix", {{"demo", p.cross_mix.demo}, {"cross", p.cross_mix.cross}, {"temporal", p.cross_mix.temporal}}},
        {"kb", {{"smoothing", p.kb_smoothing}}},
        {"eval", {{"ks", p.eval.ks}, {"n_negatives", p.eval.n_negatives}}},
    };
}

// Overlays the fields present in `src` onto `dst`, refusing unknown keys.
void overlay(json& dst, const json& src, const std::string& where) {
    if (!src.is_object()) {
        throw InputError("config: " + where + " must be an object");
    }
    for (const auto& [key, value] : src.items()) {
        const std::string here = where.empty() ? key : where + "." + key;
        if (!dst.contains(key)) {
            throw InputError("config: unknown key '" + here + "'");
        }
        auto& slot = dst[key];
        // Objects merge key by key, except the open-ended lambda map.
        if (slot.is_object() && here != "task_weights.lambdas") {
            overlay(slot, value, here);
        } else {
            slot = value;
        }
    }
}

std::optional<std::filesystem::path> read_path(const json& v) {
    if (v.is_null()) {
        return std::nullopt;
    }
    return std::filesystem::path(v.get<std::string>());
}

RunConfig from_doc(const json& d) {
    RunConfig c;
    auto& p = c.pipeline;
    p.seed = d.at("seed").get<std::uint64_t>();
    p.train.epochs = d.at("epochs").get<std::size_t>();

    const auto& paths = d.at("paths");
    c.paths.ratings = read_path(paths.at("ratings"));
    c.paths.items = read_path(paths.at("items"));
    c.paths.users = read_path(paths.at("users"));
    c.paths.kb = read_path(paths.at("kb"));
    c.paths.checkpoint = read_path(paths.at("checkpoint"));
    c.paths.output_dir = paths.at("output_dir").get<std::string>();

    const auto& s = d.at("synthetic");
    auto& syn = c.synthetic;
    syn.n_users = s.at("n_users").get<std::size_t>();
    syn.n_items = s.at("n_items").get<std::size_t>();
    syn.n_interactions = s.at("n_interactions").get<std::size_t>();
    syn.n_groups = s.at("n_groups").get<std::size_t>();
    syn.n_attributes = s.at("n_attributes").get<std::size_t>();
    syn.latent_dim = s.at("latent_dim").get<std::size_t>();
    syn.noise_std = s.at("noise_std").get<double>();
    syn.seed = s.at("seed").get<std::uint64_t>();
    syn.visual_dim = s.at("visual_dim").get<std::size_t>();
    syn.visual_coverage = s.at("visual_coverage").get<double>();
    syn.coldstart_user_fraction = s.at("coldstart_user_fraction").get<double>();
    syn.new_item_fraction = s.at("new_item_fraction").get<double>();
    syn.cross_domain_rate = s.at("cross_domain_rate").get<double>();
    syn.personal_affinity = s.at("personal_affinity").get<double>();
    syn.exposure_bias = s.at("exposure_bias").get<double>();

    const auto& e = d.at("encoder");
    p.encoder.text_dim = e.at("text_dim").get<std::size_t>();
    p.encoder.visual_dim = e.at("visual_dim").get<std::size_t>();
    p.encoder.ngram_orders = e.at("ngram_orders").get<std::set<std::size_t>>();
    p.encoder.hash_seed = e.at("hash_seed").get<std::uint64_t>();

    p.latent = d.at("model").at("latent").get<std::size_t>();
    p.max_history = d.at("model").at("max_history").get<std::size_t>();

    const auto& sp = d.at("split");
    p.ratios = {sp.at("train").get<double>(), sp.at("valid").get<double>(), sp.at("test").get<double>()};
    p.coldstart_threshold = sp.at("coldstart_threshold").get<std::size_t>();

    const auto& lw = d.at("loss_weights");
    p.loss = {lw.at("alpha").get<double>(), lw.at("beta").get<double>(), lw.at("gamma").get<double>()};

    const auto& tw = d.at("task_weights");
    for (const auto& [name, value] : tw.at("lambdas").items()) {
        bool found = false;
        for (const Task t : kAllTasks) {
            if (task_name(t) == name) {
                p.tasks[t] = value.get<double>();
                found = true;
            }
        }
        if (!found) {
            throw InputError("config: unknown task '" + name + "'");
        }
    }
    p.tasks.eta = tw.at("eta").get<double>();
    p.tasks.floor = tw.at("floor").get<double>();
    p.tasks.renorm_target =
        tw.at("renorm_target").is_null() ? std::nullopt : std::optional<double>(tw.at("renorm_target").get<double>());

    const auto& o = d.at("optimizer");
    p.optimizer.learning_rate = o.at("learning_rate").get<double>();
    p.optimizer.momentum = o.at("momentum").get<double>();
    p.optimizer.grad_clip = o.at("grad_clip").get<double>();
    p.optimizer.weight_decay = o.at("weight_decay").get<double>();

    const auto& t = d.at("train");
    p.train.batch_size = t.at("batch_size").get<std::size_t>();
    p.train.patience = t.at("patience").get<std::size_t>();
    p.train.adaptive_task_weights = t.at("adaptive_task_weights").get<bool>();
    p.train.record_wall_clock = t.at("record_wall_clock").get<bool>();

    const auto& m = d.at("meta");
    p.meta.inner_lr = m.at("inner_lr").get<double>();
    p.meta.inner_steps = m.at("inner_steps").get<std::size_t>();
    p.meta.blocks.clear();
    for (const auto& b : m.at("blocks")) {
        p.meta.blocks.insert(block_from_name(b.get<std::string>()));
    }
    p.meta.entity_row = m.at("entity_row").get<bool>();

    auto mix = [](const json& j) {
        return ZeroShotMix{j.at("demo").get<double>(), j.at("cross").get<double>(), j.at("temporal").get<double>()};
    };
    p.mix = mix(d.at("mix"));
    p.cross_mix = mix(d.at("cross_mix"));
    p.kb_smoothing = d.at("kb").at("smoothing").get<double>();
    p.eval.ks = d.at("eval").at("ks").get<std::vector<std::size_t>>();
    p.eval.n_negatives = d.at("eval").at("n_negatives").get<std::size_t>();
    return c;
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw InputError(std::string("config: malformed JSON (") + e.what() + ")");
    }
    json merged = to_doc(RunConfig{});
    overlay(merged, doc, "");
    try {
        return from_doc(merged);
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    try {
        return parse_run_config(read_text_file(path));
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

std::string run_config_json(const RunConfig& config) { return to_doc(config).dump(2) + "\n"; }

} // namespace attrirec
