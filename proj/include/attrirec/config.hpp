#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "attrirec/pipeline.hpp"
#include "attrirec/synthetic.hpp"

namespace attrirec {

// Unset paths resolve inside output_dir.
struct RunPaths {
    std::optional<std::filesystem::path> ratings;
    std::optional<std::filesystem::path> items;
    std::optional<std::filesystem::path> users;
    std::optional<std::filesystem::path> kb;
    std::optional<std::filesystem::path> checkpoint;
    std::filesystem::path output_dir = "out";

    std::filesystem::path ratings_path() const { return ratings.value_or(output_dir / "ratings.csv"); }
    std::filesystem::path items_path() const { return items.value_or(output_dir / "items.jsonl"); }
    std::filesystem::path users_path() const { return users.value_or(output_dir / "users.jsonl"); }
    std::filesystem::path kb_path() const { return kb.value_or(output_dir / "kb.json"); }
    std::filesystem::path checkpoint_path() const { return checkpoint.value_or(output_dir / "checkpoint.json"); }
};

struct RunConfig {
    RunPaths paths;
    SyntheticConfig synthetic;
    PipelineConfig pipeline; // pipeline.seed and pipeline.train.epochs are the run seed and epochs

    void validate() const;
};

// Defaults overlaid with the keys present in the document. Unknown keys and
// ill-typed values throw InputError.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Full document, every field spelled out; parse_run_config inverts it.
std::string run_config_json(const RunConfig& config);

} // namespace attrirec
