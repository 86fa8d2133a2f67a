#pragma once

#include "grasp/train.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace grasp {

/// Pipeline stages in dependency order. A stage's hash covers its own keys and
/// those of every earlier stage.
enum class Stage { Ingest = 0, Graph = 1, Pretrain = 2, Finetune = 3, Evaluate = 4 };

struct RunConfig {
    // paths, relative to the config file
    std::filesystem::path reviews_path;
    std::filesystem::path metadata_path;
    std::filesystem::path workdir = "work";

    // ingest
    SyntheticSpec synth;
    std::uint64_t split_seed = 7;
    double cold_start_fraction = 0.0;

    // graph
    double delta = 0.9;
    PathVariant bias_variant = PathVariant::AsWritten;
    bool brand_edges = false;

    // pretrain
    ModelConfig model;
    CrowdPromptOptions prompts;
    std::size_t events_repeat = 0;
    VocabOptions vocab;
    TrainSpec pretrain{Phase::Pretrain, 10, 100, 16, 1e-3, 1, true};
    AblationMode mode = AblationMode::Full;
    std::uint64_t seed = 1;

    // finetune
    FinetuneOptions finetune_options;
    TrainSpec finetune{Phase::Finetune, 50, 0, 16, 1e-3, 1, true};

    // evaluate / ablate
    std::vector<int> ks{1, 5, 20, 40, 100};
    int n_seeds = 5;

    /// "key = value" lines, sorted by key, every hashed key present (workdir is not).
    std::string canonical() const;
    std::uint64_t stage_hash(Stage stage) const;
    std::string hash() const;  // hex of the evaluate-stage hash

    PipelineOptions pipeline_options() const;
    void validate() const;
};

/// Flat "key = value" document; '#' starts a comment. Unknown keys, duplicate
/// keys and malformed values are ConfigErrors naming the key.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Documented keys with their default values, one per line.
std::string default_config_text();

}  // namespace grasp
