#pragma once

#include "grasp/graph.hpp"
#include "grasp/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace grasp {

enum class PromptKind {
    ItemContent,
    FirstOrder,
    SecondOrder,
    InteractionEvent,
};

std::string to_string(PromptKind kind);
PromptKind parse_prompt_kind(const std::string& tag);

struct CrowdPrompt {
    PromptKind kind;
    std::string text;
};

struct PromptCorpus {
    std::vector<CrowdPrompt> prompts;

    std::size_t size() const { return prompts.size(); }
    std::size_t count(PromptKind kind) const;
    PromptCorpus only(PromptKind kind) const;
};

struct CrowdPromptOptions {
    bool item_content = true;
    bool first_order = true;
    bool second_order = true;
    bool interaction_events = true;
    std::size_t max_group = 20;  // second-order groups larger than this are chunked
};

std::string user_token(std::size_t user);
std::string item_token(std::size_t item);

/// Pre-training corpus. Reviews and interaction events use train-split pairs only.
PromptCorpus build_crowd_prompts(const Dataset& dataset, const BipartiteGraph& graph,
                                 const CrowdPromptOptions& options = {});

struct PredictivePrompt {
    std::int32_t user = 0;
    ItemList history;  // most recent last
    std::string text;
};

/// "user_U purchased item_A. ... user_U will purchase" over the most recent max_history items.
PredictivePrompt render_predictive_prompt(std::int32_t user, const ItemList& history, std::size_t max_history);

/// Predictive prompt over the user's train split.
PredictivePrompt build_predictive_prompt(const Dataset& dataset, std::int32_t user, std::size_t max_history);

/// Crowd prompts followed by events_repeat extra copies of every interaction-event prompt.
PromptCorpus assemble_corpus(const PromptCorpus& crowd, std::size_t events_repeat);

/// One prompt per line: kind tag, tab, text.
void save_corpus(const PromptCorpus& corpus, const std::filesystem::path& path, const std::string& config_hash = {});
PromptCorpus load_corpus(const std::filesystem::path& path);

}  // namespace grasp
