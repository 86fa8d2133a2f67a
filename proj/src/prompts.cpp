#include "grasp/prompts.hpp"

#include "grasp/common.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace grasp {

std::string to_string(PromptKind kind) {
    switch (kind) {
        case PromptKind::ItemContent: return "item-content";
        case PromptKind::FirstOrder: return "first-order";
        case PromptKind::SecondOrder: return "second-order";
        case PromptKind::InteractionEvent: return "interaction-event";
    }
    return "unknown";
}

PromptKind parse_prompt_kind(const std::string& tag) {
    for (auto kind : {PromptKind::ItemContent, PromptKind::FirstOrder, PromptKind::SecondOrder,
                      PromptKind::InteractionEvent}) {
        if (to_string(kind) == tag) {
            return kind;
        }
    }
    throw IoError("unknown prompt kind '" + tag + "'");
}

std::size_t PromptCorpus::count(PromptKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(prompts.begin(), prompts.end(), [&](const CrowdPrompt& p) { return p.kind == kind; }));
}

PromptCorpus PromptCorpus::only(PromptKind kind) const {
    PromptCorpus out;
    std::copy_if(prompts.begin(), prompts.end(), std::back_inserter(out.prompts),
                 [&](const CrowdPrompt& p) { return p.kind == kind; });
    return out;
}

std::string user_token(std::size_t user) { return "user_" + std::to_string(user); }
std::string item_token(std::size_t item) { return "item_" + std::to_string(item); }

namespace {

// Single-line text: the corpus dump is line- and tab-delimited.
std::string one_line(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        out.push_back((c == '\t' || c == '\n' || c == '\r') ? ' ' : c);
    }
    const auto first = out.find_first_not_of(' ');
    if (first == std::string::npos) {
        return {};
    }
    return out.substr(first, out.find_last_not_of(' ') - first + 1);
}

std::string item_content(std::int32_t item, const ItemMeta& meta) {
    const std::string tok = item_token(static_cast<std::size_t>(item));
    std::string text;
    auto clause = [&](const std::string& s) {
        if (!text.empty()) {
            text += ' ';
        }
        text += s;
    };
    if (auto title = one_line(meta.title); !title.empty()) {
        clause("the title of " + tok + " is " + title + ".");
    }
    if (meta.brand) {
        if (auto brand = one_line(*meta.brand); !brand.empty()) {
            clause("the brand of " + tok + " is " + brand + ".");
        }
    }
    std::string cats;
    for (const auto& c : meta.categories) {
        if (auto cat = one_line(c); !cat.empty()) {
            cats += (cats.empty() ? "" : ", ") + cat;
        }
    }
    if (!cats.empty()) {
        clause("the product categories of " + tok + " are " + cats + ".");
    }
    if (meta.description) {
        if (auto desc = one_line(*meta.description); !desc.empty()) {
            clause("the description of " + tok + " is " + desc + ".");
        }
    }
    return text;
}

void emit_groups(const std::map<std::string, std::vector<std::int32_t>>& groups, const std::string& relation,
                 std::size_t max_group, PromptCorpus& out) {
    for (const auto& [value, items] : groups) {
        if (items.size() < 2) {
            continue;
        }
        // Balanced chunks so no chunk degenerates to a single item.
        const std::size_t cap = std::max<std::size_t>(2, max_group);
        const std::size_t chunks = (items.size() + cap - 1) / cap;
        std::size_t start = 0;
        for (std::size_t c = 0; c < chunks; ++c) {
            const std::size_t len = items.size() / chunks + (c < items.size() % chunks ? 1 : 0);
            std::string text;
            for (std::size_t k = start; k < start + len; ++k) {
                text += (k == start ? "" : ", ") + item_token(static_cast<std::size_t>(items[k]));
            }
            text += " share the same " + relation + ": " + value;
            out.prompts.push_back({PromptKind::SecondOrder, std::move(text)});
            start += len;
        }
    }
}

}  // namespace

PromptCorpus build_crowd_prompts(const Dataset& dataset, const BipartiteGraph& graph,
                                 const CrowdPromptOptions& options) {
    PromptCorpus corpus;
    if (options.item_content) {
        for (const auto& [item, meta] : dataset.meta) {
            if (auto text = item_content(item, meta); !text.empty()) {
                corpus.prompts.push_back({PromptKind::ItemContent, std::move(text)});
            }
        }
    }
    if (options.first_order) {
        for (std::size_t u = 0; u < dataset.n_users(); ++u) {
            const auto user = static_cast<std::int32_t>(u);
            for (std::int32_t item : dataset.train[u]) {
                if (auto it = dataset.reviews.find({user, item}); it != dataset.reviews.end()) {
                    if (auto review = one_line(it->second); !review.empty()) {
                        corpus.prompts.push_back(
                            {PromptKind::FirstOrder, user_token(u) + " wrote the following review for " +
                                                         item_token(static_cast<std::size_t>(item)) + ": " + review});
                    }
                }
                if (auto it = dataset.reasons.find({user, item}); it != dataset.reasons.end()) {
                    if (auto reason = one_line(it->second); !reason.empty()) {
                        corpus.prompts.push_back(
                            {PromptKind::FirstOrder, user_token(u) + " explained the reason for buying " +
                                                         item_token(static_cast<std::size_t>(item)) + ": " + reason});
                    }
                }
            }
        }
    }
    if (options.second_order) {
        std::map<std::string, std::vector<std::int32_t>> brands;
        std::map<std::string, std::vector<std::int32_t>> categories;
        for (const auto& [item, meta] : dataset.meta) {
            if (meta.brand) {
                if (auto brand = one_line(*meta.brand); !brand.empty()) {
                    brands[brand].push_back(item);
                }
            }
            for (const auto& c : meta.categories) {
                if (auto cat = one_line(c); !cat.empty()) {
                    auto& members = categories[cat];
                    if (members.empty() || members.back() != item) {
                        members.push_back(item);
                    }
                }
            }
        }
        emit_groups(brands, "brand", options.max_group, corpus);
        emit_groups(categories, "category", options.max_group, corpus);
    }
    if (options.interaction_events) {
        for (std::size_t u = 0; u < graph.n_users; ++u) {
            std::string items;
            for (std::int32_t node : graph.adjacency[u]) {
                items += ' ' + item_token(static_cast<std::size_t>(node) - graph.n_users);
            }
            if (!items.empty()) {
                corpus.prompts.push_back(
                    {PromptKind::InteractionEvent, user_token(u) + " has interacted with" + items + "."});
            }
        }
    }
    return corpus;
}

PredictivePrompt render_predictive_prompt(std::int32_t user, const ItemList& history, std::size_t max_history) {
    if (history.empty()) {
        throw ConfigError("predictive prompt needs at least one history item for " +
                          user_token(static_cast<std::size_t>(user)));
    }
    PredictivePrompt prompt;
    prompt.user = user;
    const std::size_t keep = std::min(history.size(), std::max<std::size_t>(1, max_history));
    prompt.history.assign(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
    const std::string tok = user_token(static_cast<std::size_t>(user));
    for (std::int32_t item : prompt.history) {
        prompt.text += tok + " purchased " + item_token(static_cast<std::size_t>(item)) + ". ";
    }
    prompt.text += tok + " will purchase";
    return prompt;
}

PredictivePrompt build_predictive_prompt(const Dataset& dataset, std::int32_t user, std::size_t max_history) {
    return render_predictive_prompt(user, dataset.train.at(static_cast<std::size_t>(user)), max_history);
}

PromptCorpus assemble_corpus(const PromptCorpus& crowd, std::size_t events_repeat) {
    PromptCorpus out = crowd;
    const PromptCorpus events = crowd.only(PromptKind::InteractionEvent);
    for (std::size_t r = 0; r < events_repeat; ++r) {
        out.prompts.insert(out.prompts.end(), events.prompts.begin(), events.prompts.end());
    }
    return out;
}

void save_corpus(const PromptCorpus& corpus, const std::filesystem::path& path, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    if (!config_hash.empty()) {
        out << "# config_hash=" << config_hash << '\n';
    }
    for (const auto& p : corpus.prompts) {
        out << to_string(p.kind) << '\t' << p.text << '\n';
    }
}

PromptCorpus load_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    PromptCorpus corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw IoError(path.string() + ": corpus line without kind tag");
        }
        corpus.prompts.push_back({parse_prompt_kind(line.substr(0, tab)), line.substr(tab + 1)});
    }
    return corpus;
}

}  // namespace grasp
