#include "grasp/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace grasp {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected, const std::string& value) {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) {
        bad_value(key, std::is_signed_v<T> ? "an integer" : "a non-negative integer", value);
    }
    return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
    if constexpr (std::is_same_v<T, bool>) {
        if (value == "true" || value == "1" || value == "yes") {
            return true;
        }
        if (value == "false" || value == "0" || value == "no") {
            return false;
        }
        bad_value(key, "a boolean", value);
    } else if constexpr (std::is_integral_v<T>) {
        return parse_integer<T>(key, value);
    } else if constexpr (std::is_same_v<T, double>) {
        char* end = nullptr;
        const double v = std::strtod(value.c_str(), &end);
        if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
            bad_value(key, "a finite number", value);
        }
        return v;
    } else if constexpr (std::is_same_v<T, std::string> || std::is_same_v<T, std::filesystem::path>) {
        return T(value);
    } else if constexpr (std::is_same_v<T, PathVariant>) {
        try {
            return parse_path_variant(value);
        } catch (const Error&) {
            bad_value(key, "as-written or proximity", value);
        }
    } else if constexpr (std::is_same_v<T, AblationMode>) {
        try {
            return parse_ablation_mode(value);
        } catch (const Error&) {
            bad_value(key, "an ablation mode", value);
        }
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
        std::vector<int> out;
        std::stringstream ss(value);
        std::string part;
        while (std::getline(ss, part, ',')) {
            out.push_back(parse_integer<int>(key, trim(part)));
        }
        if (out.empty()) {
            bad_value(key, "a comma-separated list of integers", value);
        }
        return out;
    }
}

template <typename T>
std::string format_value(const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
        return v ? "true" : "false";
    } else if constexpr (std::is_integral_v<T>) {
        return std::to_string(v);
    } else if constexpr (std::is_same_v<T, double>) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
        return v.generic_string();
    } else if constexpr (std::is_same_v<T, PathVariant> || std::is_same_v<T, AblationMode>) {
        return to_string(v);
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            s += (i ? "," : "") + std::to_string(v[i]);
        }
        return s;
    }
}

constexpr int kUnhashed = -1;

struct Key {
    std::string name;
    int stage;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename Access>
Key key(std::string name, int stage, Access access) {
    using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
    Key k;
    k.name = name;
    k.stage = stage;
    k.get = [access](const RunConfig& c) { return format_value(access(const_cast<RunConfig&>(c))); };
    k.set = [access, name](RunConfig& c, const std::string& v) { access(c) = parse_value<T>(name, v); };
    return k;
}

#define GRASP_KEY(name, stage, member) key(name, static_cast<int>(stage), [](RunConfig& c) -> auto& { return c.member; })

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        GRASP_KEY("reviews_path", Stage::Ingest, reviews_path),
        GRASP_KEY("metadata_path", Stage::Ingest, metadata_path),
        key("workdir", kUnhashed, [](RunConfig& c) -> auto& { return c.workdir; }),
        GRASP_KEY("synth_users", Stage::Ingest, synth.n_users),
        GRASP_KEY("synth_items", Stage::Ingest, synth.n_items),
        GRASP_KEY("synth_communities", Stage::Ingest, synth.n_communities),
        GRASP_KEY("synth_intra_prob", Stage::Ingest, synth.intra_prob),
        GRASP_KEY("synth_inter_prob", Stage::Ingest, synth.inter_prob),
        GRASP_KEY("synth_seed", Stage::Ingest, synth.seed),
        GRASP_KEY("split_seed", Stage::Ingest, split_seed),
        GRASP_KEY("cold_start_fraction", Stage::Ingest, cold_start_fraction),

        GRASP_KEY("delta", Stage::Graph, delta),
        GRASP_KEY("bias_variant", Stage::Graph, bias_variant),
        GRASP_KEY("brand_edges", Stage::Graph, brand_edges),

        GRASP_KEY("n_layers", Stage::Pretrain, model.n_layers),
        GRASP_KEY("n_heads", Stage::Pretrain, model.n_heads),
        GRASP_KEY("d_model", Stage::Pretrain, model.d_model),
        GRASP_KEY("context_length", Stage::Pretrain, model.context_length),
        GRASP_KEY("bias_scale", Stage::Pretrain, model.bias_scale),
        GRASP_KEY("prompt_item_content", Stage::Pretrain, prompts.item_content),
        GRASP_KEY("prompt_first_order", Stage::Pretrain, prompts.first_order),
        GRASP_KEY("prompt_second_order", Stage::Pretrain, prompts.second_order),
        GRASP_KEY("prompt_interaction_events", Stage::Pretrain, prompts.interaction_events),
        GRASP_KEY("max_group", Stage::Pretrain, prompts.max_group),
        GRASP_KEY("events_repeat", Stage::Pretrain, events_repeat),
        GRASP_KEY("max_vocab", Stage::Pretrain, vocab.max_vocab),
        GRASP_KEY("min_freq", Stage::Pretrain, vocab.min_freq),
        GRASP_KEY("max_history", Stage::Pretrain, finetune_options.max_history),
        GRASP_KEY("pretrain_epochs", Stage::Pretrain, pretrain.epochs),
        GRASP_KEY("pretrain_event_epochs", Stage::Pretrain, pretrain.event_epochs),
        GRASP_KEY("pretrain_batch_size", Stage::Pretrain, pretrain.batch_size),
        GRASP_KEY("pretrain_learning_rate", Stage::Pretrain, pretrain.learning_rate),
        GRASP_KEY("pretrain_use_bias", Stage::Pretrain, pretrain.use_bias),
        GRASP_KEY("mode", Stage::Pretrain, mode),
        GRASP_KEY("seed", Stage::Pretrain, seed),

        GRASP_KEY("finetune_epochs", Stage::Finetune, finetune.epochs),
        GRASP_KEY("finetune_batch_size", Stage::Finetune, finetune.batch_size),
        GRASP_KEY("finetune_learning_rate", Stage::Finetune, finetune.learning_rate),
        GRASP_KEY("finetune_use_bias", Stage::Finetune, finetune.use_bias),
        GRASP_KEY("target_fraction", Stage::Finetune, finetune_options.target_fraction),
        GRASP_KEY("resample_targets", Stage::Finetune, finetune_options.resample_each_epoch),

        GRASP_KEY("ks", Stage::Evaluate, ks),
        GRASP_KEY("n_seeds", Stage::Evaluate, n_seeds),
    };
    return table;
}

#undef GRASP_KEY

const Key* find_key(const std::string& name) {
    for (const auto& k : keys()) {
        if (k.name == name) {
            return &k;
        }
    }
    return nullptr;
}

std::string canonical_upto(const RunConfig& c, int stage) {
    std::map<std::string, std::string> sorted;
    for (const auto& k : keys()) {
        if (k.stage != kUnhashed && k.stage <= stage) {
            sorted[k.name] = k.get(c);
        }
    }
    std::string out;
    for (const auto& [name, value] : sorted) {
        out += name + " = " + value + "\n";
    }
    return out;
}

}  // namespace

std::string RunConfig::canonical() const {
    return canonical_upto(*this, static_cast<int>(Stage::Evaluate));
}

std::uint64_t RunConfig::stage_hash(Stage stage) const {
    return fnv1a64(canonical_upto(*this, static_cast<int>(stage)));
}

std::string RunConfig::hash() const {
    return hex64(stage_hash(Stage::Evaluate));
}

PipelineOptions RunConfig::pipeline_options() const {
    PipelineOptions o;
    o.model = model;
    o.delta = delta;
    o.variant = bias_variant;
    o.graph.brand_edges = brand_edges;
    o.prompts = prompts;
    o.events_repeat = events_repeat;
    o.vocab = vocab;
    o.pretrain = pretrain;
    o.finetune = finetune;
    o.finetune_options = finetune_options;
    o.ks = ks;
    return o;
}

void RunConfig::validate() const {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw ConfigError("config key 'delta': must lie strictly between 0 and 1");
    }
    if (!(cold_start_fraction >= 0.0 && cold_start_fraction < 1.0)) {
        throw ConfigError("config key 'cold_start_fraction': must lie in [0, 1)");
    }
    if (!(finetune_options.target_fraction > 0.0 && finetune_options.target_fraction < 1.0)) {
        throw ConfigError("config key 'target_fraction': must lie strictly between 0 and 1");
    }
    if (model.n_layers < 1 || model.n_heads < 1 || model.d_model < 1 || model.d_model % model.n_heads != 0) {
        throw ConfigError("model dimensions must be positive and d_model divisible by n_heads");
    }
    if (model.context_length < 8) {
        throw ConfigError("config key 'context_length': must be at least 8");
    }
    if (model.bias_scale < 0.0) {
        throw ConfigError("config key 'bias_scale': must be non-negative");
    }
    if (pretrain.epochs < 1 || finetune.epochs < 1 || pretrain.event_epochs < 0) {
        throw ConfigError("epoch counts must be positive");
    }
    if (pretrain.batch_size < 1 || finetune.batch_size < 1) {
        throw ConfigError("batch sizes must be positive");
    }
    if (!(pretrain.learning_rate > 0.0) || !(finetune.learning_rate > 0.0)) {
        throw ConfigError("learning rates must be positive");
    }
    if (finetune_options.max_history < 1) {
        throw ConfigError("config key 'max_history': must be at least 1");
    }
    for (int k : ks) {
        if (k < 1) {
            throw ConfigError("config key 'ks': cutoffs must be positive");
        }
    }
    if (n_seeds < 1) {
        throw ConfigError("config key 'n_seeds': must be at least 1");
    }
    if (synth.n_communities < 1 || synth.n_users < 1 || synth.n_items < 1) {
        throw ConfigError("synthetic dataset sizes must be positive");
    }
}

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string name = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        const Key* k = find_key(name);
        if (k == nullptr) {
            throw ConfigError("unknown config key '" + name + "' on line " + std::to_string(line_no));
        }
        if (!seen.insert(name).second) {
            throw ConfigError("config key '" + name + "' given twice");
        }
        k->set(config, value);
    }
    for (auto* p : {&config.reviews_path, &config.metadata_path, &config.workdir}) {
        if (!p->empty() && p->is_relative() && !base_dir.empty()) {
            *p = (base_dir / *p).lexically_normal();
        }
    }
    config.validate();
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::string default_config_text() {
    const RunConfig defaults;
    std::string out;
    for (const auto& k : keys()) {
        out += k.name + " = " + k.get(defaults) + "\n";
    }
    return out;
}

}  // namespace grasp
