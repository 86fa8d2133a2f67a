// grasp-rec: stage-by-stage driver for the graph-aware prompt recommender.

#include "grasp/checkpoint.hpp"
#include "grasp/config.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace grasp {
namespace {

struct Invocation {
    std::string command;
    fs::path config_path;
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> mode;
    std::string user;
    std::size_t k = 10;
};

void log(const std::string& stage, const std::string& message) {
    std::cerr << "[" << stage << "] " << message << '\n';
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out || !(out << text)) {
        throw IoError("cannot write " + path.string());
    }
}

// Hash of a stage chained onto the hash of the artifact it consumes.
std::uint64_t chain(const std::string& upstream, std::uint64_t stage_hash) {
    return fnv1a64(upstream, stage_hash);
}

class Runner {
public:
    Runner(RunConfig config, bool force) : config_(std::move(config)), force_(force) {
        fs::create_directories(config_.workdir);
    }

    int ingest();
    int synth();
    int graph();
    int pretrain();
    int finetune();
    int evaluate();
    int recommend(const std::string& user, std::size_t k);
    int ablate(bool all_modes);

private:
    fs::path path(const std::string& name) const { return config_.workdir / name; }
    std::string run_tag() const { return to_string(config_.mode) + "-s" + std::to_string(config_.seed); }

    void require(const fs::path& artifact, const std::string& producer) const {
        if (!fs::exists(artifact)) {
            throw ConfigError("missing artifact " + artifact.string() + " (run '" + producer + "' first)");
        }
    }

    bool up_to_date(const std::string& stage, const std::string& stored, const std::string& wanted) const {
        if (!force_ && stored == wanted) {
            log(stage, "up to date (config hash " + wanted + "), nothing to do; use --force to rerun");
            return true;
        }
        return false;
    }

    std::string dataset_hash_for(const std::string& source) const {
        return hex64(fnv1a64(source, config_.stage_hash(Stage::Ingest)));
    }

    int write_dataset(Dataset dataset, const std::string& source);

    // Loads the dataset and checks it was produced by the current configuration.
    const Dataset& dataset();
    std::string graph_hash();
    std::string pretrain_hash() { return hex64(chain(graph_hash(), config_.stage_hash(Stage::Pretrain))); }
    std::string finetune_hash() { return hex64(chain(pretrain_hash(), config_.stage_hash(Stage::Finetune))); }
    std::string evaluate_hash() { return hex64(chain(finetune_hash(), config_.stage_hash(Stage::Evaluate))); }

    const StructuralBias& structure();
    const Vocabulary& vocab();
    AttentionBias bias() { return attention_bias_for(structure(), config_.mode, config_.model.bias_scale); }
    Model final_model();

    RunConfig config_;
    bool force_;
    std::optional<Dataset> dataset_;
    std::string dataset_hash_;
    std::optional<BipartiteGraph> graph_;
    std::optional<StructuralBias> structure_;
    std::optional<Vocabulary> vocab_;
};

int Runner::write_dataset(Dataset dataset, const std::string& source) {
    if (config_.cold_start_fraction > 0.0) {
        dataset = reduce_history(dataset, config_.cold_start_fraction, config_.split_seed);
    }
    validate(dataset);
    save_dataset(dataset, path("dataset.json"), dataset_hash_for(source));
    std::size_t n_train = 0;
    for (const auto& t : dataset.train) {
        n_train += t.size();
    }
    log(source, std::to_string(dataset.n_users()) + " users, " + std::to_string(dataset.n_items()) + " items, " +
                    std::to_string(n_train) + " train interactions -> " + path("dataset.json").string());
    return 0;
}

int Runner::ingest() {
    if (config_.reviews_path.empty()) {
        throw ConfigError("reviews_path is not set (use 'synth' for the synthetic dataset)");
    }
    const std::string wanted = dataset_hash_for("ingest");
    std::string stored;
    if (fs::exists(path("dataset.json"))) {
        load_dataset(path("dataset.json"), &stored);
    }
    if (up_to_date("ingest", stored, wanted)) {
        return 0;
    }
    const auto reviews = load_reviews(config_.reviews_path);
    log("ingest", std::to_string(reviews.records.size()) + " review records, " + std::to_string(reviews.skipped) +
                      " malformed lines skipped");
    std::vector<ItemMeta> metas;
    if (!config_.metadata_path.empty()) {
        auto meta = load_metadata(config_.metadata_path);
        log("ingest", std::to_string(meta.records.size()) + " metadata records, " + std::to_string(meta.skipped) +
                          " malformed, " + std::to_string(meta.duplicates) + " duplicates");
        metas = std::move(meta.records);
    }
    return write_dataset(binarize_and_split(reviews.records, metas, config_.split_seed), "ingest");
}

int Runner::synth() {
    const std::string wanted = dataset_hash_for("synth");
    std::string stored;
    if (fs::exists(path("dataset.json"))) {
        load_dataset(path("dataset.json"), &stored);
    }
    if (up_to_date("synth", stored, wanted)) {
        return 0;
    }
    return write_dataset(generate_synthetic(config_.synth).dataset, "synth");
}

const Dataset& Runner::dataset() {
    if (!dataset_) {
        require(path("dataset.json"), "ingest' or 'synth");
        dataset_ = load_dataset(path("dataset.json"), &dataset_hash_);
        if (dataset_hash_ != dataset_hash_for("ingest") && dataset_hash_ != dataset_hash_for("synth")) {
            throw ConfigError("artifact " + path("dataset.json").string() +
                              " was produced by a different configuration (rerun 'ingest' or 'synth')");
        }
    }
    return *dataset_;
}

std::string Runner::graph_hash() {
    dataset();
    return hex64(chain(dataset_hash_, config_.stage_hash(Stage::Graph)));
}

const StructuralBias& Runner::structure() {
    if (!structure_) {
        graph_ = build_graph(dataset(), GraphOptions{config_.brand_edges});
        structure_ = build_structural_bias(all_pairs_shortest_paths(*graph_), config_.delta, config_.bias_variant);
    }
    return *structure_;
}

const Vocabulary& Runner::vocab() {
    if (!vocab_) {
        structure();
        vocab_ = pipeline_vocab(dataset(), *graph_, config_.pipeline_options());
    }
    return *vocab_;
}

int Runner::graph() {
    dataset();
    const auto wanted = chain(dataset_hash_, config_.stage_hash(Stage::Graph));
    const fs::path out = path("bias.bin");
    if (fs::exists(out) && up_to_date("graph", hex64(load_bias_dump(out).config_hash), hex64(wanted))) {
        return 0;
    }
    graph_ = build_graph(dataset(), GraphOptions{config_.brand_edges});
    const auto paths = all_pairs_shortest_paths(*graph_);
    structure_ = build_structural_bias(paths, config_.delta, config_.bias_variant);
    save_bias_dump(paths, *structure_, out, wanted);
    log("graph", std::to_string(graph_->n_edges()) + " edges, max finite path " + std::to_string(paths.max_finite) +
                     ", variant " + to_string(config_.bias_variant) + " -> " + out.string());
    return 0;
}

int Runner::pretrain() {
    require(path("bias.bin"), "graph");
    const std::string wanted = pretrain_hash();
    const fs::path ckpt_path = path("pretrain-" + run_tag() + ".ckpt");
    if (config_.mode == AblationMode::NoPretrain) {
        log("pretrain", "mode no-pretrain: nothing to do");
        return 0;
    }
    if (fs::exists(ckpt_path) && up_to_date("pretrain", load_checkpoint(ckpt_path).config_hash, wanted)) {
        return 0;
    }
    const auto options = config_.pipeline_options();
    structure();
    const PromptCorpus corpus = pretraining_corpus(dataset(), *graph_, options, config_.mode);
    save_corpus(corpus, path("corpus-" + to_string(config_.mode) + ".tsv"), wanted);
    save_vocab(vocab(), path("vocab.json"), wanted);

    ModelConfig mc = config_.model;
    mc.vocab_size = static_cast<int>(vocab().size());
    Model model = Model::initialized(mc, derive_seed(config_.seed, "init"));
    TrainSpec spec = config_.pretrain;
    spec.seed = derive_seed(config_.seed, "pretrain");
    log("pretrain", std::to_string(corpus.size()) + " prompts, vocabulary " + std::to_string(vocab().size()) +
                        ", " + std::to_string(model.params.parameter_count()) + " parameters");
    const auto curve = grasp::pretrain(model, vocab(), corpus, bias(), spec, [](const Model&, const LossPoint& p) {
        log("pretrain", "epoch " + std::to_string(p.epoch) + " " + p.phase + " loss " + std::to_string(p.loss));
    });
    save_loss_curve(curve, path("pretrain-" + run_tag() + "-loss.csv"), wanted);
    save_checkpoint({mc, model.params, model.optimizer, wanted}, ckpt_path);
    log("pretrain", "checkpoint -> " + ckpt_path.string());
    return 0;
}

int Runner::finetune() {
    const std::string wanted = finetune_hash();
    const fs::path ckpt_path = path("finetune-" + run_tag() + ".ckpt");
    if (config_.mode == AblationMode::NoFinetune) {
        log("finetune", "mode no-finetune: nothing to do");
        return 0;
    }
    Model model;
    if (config_.mode == AblationMode::NoPretrain) {
        require(path("bias.bin"), "graph");
        ModelConfig mc = config_.model;
        mc.vocab_size = static_cast<int>(vocab().size());
        model = Model::initialized(mc, derive_seed(config_.seed, "init"));
    } else {
        const fs::path pre = path("pretrain-" + run_tag() + ".ckpt");
        require(pre, "pretrain");
        auto ckpt = load_checkpoint(pre, static_cast<int>(vocab().size()));
        if (ckpt.config_hash != pretrain_hash()) {
            throw ConfigError("artifact " + pre.string() + " is stale for this configuration (rerun 'pretrain')");
        }
        model = Model{ckpt.config, std::move(ckpt.params), std::move(ckpt.optimizer)};
    }
    if (fs::exists(ckpt_path) && up_to_date("finetune", load_checkpoint(ckpt_path).config_hash, wanted)) {
        return 0;
    }
    TrainSpec spec = config_.finetune;
    spec.seed = derive_seed(config_.seed, "finetune");
    const auto curve = grasp::finetune(model, vocab(), dataset(), bias(), spec, config_.finetune_options,
                                       [](const Model&, const LossPoint& p) {
                                           log("finetune", "epoch " + std::to_string(p.epoch) + " loss " +
                                                               std::to_string(p.loss));
                                       });
    save_loss_curve(curve, path("finetune-" + run_tag() + "-loss.csv"), wanted);
    save_checkpoint({model.config, model.params, model.optimizer, wanted}, ckpt_path);
    log("finetune", "checkpoint -> " + ckpt_path.string());
    return 0;
}

Model Runner::final_model() {
    const bool from_pretrain = config_.mode == AblationMode::NoFinetune;
    const fs::path p = path((from_pretrain ? "pretrain-" : "finetune-") + run_tag() + ".ckpt");
    require(p, from_pretrain ? "pretrain" : "finetune");
    auto ckpt = load_checkpoint(p, static_cast<int>(vocab().size()));
    if (ckpt.config_hash != (from_pretrain ? pretrain_hash() : finetune_hash())) {
        throw ConfigError("artifact " + p.string() + " is stale for this configuration (rerun '" +
                          (from_pretrain ? "pretrain" : "finetune") + "')");
    }
    return Model{ckpt.config, std::move(ckpt.params), std::move(ckpt.optimizer)};
}

int Runner::evaluate() {
    const std::string wanted = evaluate_hash();
    const fs::path val_path = path("metrics-" + run_tag() + "-val.json");
    const fs::path test_path = path("metrics-" + run_tag() + "-test.json");
    if (fs::exists(test_path) && fs::exists(val_path) &&
        up_to_date("evaluate", metrics_from_json(read_text(test_path)).config_hash, wanted)) {
        return 0;
    }
    const Model model = final_model();
    const bool use_bias =
        config_.mode == AblationMode::NoFinetune ? config_.pretrain.use_bias : config_.finetune.use_bias;
    const AttentionBias eval_bias = use_bias ? bias() : AttentionBias{};
    const std::size_t max_history = config_.finetune_options.max_history;
    for (auto [split, out] : {std::pair{Split::Val, val_path}, std::pair{Split::Test, test_path}}) {
        MetricsReport report = evaluate_split(model, vocab(), dataset(), eval_bias, split, config_.ks, max_history);
        report.mode = to_string(config_.mode);
        report.seed = config_.seed;
        report.config_hash = wanted;
        write_text(out, to_json(report));
        char line[160];
        std::snprintf(line, sizeof line, "%s: Recall@20 %.4f  Recall@40 %.4f  NDCG@100 %.4f  (%zu users)",
                      report.split.c_str(), report.recall_at_20, report.recall_at_40, report.ndcg_at_100,
                      report.per_user.size());
        std::cout << line << '\n';
    }
    log("evaluate", "reports -> " + val_path.string() + ", " + test_path.string());
    return 0;
}

std::int32_t resolve_user(const Dataset& ds, const std::string& spec) {
    if (spec.empty()) {
        throw ConfigError("recommend needs --user");
    }
    if (auto idx = ds.users.find(spec)) {
        return static_cast<std::int32_t>(*idx);
    }
    std::string digits = spec;
    if (digits.rfind("user_", 0) == 0) {
        digits = digits.substr(5);
    }
    try {
        std::size_t used = 0;
        const long v = std::stol(digits, &used);
        if (used == digits.size() && v >= 0 && static_cast<std::size_t>(v) < ds.n_users()) {
            return static_cast<std::int32_t>(v);
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("unknown user '" + spec + "'");
}

int Runner::recommend(const std::string& user_spec, std::size_t k) {
    const Model model = final_model();
    const Dataset& ds = dataset();
    const std::int32_t user = resolve_user(ds, user_spec);
    const bool use_bias =
        config_.mode == AblationMode::NoFinetune ? config_.pretrain.use_bias : config_.finetune.use_bias;
    const auto list = grasp::recommend(model, vocab(), ds, use_bias ? bias() : AttentionBias{}, user, k,
                                       config_.finetune_options.max_history);
    const auto& history = ds.train[static_cast<std::size_t>(user)];
    structure();
    const auto paths = all_pairs_shortest_paths(*graph_);
    const auto u_node = graph_->user_node(static_cast<std::size_t>(user));

    std::cout << "rank item score annotations\n";
    for (std::size_t r = 0; r < std::min(k, list.items.size()); ++r) {
        const auto item = list.items[r];
        const auto i_node = graph_->item_node(static_cast<std::size_t>(item));
        std::vector<std::string> notes;
        const auto hops = paths.hops(u_node, i_node);
        notes.push_back("path=" + (hops == ShortestPathMatrix::kUnreachable ? std::string("none") : std::to_string(hops)));
        std::string linked;
        std::string brand;
        const auto meta = ds.meta.find(item);
        for (auto h : history) {
            const auto h_node = graph_->item_node(static_cast<std::size_t>(h));
            if (graph_->has_edge(h_node, i_node) || paths.hops(h_node, i_node) == 2) {
                linked += (linked.empty() ? "" : ",") + item_token(static_cast<std::size_t>(h));
            }
            const auto hm = ds.meta.find(h);
            if (meta != ds.meta.end() && hm != ds.meta.end() && meta->second.brand &&
                meta->second.brand == hm->second.brand) {
                brand += (brand.empty() ? "" : ",") + item_token(static_cast<std::size_t>(h));
            }
        }
        if (!linked.empty()) {
            notes.push_back("co-interacted=" + linked);
        }
        if (!brand.empty()) {
            notes.push_back("same-brand(" + *meta->second.brand + ")=" + brand);
        }
        std::string joined;
        for (const auto& n : notes) {
            joined += (joined.empty() ? "" : ";") + n;
        }
        char score[32];
        std::snprintf(score, sizeof score, "%.4f", list.scores[r]);
        std::cout << r + 1 << ' ' << item_token(static_cast<std::size_t>(item)) << ' ' << score << ' ' << joined
                  << '\n';
    }
    return 0;
}

int Runner::ablate(bool all_modes) {
    dataset();
    const std::vector<AblationMode> modes =
        all_modes ? all_ablation_modes() : std::vector<AblationMode>{config_.mode};
    const AblationMode chosen = config_.mode;
    std::vector<std::pair<AblationMode, std::vector<MetricsReport>>> results;
    for (auto mode : modes) {
        config_.mode = mode;
        const std::string wanted = evaluate_hash();
        const fs::path out = path("ablation-" + to_string(mode) + ".json");
        std::vector<MetricsReport> reports;
        std::string stored;
        if (fs::exists(out)) {
            const json doc = json::parse(read_text(out));
            stored = doc.value("config_hash", "");
            if (!force_ && stored == wanted) {
                for (const auto& r : doc.at("reports")) {
                    reports.push_back(metrics_from_json(r.dump()));
                }
            }
        }
        if (reports.empty()) {
            log("ablate", "mode " + to_string(mode) + ", " + std::to_string(config_.n_seeds) + " seed(s)");
            reports = run_ablation(dataset(), mode, config_.pipeline_options(), config_.n_seeds, config_.seed, wanted);
            json doc = {{"config_hash", wanted}, {"mode", to_string(mode)}, {"reports", json::array()}};
            for (const auto& r : reports) {
                doc["reports"].push_back(json::parse(to_json(r)));
            }
            write_text(out, doc.dump(1));
        } else {
            log("ablate", "mode " + to_string(mode) + " up to date");
        }
        results.emplace_back(mode, std::move(reports));
    }
    config_.mode = chosen;

    std::ostringstream table;
    table << "mode\tseeds\trecall@20\trecall@40\tndcg@100\n";
    for (const auto& [mode, reports] : results) {
        double r20 = 0, r40 = 0, n100 = 0;
        for (const auto& r : reports) {
            r20 += r.recall_at_20;
            r40 += r.recall_at_40;
            n100 += r.ndcg_at_100;
        }
        const double n = static_cast<double>(reports.size());
        char row[160];
        std::snprintf(row, sizeof row, "%s\t%zu\t%.4f\t%.4f\t%.4f\n", to_string(mode).c_str(), reports.size(),
                      r20 / n, r40 / n, n100 / n);
        table << row;
    }
    std::cout << table.str();
    write_text(path("ablation-summary.tsv"), table.str());
    return 0;
}

int dispatch(const Invocation& inv) {
    RunConfig config = load_config(inv.config_path);
    if (inv.seed) {
        config.seed = *inv.seed;
    }
    if (inv.mode) {
        config.mode = parse_ablation_mode(*inv.mode);
    }
    Runner runner(std::move(config), inv.force);
    const std::string& c = inv.command;
    if (c == "ingest") return runner.ingest();
    if (c == "synth") return runner.synth();
    if (c == "graph") return runner.graph();
    if (c == "pretrain") return runner.pretrain();
    if (c == "finetune") return runner.finetune();
    if (c == "evaluate") return runner.evaluate();
    if (c == "recommend") return runner.recommend(inv.user, inv.k);
    if (c == "ablate") return runner.ablate(!inv.mode.has_value());
    throw ConfigError("unknown command '" + c + "'");
}

}  // namespace
}  // namespace grasp

int main(int argc, char** argv) {
    CLI::App app{"Graph-aware prompt-based sequential recommender"};
    grasp::Invocation inv;
    const std::set<std::string> commands{"ingest", "graph", "pretrain", "finetune", "evaluate", "recommend", "ablate", "synth"};
    app.add_option("command", inv.command, "ingest | synth | graph | pretrain | finetune | evaluate | recommend | ablate")
        ->required()
        ->check(CLI::IsMember(commands));
    app.add_option("--config", inv.config_path, "run configuration file")->required();
    app.add_flag("--force", inv.force, "rerun the stage even if its artifacts are up to date");
    app.add_option("--seed", inv.seed, "override the configured seed");
    app.add_option("--mode", inv.mode, "ablation mode (ablate runs every mode when omitted)");
    app.add_option("--user", inv.user, "user for recommend: index, user_<n> or raw id");
    app.add_option("--k", inv.k, "list length for recommend")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        return grasp::dispatch(inv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
