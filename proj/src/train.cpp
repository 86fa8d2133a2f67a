#include "grasp/train.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace grasp {

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::Full: return "full";
        case AblationMode::NoPretrain: return "no-pretrain";
        case AblationMode::NoFinetune: return "no-finetune";
        case AblationMode::NoGkia: return "no-gkia";
        case AblationMode::NoGhip: return "no-ghip";
        case AblationMode::AllOnesInjection: return "all-ones-injection";
        case AblationMode::ConnOnly: return "conn-only";
        case AblationMode::PathOnly: return "path-only";
    }
    return "unknown";
}

const std::vector<AblationMode>& all_ablation_modes() {
    static const std::vector<AblationMode> modes = {
        AblationMode::Full,   AblationMode::NoPretrain,       AblationMode::NoFinetune, AblationMode::NoGkia,
        AblationMode::NoGhip, AblationMode::AllOnesInjection, AblationMode::ConnOnly,   AblationMode::PathOnly};
    return modes;
}

AblationMode parse_ablation_mode(const std::string& name) {
    for (auto mode : all_ablation_modes()) {
        if (to_string(mode) == name) {
            return mode;
        }
    }
    throw ConfigError("unknown ablation mode '" + name + "'");
}

std::string to_string(Split split) {
    switch (split) {
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Train: return "train";
    }
    return "unknown";
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) {
    // splitmix64 finalizer over the seed mixed with the purpose tag
    std::uint64_t z = seed ^ fnv1a64(purpose);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void save_loss_curve(const LossCurve& curve, const std::filesystem::path& path, const std::string& config_hash) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    if (!config_hash.empty()) {
        out << "# config_hash=" << config_hash << '\n';
    }
    out << "epoch,phase,loss\n";
    char buf[64];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%.9g", p.loss);
        out << p.epoch << ',' << p.phase << ',' << buf << '\n';
    }
}

Model Model::initialized(const ModelConfig& config, std::uint64_t seed) {
    Model m;
    m.config = config;
    m.params = Parameters<float>::initialized(config, seed);
    m.optimizer = AdamState<float>::for_params(m.params);
    return m;
}

Mat<float> AttentionBias::for_sequence(std::span<const TokenId> ids, const Vocabulary& vocab) const {
    if (!active()) {
        return {};
    }
    return build_sequence_bias<float>(ids, vocab, node_bias, scale);
}

AttentionBias attention_bias_for(const StructuralBias& bias, AblationMode mode, double bias_scale) {
    AttentionBias out;
    out.scale = static_cast<float>(bias_scale);
    const auto n = static_cast<Eigen::Index>(bias.size());
    switch (mode) {
        case AblationMode::NoGkia:
            out.scale = 0.0F;
            break;
        case AblationMode::AllOnesInjection:
            out.node_bias = Mat<float>::Ones(n, n);
            break;
        case AblationMode::ConnOnly:
            out.node_bias = bias.conn.cast<float>();
            break;
        case AblationMode::PathOnly:
            out.node_bias = bias.path.cast<float>();
            break;
        default:
            out.node_bias = bias.combined().cast<float>();
            break;
    }
    return out;
}

TrainingExample language_model_example(const Vocabulary& vocab, const std::string& text, int context_length) {
    const auto limit = static_cast<std::size_t>(context_length) + 1;
    auto ids = encode(vocab, text, limit).ids;
    if (ids.size() < limit) {
        ids.push_back(Vocabulary::kEos);
    }
    TrainingExample ex;
    ex.input.assign(ids.begin(), ids.end() - 1);
    ex.targets.assign(ids.begin() + 1, ids.end());
    ex.mask.assign(ex.targets.size(), 1);
    return ex;
}

namespace {

std::size_t supervised_count(std::span<const TrainingExample> batch) {
    std::size_t n = 0;
    for (const auto& ex : batch) {
        n += static_cast<std::size_t>(std::count(ex.mask.begin(), ex.mask.end(), std::uint8_t{1}));
    }
    return n;
}

// Per-example gradient buffers, reused across batches.
std::vector<Parameters<float>>& gradient_buffers(const Parameters<float>& like, std::size_t n) {
    thread_local std::vector<Parameters<float>> buffers;
    const bool reshape = !buffers.empty() && (buffers.front().layers.size() != like.layers.size() ||
                                              buffers.front().parameter_count() != like.parameter_count() ||
                                              buffers.front().token_embedding.rows() != like.token_embedding.rows());
    if (reshape) {
        buffers.clear();
    }
    while (buffers.size() < n) {
        buffers.push_back(Parameters<float>::zeros_shaped_like(like));
    }
    return buffers;
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
    for (const auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

}  // namespace

BatchResult train_batch(Model& model, std::span<const TrainingExample> batch, const AttentionBias& bias,
                        const Vocabulary& vocab, std::optional<TokenRange> restrict_to, double learning_rate) {
    BatchResult result;
    result.supervised = supervised_count(batch);
    if (result.supervised == 0) {
        return result;
    }
    const auto n = static_cast<std::int64_t>(batch.size());
    auto& buffers = gradient_buffers(model.params, batch.size());
    std::vector<double> nll(batch.size(), 0.0);
    std::vector<std::exception_ptr> errors(batch.size());
    const float grad_scale = 1.0F / static_cast<float>(result.supervised);
    const Model& frozen = model;

#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            const auto& ex = batch[idx];
            buffers[idx].set_zero();
            const auto trace = forward<float>(frozen.config, frozen.params, ex.input, bias.for_sequence(ex.input, vocab));
            Mat<float> dlogits;
            nll[idx] = masked_cross_entropy<float>(trace.logits, ex.targets, ex.mask, restrict_to, grad_scale, &dlogits);
            backward<float>(frozen.config, frozen.params, trace, dlogits, buffers[idx]);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    rethrow_first(errors);

    auto total = buffers[0].tensors();
    for (std::size_t i = 1; i < batch.size(); ++i) {
        auto part = buffers[i].tensors();
        for (std::size_t t = 0; t < total.size(); ++t) {
            *total[t] += *part[t];
        }
    }
    for (double v : nll) {
        result.nll_sum += v;
    }
    adam_step(model.params, buffers[0], model.optimizer, learning_rate);
    return result;
}

BatchResult evaluate_loss(const Model& model, std::span<const TrainingExample> examples, const AttentionBias& bias,
                          const Vocabulary& vocab, std::optional<TokenRange> restrict_to) {
    const auto n = static_cast<std::int64_t>(examples.size());
    std::vector<double> nll(examples.size(), 0.0);
    std::vector<std::exception_ptr> errors(examples.size());
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            const auto& ex = examples[idx];
            const auto trace = forward<float>(model.config, model.params, ex.input, bias.for_sequence(ex.input, vocab));
            nll[idx] = masked_cross_entropy<float>(trace.logits, ex.targets, ex.mask, restrict_to, 1.0F, nullptr);
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    }
    rethrow_first(errors);
    BatchResult r;
    r.supervised = supervised_count(examples);
    for (double v : nll) {
        r.nll_sum += v;
    }
    return r;
}

namespace {

double mean_loss(const BatchResult& r) {
    return r.supervised == 0 ? 0.0 : r.nll_sum / static_cast<double>(r.supervised);
}

// One shuffled pass; returns the epoch's mean loss.
double run_epoch(Model& model, const std::vector<TrainingExample>& examples, const AttentionBias& bias,
                 const Vocabulary& vocab, std::optional<TokenRange> restrict_to, const TrainSpec& spec,
                 std::mt19937_64& rng) {
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto batch_size = static_cast<std::size_t>(std::max(1, spec.batch_size));
    std::vector<TrainingExample> batch;
    BatchResult epoch;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        batch.clear();
        for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
            batch.push_back(examples[order[k]]);
        }
        const BatchResult r = train_batch(model, batch, bias, vocab, restrict_to, spec.learning_rate);
        epoch.nll_sum += r.nll_sum;
        epoch.supervised += r.supervised;
    }
    return mean_loss(epoch);
}

// Runs one epoch, restoring the model and throwing TrainingDiverged on a non-finite loss.
double guarded_epoch(Model& model, const std::vector<TrainingExample>& examples, const AttentionBias& bias,
                     const Vocabulary& vocab, std::optional<TokenRange> restrict_to, const TrainSpec& spec,
                     std::mt19937_64& rng, const std::string& phase, int epoch) {
    Model snapshot = model;
    try {
        const double loss = run_epoch(model, examples, bias, vocab, restrict_to, spec, rng);
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite epoch loss");
        }
        return loss;
    } catch (const NumericError& e) {
        model = std::move(snapshot);
        throw TrainingDiverged(phase + " diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
}

}  // namespace

LossCurve pretrain(Model& model, const Vocabulary& vocab, const PromptCorpus& corpus, const AttentionBias& bias,
                   const TrainSpec& spec, const EpochCallback& on_epoch) {
    if (spec.epochs < 1) {
        throw ConfigError("pretrain needs at least one epoch");
    }
    if (corpus.size() == 0) {
        throw ConfigError("pretraining corpus is empty");
    }
    const AttentionBias none;
    const AttentionBias& phase_bias = spec.use_bias ? bias : none;
    std::vector<TrainingExample> all;
    std::vector<TrainingExample> events;
    for (const auto& p : corpus.prompts) {
        all.push_back(language_model_example(vocab, p.text, model.config.context_length));
        if (p.kind == PromptKind::InteractionEvent) {
            events.push_back(all.back());
        }
    }

    std::mt19937_64 rng(spec.seed);
    LossCurve curve;
    curve.push_back({0, "initial", mean_loss(evaluate_loss(model, all, phase_bias, vocab, std::nullopt))});
    int epoch = 0;
    auto record = [&](const std::string& phase, double loss) {
        curve.push_back({epoch, phase, loss});
        if (on_epoch) {
            on_epoch(model, curve.back());
        }
    };
    for (int e = 0; e < spec.epochs; ++e) {
        ++epoch;
        record("crowd", guarded_epoch(model, all, phase_bias, vocab, std::nullopt, spec, rng, "pretrain", epoch));
    }
    if (!events.empty()) {
        for (int e = 0; e < spec.event_epochs; ++e) {
            ++epoch;
            record("events", guarded_epoch(model, events, phase_bias, vocab, std::nullopt, spec, rng, "pretrain", epoch));
        }
    }
    return curve;
}

std::vector<FinetuneSample> make_finetune_samples(const Dataset& dataset, double target_fraction,
                                                  std::mt19937_64& rng) {
    std::vector<FinetuneSample> samples;
    for (std::size_t u = 0; u < dataset.n_users(); ++u) {
        const auto& train = dataset.train[u];
        if (train.size() < 2) {
            continue;
        }
        const auto n = train.size();
        auto m = static_cast<std::size_t>(std::lround(target_fraction * static_cast<double>(n)));
        m = std::clamp<std::size_t>(m, 1, n - 1);
        std::vector<std::size_t> positions(n);
        std::iota(positions.begin(), positions.end(), 0);
        std::shuffle(positions.begin(), positions.end(), rng);
        std::vector<bool> is_target(n, false);
        for (std::size_t k = 0; k < m; ++k) {
            is_target[positions[k]] = true;
        }
        FinetuneSample s;
        s.user = static_cast<std::int32_t>(u);
        for (std::size_t p = 0; p < n; ++p) {
            (is_target[p] ? s.targets : s.history).push_back(train[p]);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

namespace {

// Encoded prompt that leaves room for `reserve` more tokens within the context.
std::pair<PredictivePrompt, std::vector<TokenId>> fit_prompt(const Vocabulary& vocab, std::int32_t user,
                                                             const ItemList& history, std::size_t max_history,
                                                             std::size_t budget) {
    std::size_t h = std::max<std::size_t>(1, std::min(max_history, history.size()));
    while (true) {
        PredictivePrompt prompt = render_predictive_prompt(user, history, h);
        auto ids = encode(vocab, prompt.text).ids;
        if (ids.size() <= budget) {
            return {std::move(prompt), std::move(ids)};
        }
        if (h == 1) {
            throw ConfigError("context_length too short for a single-item predictive prompt");
        }
        --h;
    }
}

}  // namespace

TrainingExample finetune_example(const Vocabulary& vocab, const FinetuneSample& sample, std::size_t max_history,
                                 int context_length) {
    const auto limit = static_cast<std::size_t>(context_length) + 1;
    if (sample.targets.empty()) {
        throw ConfigError("finetune sample without targets");
    }
    // Keep at least the single-item prompt (7 tokens) plus one target.
    const std::size_t n_targets = std::min(sample.targets.size(), limit > 8 ? limit - 7 : std::size_t{1});
    auto [prompt, ids] = fit_prompt(vocab, sample.user, sample.history, max_history, limit - n_targets);
    const std::size_t prompt_len = ids.size();
    for (std::size_t k = 0; k < n_targets; ++k) {
        ids.push_back(vocab.item_id(static_cast<std::size_t>(sample.targets[k])));
    }
    TrainingExample ex;
    ex.input.assign(ids.begin(), ids.end() - 1);
    ex.targets.assign(ids.begin() + 1, ids.end());
    ex.mask.assign(ex.targets.size(), 0);
    for (std::size_t t = prompt_len - 1; t < ex.targets.size(); ++t) {
        ex.mask[t] = 1;
    }
    return ex;
}

LossCurve finetune_on_samples(Model& model, const Vocabulary& vocab, std::vector<FinetuneSample> samples,
                              const AttentionBias& bias, const TrainSpec& spec, const FinetuneOptions& options,
                              const std::function<std::vector<FinetuneSample>(std::mt19937_64&)>& resample,
                              const EpochCallback& on_epoch) {
    if (spec.epochs < 1) {
        throw ConfigError("finetune needs at least one epoch");
    }
    if (samples.empty()) {
        throw ConfigError("no user has two or more train items to fine-tune on");
    }
    const AttentionBias none;
    const AttentionBias& phase_bias = spec.use_bias ? bias : none;
    const TokenRange items{vocab.first_item_id(), vocab.end_item_id()};
    auto to_examples = [&](const std::vector<FinetuneSample>& s) {
        std::vector<TrainingExample> out;
        out.reserve(s.size());
        for (const auto& sample : s) {
            out.push_back(finetune_example(vocab, sample, options.max_history, model.config.context_length));
        }
        return out;
    };

    model.optimizer = AdamState<float>::for_params(model.params);
    std::mt19937_64 rng(spec.seed);
    auto examples = to_examples(samples);
    LossCurve curve;
    curve.push_back({0, "initial", mean_loss(evaluate_loss(model, examples, phase_bias, vocab, items))});
    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
        if (resample && epoch > 1) {
            examples = to_examples(resample(rng));
        }
        const double loss = guarded_epoch(model, examples, phase_bias, vocab, items, spec, rng, "finetune", epoch);
        curve.push_back({epoch, "finetune", loss});
        if (on_epoch) {
            on_epoch(model, curve.back());
        }
    }
    return curve;
}

LossCurve finetune(Model& model, const Vocabulary& vocab, const Dataset& dataset, const AttentionBias& bias,
                   const TrainSpec& spec, const FinetuneOptions& options, const EpochCallback& on_epoch) {
    std::mt19937_64 sample_rng(derive_seed(spec.seed, "finetune-samples"));
    auto samples = make_finetune_samples(dataset, options.target_fraction, sample_rng);
    std::function<std::vector<FinetuneSample>(std::mt19937_64&)> resample;
    if (options.resample_each_epoch) {
        resample = [&](std::mt19937_64& rng) { return make_finetune_samples(dataset, options.target_fraction, rng); };
    }
    return finetune_on_samples(model, vocab, std::move(samples), bias, spec, options, resample, on_epoch);
}

Vec<float> score_items(const Model& model, const Vocabulary& vocab, const AttentionBias& bias,
                       const PredictivePrompt& prompt) {
    auto [fitted, ids] = fit_prompt(vocab, prompt.user, prompt.history, prompt.history.size(),
                                    static_cast<std::size_t>(model.config.context_length));
    const auto trace = forward<float>(model.config, model.params, ids, bias.for_sequence(ids, vocab));
    const auto last = trace.logits.rows() - 1;
    return trace.logits.row(last).segment(vocab.first_item_id(), static_cast<Eigen::Index>(vocab.n_items())).transpose();
}

RecommendationList rank_items(std::int32_t user, const Vec<float>& scores, const ItemList& exclude, std::size_t top_n) {
    const std::unordered_set<std::int32_t> seen(exclude.begin(), exclude.end());
    std::vector<std::int32_t> candidates;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
        if (!seen.count(static_cast<std::int32_t>(j))) {
            candidates.push_back(static_cast<std::int32_t>(j));
        }
    }
    const std::size_t n = std::min(top_n, candidates.size());
    auto better = [&](std::int32_t a, std::int32_t b) {
        if (scores(a) != scores(b)) {
            return scores(a) > scores(b);
        }
        return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(), better);
    RecommendationList list;
    list.user = user;
    for (std::size_t i = 0; i < n; ++i) {
        list.items.push_back(candidates[i]);
        list.scores.push_back(static_cast<double>(scores(candidates[i])));
    }
    return list;
}

RecommendationList recommend(const Model& model, const Vocabulary& vocab, const Dataset& dataset,
                             const AttentionBias& bias, std::int32_t user, std::size_t k, std::size_t max_history) {
    if (user < 0 || static_cast<std::size_t>(user) >= dataset.n_users()) {
        throw ConfigError("unknown user index " + std::to_string(user));
    }
    const auto prompt = build_predictive_prompt(dataset, user, max_history);
    const auto scores = score_items(model, vocab, bias, prompt);
    return rank_items(user, scores, dataset.train[static_cast<std::size_t>(user)], std::max<std::size_t>(k, 100));
}

MetricsReport evaluate_split(const Model& model, const Vocabulary& vocab, const Dataset& dataset,
                             const AttentionBias& bias, Split split, const std::vector<int>& ks,
                             std::size_t max_history) {
    const auto n = static_cast<std::int64_t>(dataset.n_users());
    std::vector<RecommendationList> recs(dataset.n_users());
    std::vector<std::exception_ptr> errors(dataset.n_users());
    const std::size_t k_max = ks.empty() ? 100 : static_cast<std::size_t>(*std::max_element(ks.begin(), ks.end()));
#pragma omp parallel for schedule(static) num_threads(thread_count())
    for (std::int64_t u = 0; u < n; ++u) {
        try {
            recs[static_cast<std::size_t>(u)] =
                recommend(model, vocab, dataset, bias, static_cast<std::int32_t>(u), k_max, max_history);
        } catch (...) {
            errors[static_cast<std::size_t>(u)] = std::current_exception();
        }
    }
    rethrow_first(errors);
    const auto& relevant = split == Split::Val ? dataset.val : split == Split::Test ? dataset.test : dataset.train;
    MetricsReport report = compute_metrics(recs, relevant, ks);
    report.split = to_string(split);
    return report;
}

PromptCorpus pretraining_corpus(const Dataset& dataset, const BipartiteGraph& graph, const PipelineOptions& options,
                                AblationMode mode) {
    CrowdPromptOptions prompts = options.prompts;
    if (mode == AblationMode::NoGhip) {
        prompts.item_content = false;
        prompts.second_order = false;
        prompts.interaction_events = false;
        prompts.first_order = true;
    }
    return assemble_corpus(build_crowd_prompts(dataset, graph, prompts), options.events_repeat);
}

Vocabulary pipeline_vocab(const Dataset& dataset, const BipartiteGraph& graph, const PipelineOptions& options) {
    std::vector<std::string> texts;
    CrowdPromptOptions every_family;
    every_family.max_group = options.prompts.max_group;
    for (const auto& p : build_crowd_prompts(dataset, graph, every_family).prompts) {
        texts.push_back(p.text);
    }
    for (std::size_t u = 0; u < dataset.n_users(); ++u) {
        texts.push_back(
            build_predictive_prompt(dataset, static_cast<std::int32_t>(u), options.finetune_options.max_history).text);
    }
    return build_vocab(texts, dataset.n_users(), dataset.n_items(), options.vocab);
}

PipelineResult run_pipeline(const Dataset& dataset, const PipelineOptions& options, AblationMode mode,
                            std::uint64_t seed, const std::string& config_hash) {
    const BipartiteGraph graph = build_graph(dataset, options.graph);
    const StructuralBias structure =
        build_structural_bias(all_pairs_shortest_paths(graph), options.delta, options.variant);

    PipelineResult result;
    result.vocab = pipeline_vocab(dataset, graph, options);
    ModelConfig config = options.model;
    config.vocab_size = static_cast<int>(result.vocab.size());
    result.model = Model::initialized(config, derive_seed(seed, "init"));
    const AttentionBias bias = attention_bias_for(structure, mode, config.bias_scale);

    if (mode != AblationMode::NoPretrain) {
        TrainSpec spec = options.pretrain;
        spec.seed = derive_seed(seed, "pretrain");
        result.pretrain_curve =
            pretrain(result.model, result.vocab, pretraining_corpus(dataset, graph, options, mode), bias, spec);
    }
    bool eval_uses_bias = options.pretrain.use_bias;
    if (mode != AblationMode::NoFinetune) {
        TrainSpec spec = options.finetune;
        spec.seed = derive_seed(seed, "finetune");
        result.finetune_curve =
            finetune(result.model, result.vocab, dataset, bias, spec, options.finetune_options);
        eval_uses_bias = options.finetune.use_bias;
    }
    const AttentionBias eval_bias = eval_uses_bias ? bias : AttentionBias{};
    const std::size_t max_history = options.finetune_options.max_history;
    result.val = evaluate_split(result.model, result.vocab, dataset, eval_bias, Split::Val, options.ks, max_history);
    result.test = evaluate_split(result.model, result.vocab, dataset, eval_bias, Split::Test, options.ks, max_history);
    for (auto* report : {&result.val, &result.test}) {
        report->mode = to_string(mode);
        report->seed = seed;
        report->config_hash = config_hash;
    }
    return result;
}

std::vector<MetricsReport> run_ablation(const Dataset& dataset, AblationMode mode, const PipelineOptions& options,
                                        int n_seeds, std::uint64_t base_seed, const std::string& config_hash) {
    if (n_seeds < 1) {
        throw ConfigError("ablation needs at least one seed");
    }
    std::vector<MetricsReport> reports;
    for (int s = 0; s < n_seeds; ++s) {
        reports.push_back(
            run_pipeline(dataset, options, mode, base_seed + static_cast<std::uint64_t>(s), config_hash).test);
    }
    return reports;
}

}  // namespace grasp
