#pragma once

#include "grasp/graph.hpp"
#include "grasp/ingest.hpp"
#include "grasp/metrics.hpp"
#include "grasp/model.hpp"
#include "grasp/prompts.hpp"
#include "grasp/tokenizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace grasp {

enum class AblationMode {
    Full,
    NoPretrain,
    NoFinetune,
    NoGkia,            // no structural bias in attention
    NoGhip,            // pre-training on review prompts only
    AllOnesInjection,  // bias 1 between every pair of node tokens
    ConnOnly,          // R = R_conn
    PathOnly,          // R = R_path
};

std::string to_string(AblationMode mode);
AblationMode parse_ablation_mode(const std::string& name);
const std::vector<AblationMode>& all_ablation_modes();

enum class Phase { Pretrain, Finetune };

struct TrainSpec {
    Phase phase = Phase::Pretrain;
    int epochs = 10;
    int event_epochs = 0;  // pre-training only: second pass over interaction-event prompts
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 1;
    bool use_bias = true;
};

struct LossPoint {
    int epoch = 0;  // 0 is the untrained model
    std::string phase;
    double loss = 0.0;
};

using LossCurve = std::vector<LossPoint>;

void save_loss_curve(const LossCurve& curve, const std::filesystem::path& path, const std::string& config_hash = {});

struct Model {
    ModelConfig config;
    Parameters<float> params;
    AdamState<float> optimizer;

    static Model initialized(const ModelConfig& config, std::uint64_t seed);
};

/// Node-level attention bias handed to the model, already selected for an
/// ablation mode. Empty matrix or zero scale means plain attention.
struct AttentionBias {
    Mat<float> node_bias;
    float scale = 0.0F;

    bool active() const { return scale != 0.0F && node_bias.size() != 0; }
    Mat<float> for_sequence(std::span<const TokenId> ids, const Vocabulary& vocab) const;
};

AttentionBias attention_bias_for(const StructuralBias& bias, AblationMode mode, double bias_scale);

/// One supervised sequence: input ids, next-token targets, supervision mask.
struct TrainingExample {
    std::vector<TokenId> input;
    std::vector<TokenId> targets;
    std::vector<std::uint8_t> mask;
};

/// Language-modelling example: BOS + text (+ EOS if it fits), every position supervised.
TrainingExample language_model_example(const Vocabulary& vocab, const std::string& text, int context_length);

struct BatchResult {
    double nll_sum = 0.0;
    std::size_t supervised = 0;
};

/// Mean-NLL gradient over the batch and one optimizer step. Per-example
/// gradients are computed in parallel and summed in example order.
BatchResult train_batch(Model& model, std::span<const TrainingExample> batch, const AttentionBias& bias,
                        const Vocabulary& vocab, std::optional<TokenRange> restrict_to, double learning_rate);

/// Total NLL without updating the model.
BatchResult evaluate_loss(const Model& model, std::span<const TrainingExample> examples, const AttentionBias& bias,
                          const Vocabulary& vocab, std::optional<TokenRange> restrict_to);

class TrainingDiverged : public NumericError {
public:
    using NumericError::NumericError;
};

using EpochCallback = std::function<void(const Model&, const LossPoint&)>;

/// Next-token training over the crowd corpus (phase A) then the interaction-event
/// prompts (phase B). On a non-finite loss the model is restored to the last
/// completed epoch and TrainingDiverged is thrown.
LossCurve pretrain(Model& model, const Vocabulary& vocab, const PromptCorpus& corpus, const AttentionBias& bias,
                   const TrainSpec& spec, const EpochCallback& on_epoch = {});

struct FinetuneSample {
    std::int32_t user = 0;
    ItemList history;
    ItemList targets;  // held-in train items the prompt should produce
};

/// Splits each user's train list into prompt history and held-in targets;
/// users with a single train item get no sample.
std::vector<FinetuneSample> make_finetune_samples(const Dataset& dataset, double target_fraction, std::mt19937_64& rng);

struct FinetuneOptions {
    std::size_t max_history = 20;
    double target_fraction = 0.2;
    bool resample_each_epoch = true;
};

/// Predictive prompt followed by target item tokens; supervision only on
/// item-target positions with logits restricted to the item vocabulary.
TrainingExample finetune_example(const Vocabulary& vocab, const FinetuneSample& sample, std::size_t max_history,
                                 int context_length);

LossCurve finetune(Model& model, const Vocabulary& vocab, const Dataset& dataset, const AttentionBias& bias,
                   const TrainSpec& spec, const FinetuneOptions& options, const EpochCallback& on_epoch = {});

LossCurve finetune_on_samples(Model& model, const Vocabulary& vocab, std::vector<FinetuneSample> samples,
                              const AttentionBias& bias, const TrainSpec& spec, const FinetuneOptions& options,
                              const std::function<std::vector<FinetuneSample>(std::mt19937_64&)>& resample = {},
                              const EpochCallback& on_epoch = {});

/// Item-token logits at the final prompt position (length J).
Vec<float> score_items(const Model& model, const Vocabulary& vocab, const AttentionBias& bias,
                       const PredictivePrompt& prompt);

/// Descending score, ties by ascending item index, excluded items removed.
RecommendationList rank_items(std::int32_t user, const Vec<float>& scores, const ItemList& exclude, std::size_t top_n);

/// Top max(k, 100) unseen items for one user from the prompt over the train split.
RecommendationList recommend(const Model& model, const Vocabulary& vocab, const Dataset& dataset,
                             const AttentionBias& bias, std::int32_t user, std::size_t k, std::size_t max_history);

enum class Split { Val, Test, Train };
std::string to_string(Split split);

MetricsReport evaluate_split(const Model& model, const Vocabulary& vocab, const Dataset& dataset,
                             const AttentionBias& bias, Split split, const std::vector<int>& ks,
                             std::size_t max_history);

/// Everything a run needs besides the dataset.
struct PipelineOptions {
    ModelConfig model;  // vocab_size is filled in from the vocabulary
    double delta = 0.9;
    PathVariant variant = PathVariant::AsWritten;
    GraphOptions graph;
    CrowdPromptOptions prompts;
    std::size_t events_repeat = 0;
    VocabOptions vocab;
    TrainSpec pretrain{Phase::Pretrain, 10, 100, 16, 1e-3, 1, true};
    TrainSpec finetune{Phase::Finetune, 50, 0, 16, 1e-3, 1, true};
    FinetuneOptions finetune_options;
    std::vector<int> ks{1, 5, 20, 40, 100};
};

/// Crowd prompts with the mode's content restrictions applied.
PromptCorpus pretraining_corpus(const Dataset& dataset, const BipartiteGraph& graph, const PipelineOptions& options,
                                AblationMode mode);

/// Vocabulary over every prompt family and all predictive prompts, independent of the mode.
Vocabulary pipeline_vocab(const Dataset& dataset, const BipartiteGraph& graph, const PipelineOptions& options);

std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

struct PipelineResult {
    Vocabulary vocab;
    Model model;
    LossCurve pretrain_curve;
    LossCurve finetune_curve;
    MetricsReport val;
    MetricsReport test;
};

/// graph -> prompts -> vocab -> pretrain -> finetune -> evaluate for one seed.
PipelineResult run_pipeline(const Dataset& dataset, const PipelineOptions& options, AblationMode mode,
                            std::uint64_t seed, const std::string& config_hash = {});

/// Test-split reports for seeds base_seed .. base_seed + n_seeds - 1.
std::vector<MetricsReport> run_ablation(const Dataset& dataset, AblationMode mode, const PipelineOptions& options,
                                        int n_seeds, std::uint64_t base_seed, const std::string& config_hash = {});

}  // namespace grasp
