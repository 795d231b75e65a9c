#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "treepos/ast.hpp"
#include "treepos/model.hpp"
#include "treepos/tokenize.hpp"

namespace treepos::train {

struct TrainConfig {
    double lr = 1e-5;
    int batch_size = 32;
    int epochs = 3;
    std::uint64_t seed = 12345;
    double mask_rate = 0.15;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::optional<double> grad_clip;  // global L2 norm; none by default
    int threads = 1;

    std::vector<std::string> violations() const;
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// ---------------------------------------------------------------------------
// Masking

struct MaskedExample {
    tok::AlignedSequence input;
    std::vector<int> labels;
};

class NoMaskableToken : public Error {
public:
    NoMaskableToken() : Error("sequence has no maskable (non-special) token") {}
};

// Each non-special position is selected with probability mask_rate; selected
// positions become MASK (80%), a random non-special id (10%) or stay (10%).
// Structural indices are copied unchanged.
MaskedExample mask_tokens(const tok::AlignedSequence& seq, double mask_rate, int vocab_size, Rng& rng);

// ---------------------------------------------------------------------------
// Optimiser

struct AdamState {
    model::Parameters m;
    model::Parameters v;
    std::int64_t step = 0;

    static AdamState zeros_like(const model::Parameters& p);
};

// Decoupled weight decay Adam with bias correction. Tensors flagged
// Decay::no (biases, layer-norm parameters) are not decayed.
void adamw_step(model::Parameters& params, const model::Parameters& grads, const TrainConfig& cfg, AdamState& state);

// Rounds parameters and moments to float32, the checkpoint storage precision.
void round_to_storage(model::Parameters& params, AdamState& state);

double global_norm(const model::Parameters& grads);

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    double loss = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

enum class Averaging { binary, weighted };

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, Averaging averaging);

struct MetricsRow {
    std::string split;
    std::int64_t step = 0;
    Metrics metrics;
};

inline constexpr const char* kMetricsHeader = "split,step,loss,accuracy,f1,precision,recall";
std::string format_metrics_row(const MetricsRow& row);
std::string metrics_csv(const std::vector<MetricsRow>& rows);

// ---------------------------------------------------------------------------
// Data

struct Document {
    std::string id;
    std::string code;
};

struct CodePair {
    std::string code1;
    std::string code2;
    int label = 0;
};

struct PreparedDoc {
    std::string id;
    ast::Ast ast;
    tok::TokenizedCode tokens;
    tok::AlignedSequence seq;
};

struct PreparedPair {
    std::string id;
    tok::AlignedSequence seq;
    int label = 0;
};

// 90/10 split keyed on a hash of the id.
bool is_heldout(std::string_view id);

PreparedDoc prepare_document(const Document& doc, const tok::Vocab& vocab, const model::ModelConfig& cfg);
std::vector<PreparedDoc> prepare_corpus(const std::vector<Document>& docs, const tok::Vocab& vocab,
                                        const model::ModelConfig& cfg);
std::vector<PreparedPair> prepare_pairs(const std::vector<CodePair>& pairs, const tok::Vocab& vocab,
                                        const model::ModelConfig& cfg);

std::vector<Document> read_corpus_jsonl(const std::string& path);
void write_corpus_jsonl(const std::string& path, const std::vector<Document>& docs);
std::vector<CodePair> read_pairs_jsonl(const std::string& path);
void write_pairs_jsonl(const std::string& path, const std::vector<CodePair>& pairs);

// ---------------------------------------------------------------------------
// Training loops

struct StepLog {
    std::int64_t step = 0;
    double loss = 0.0;
    std::vector<double> coefficients;  // weighted_sum only, values used by this step
};

struct TrainResult {
    model::Parameters params;
    AdamState opt;
    std::vector<StepLog> steps;
    std::vector<double> epoch_loss;
    std::vector<MetricsRow> metrics;
};

// Called after every optimizer step with the step index just completed.
using StepHook = std::function<void(std::int64_t step, const model::Parameters&, const AdamState&)>;

class EmptyCorpus : public Error {
public:
    EmptyCorpus() : Error("training corpus is empty") {}
};

struct PretrainOptions {
    // Defaults to a fresh initialisation from the "init" sub-stream of the seed.
    std::optional<model::Parameters> init;
    StepHook hook;
    // Evaluated after every epoch into "heldout" metric rows.
    const std::vector<PreparedDoc>* eval_docs = nullptr;
};

// MLM pretraining. Writes one "train" metrics row per epoch (epoch-average
// loss, weighted metrics over the masked positions seen in that epoch).
TrainResult pretrain_mlm(const std::vector<PreparedDoc>& docs, const model::ModelConfig& mcfg, const TrainConfig& cfg,
                         const PretrainOptions& options = {});

// Masked-position evaluation with a fixed masking stream.
Metrics evaluate_mlm(const model::Parameters& params, const model::ModelConfig& mcfg,
                     const std::vector<PreparedDoc>& docs, std::uint64_t seed, double mask_rate = 0.15);

// Clone-detection fine-tuning; pairs whose id is held out are evaluated after
// every epoch. The final held-out row is returned in `final_metrics`.
struct FinetuneResult {
    TrainResult train;
    Metrics final_metrics;
};

FinetuneResult finetune_clone(const std::vector<PreparedPair>& pairs, const model::Parameters& init,
                              const model::ModelConfig& mcfg, const TrainConfig& cfg);

Metrics evaluate_pairs(const model::Parameters& params, const model::ModelConfig& mcfg,
                       const std::vector<PreparedPair>& pairs);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

// Malformed, truncated or incompatible checkpoint.
class CheckpointError : public Error {
public:
    using Error::Error;
};

struct Checkpoint {
    model::ModelConfig model;
    TrainConfig train;
    model::Parameters params;
    std::optional<AdamState> opt;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
    std::optional<tok::Vocab> vocab;
};

// "TPC1", u32 little-endian length, UTF-8 JSON config document with a tensor
// manifest, then little-endian float32 data for each manifest tensor.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes);

}  // namespace treepos::train
