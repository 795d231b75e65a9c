#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "treepos/common.hpp"
#include "treepos/embed.hpp"
#include "treepos/tokenize.hpp"

namespace treepos::model {

struct ModelConfig {
    int layers = 2;
    int d = 64;
    int heads = 4;
    int ffn_width = 256;
    int max_len = 128;
    int vocab_size = 1000;
    int depth_table_size = 514;
    int sibling_table_size = 514;
    embed::StrategyKind strategy = embed::StrategyKind::weighted_sum;
    double dropout_rate = 0.1;
    bool tree_mask_enabled = true;
    // false = structural ablation: depth and sibling tables stay zero and frozen.
    bool structural = true;

    std::vector<std::string> violations() const;
    void validate() const;
    tok::TableSizes table_sizes() const { return {depth_table_size, sibling_table_size}; }
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Fields that differ between two configs, e.g. {"d", "layers"}.
std::vector<std::string> config_mismatches(const ModelConfig& a, const ModelConfig& b);

struct AttentionMask {
    std::size_t n = 0;
    std::vector<std::uint8_t> allowed;  // row-major n x n; row = query, column = key

    bool at(std::size_t query, std::size_t key) const { return allowed[query * n + key] != 0; }
    // 0 where allowed, -1e9 where disallowed.
    Mat additive_bias() const;
};

// PAD keys are excluded for every query; a PAD query attends only to itself.
AttentionMask build_tree_attention_mask(const tok::AlignedSequence& seq, const ModelConfig& config);

struct LayerParams {
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln1_g, ln1_b;
    Mat w1, b1, w2, b2;
    Mat ln2_g, ln2_b;
};

enum class Decay { yes, no };

struct Parameters {
    embed::EmbeddingTables tables;
    embed::CombineStrategy strategy;
    Mat emb_ln_g, emb_ln_b;
    std::vector<LayerParams> layers;
    Mat mlm_w, mlm_b;
    Mat pair_w, pair_b;

    // Visits every tensor in manifest order as f(name, Mat&, Decay).
    template <class F>
    void for_each(F&& f) {
        visit_impl(*this, f);
    }
    template <class F>
    void for_each(F&& f) const {
        visit_impl(*this, f);
    }

    std::int64_t count() const;
    Parameters zeros_like() const;
    void set_zero();
    // this += scale * other
    void add_scaled(const Parameters& other, double scale = 1.0);
    void scale(double s);

    // Matrices ~ N(0, 0.02), biases 0, layer-norm gains 1, raw strategy weights 0;
    // values are rounded to float32.
    static Parameters init(const ModelConfig& config, std::uint64_t seed);
    static Parameters zeros(const ModelConfig& config);

private:
    template <class Self, class F>
    static void visit_impl(Self& p, F& f);
};

template <class Self, class F>
void Parameters::visit_impl(Self& p, F& f) {
    f("embeddings.word", p.tables.word, Decay::yes);
    f("embeddings.position", p.tables.linear_pos, Decay::yes);
    f("embeddings.token_type", p.tables.token_type, Decay::yes);
    f("embeddings.depth", p.tables.depth, Decay::yes);
    f("embeddings.sibling", p.tables.sibling, Decay::yes);
    switch (p.strategy.kind) {
        case embed::StrategyKind::sum: break;
        case embed::StrategyKind::weighted_sum: f("strategy.raw_weights", p.strategy.raw_weights, Decay::yes); break;
        case embed::StrategyKind::concat:
            f("strategy.projection", p.strategy.projection, Decay::yes);
            f("strategy.projection_bias", p.strategy.projection_bias, Decay::no);
            break;
    }
    f("embeddings.ln.gain", p.emb_ln_g, Decay::no);
    f("embeddings.ln.bias", p.emb_ln_b, Decay::no);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& l = p.layers[i];
        const std::string pre = "layer" + std::to_string(i) + ".";
        f(pre + "attn.q.weight", l.wq, Decay::yes);
        f(pre + "attn.q.bias", l.bq, Decay::no);
        f(pre + "attn.k.weight", l.wk, Decay::yes);
        f(pre + "attn.k.bias", l.bk, Decay::no);
        f(pre + "attn.v.weight", l.wv, Decay::yes);
        f(pre + "attn.v.bias", l.bv, Decay::no);
        f(pre + "attn.o.weight", l.wo, Decay::yes);
        f(pre + "attn.o.bias", l.bo, Decay::no);
        f(pre + "ln1.gain", l.ln1_g, Decay::no);
        f(pre + "ln1.bias", l.ln1_b, Decay::no);
        f(pre + "ffn.in.weight", l.w1, Decay::yes);
        f(pre + "ffn.in.bias", l.b1, Decay::no);
        f(pre + "ffn.out.weight", l.w2, Decay::yes);
        f(pre + "ffn.out.bias", l.b2, Decay::no);
        f(pre + "ln2.gain", l.ln2_g, Decay::no);
        f(pre + "ln2.bias", l.ln2_b, Decay::no);
    }
    f("mlm_head.weight", p.mlm_w, Decay::yes);
    f("mlm_head.bias", p.mlm_b, Decay::no);
    f("pair_head.weight", p.pair_w, Decay::yes);
    f("pair_head.bias", p.pair_b, Decay::no);
}

// Closed-form parameter count; matches Parameters::init(config).count().
std::int64_t count_parameters(const ModelConfig& config);

struct LayerNormCache {
    Mat xhat;
    Eigen::VectorXd inv_std;
};

struct LayerCache {
    Mat input;
    Mat q, k, v;
    std::vector<Mat> probs;  // per head, n x n
    Mat context;
    LayerNormCache ln1;
    Mat h1;
    Mat ffn_pre, ffn_act;
    LayerNormCache ln2;
};

// Activations retained by forward() for backward().
struct ForwardCache {
    bool valid = false;
    tok::AlignedSequence seq;
    embed::Components components;
    LayerNormCache emb_ln;
    Mat dropout_mask;  // empty when dropout is inactive
    std::vector<LayerCache> layers;
    Mat hidden;
};

ForwardCache forward(const Parameters& params, const ModelConfig& config, const tok::AlignedSequence& seq,
                     const AttentionMask& mask, bool train_mode, std::uint64_t rng_seed);

// Final hidden states, max_len x d.
Mat encode(const Parameters& params, const ModelConfig& config, const tok::AlignedSequence& seq,
           const AttentionMask& mask, bool train_mode, std::uint64_t rng_seed);

// Post-softmax attention weights of every layer and head, for inspection.
std::vector<std::vector<Mat>> attention_weights(const Parameters& params, const ModelConfig& config,
                                                const tok::AlignedSequence& seq, const AttentionMask& mask);

Mat mlm_logits(const Parameters& params, const Mat& hidden);
RowVec pair_logits(const Parameters& params, const Mat& hidden);

class MissingActivations : public Error {
public:
    MissingActivations() : Error("backward called without a forward cache") {}
};

// Accumulates into `grads` the gradient of a scalar whose derivative with
// respect to the final hidden states is `d_hidden`.
void backward(const Parameters& params, const ModelConfig& config, const ForwardCache& cache, const Mat& d_hidden,
              Parameters& grads);

enum class LossKind { mlm, pair };

struct Example {
    tok::AlignedSequence input;
    std::vector<int> labels;  // mlm: per position, tok::kIgnoreLabel where unlabeled
    int pair_label = -1;      // pair: 0 or 1
    std::uint64_t dropout_seed = 0;
};

struct BatchLoss {
    double loss = 0.0;
    std::size_t count = 0;  // labeled positions (mlm) or examples (pair)
    // Argmax prediction and target per labeled position (mlm) or pair, in batch order.
    std::vector<int> predictions;
    std::vector<int> targets;
};

// Mean cross-entropy over the batch's labeled positions (mlm) or pairs.
// When `grads` is non-null it receives the gradient; per-example gradients
// are reduced in batch order so the result does not depend on `threads`.
BatchLoss batch_loss(const Parameters& params, const ModelConfig& config, const std::vector<Example>& batch,
                     LossKind kind, bool train_mode, Parameters* grads, int threads = 1);

// Gradients of the batch loss for every parameter (zeros where unused).
Parameters gradients(const Parameters& params, const ModelConfig& config, const std::vector<Example>& batch,
                     LossKind kind, bool train_mode, int threads = 1);

}  // namespace treepos::model
