#include "treepos/model.hpp"

#include <cmath>
#include <thread>

namespace treepos::model {

using embed::StrategyKind;

std::vector<std::string> ModelConfig::violations() const {
    std::vector<std::string> v;
    if (layers < 1) v.push_back("layers must be positive");
    if (d < 1) v.push_back("d must be positive");
    if (heads < 1) v.push_back("heads must be positive");
    if (d >= 1 && heads >= 1 && d % heads != 0) v.push_back("d must be divisible by heads");
    if (ffn_width < 1) v.push_back("ffn_width must be positive");
    if (max_len < 4) v.push_back("max_len must be at least 4");
    if (vocab_size <= tok::kNumSpecial) v.push_back("vocab_size must exceed the 5 special tokens");
    if (depth_table_size < 1) v.push_back("depth_table_size must be positive");
    if (sibling_table_size < 1) v.push_back("sibling_table_size must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) v.push_back("dropout_rate must lie in [0, 1)");
    return v;
}

void ModelConfig::validate() const {
    const auto v = violations();
    if (!v.empty()) {
        std::string msg = "invalid model config:";
        for (const auto& s : v) {
            msg += "\n  - " + s;
        }
        throw ConfigError(msg);
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"layers", c.layers},
                       {"d", c.d},
                       {"heads", c.heads},
                       {"ffn_width", c.ffn_width},
                       {"max_len", c.max_len},
                       {"vocab_size", c.vocab_size},
                       {"depth_table_size", c.depth_table_size},
                       {"sibling_table_size", c.sibling_table_size},
                       {"strategy", embed::to_string(c.strategy)},
                       {"dropout_rate", c.dropout_rate},
                       {"tree_mask_enabled", c.tree_mask_enabled},
                       {"structural", c.structural}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("layers").get_to(c.layers);
    j.at("d").get_to(c.d);
    j.at("heads").get_to(c.heads);
    j.at("ffn_width").get_to(c.ffn_width);
    j.at("max_len").get_to(c.max_len);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("depth_table_size").get_to(c.depth_table_size);
    j.at("sibling_table_size").get_to(c.sibling_table_size);
    c.strategy = embed::strategy_from_string(j.at("strategy").get<std::string>());
    j.at("dropout_rate").get_to(c.dropout_rate);
    j.at("tree_mask_enabled").get_to(c.tree_mask_enabled);
    j.at("structural").get_to(c.structural);
}

std::vector<std::string> config_mismatches(const ModelConfig& a, const ModelConfig& b) {
    nlohmann::json ja = a;
    nlohmann::json jb = b;
    std::vector<std::string> out;
    for (auto it = ja.begin(); it != ja.end(); ++it) {
        if (jb.at(it.key()) != it.value()) {
            out.push_back(it.key());
        }
    }
    return out;
}

Mat AttentionMask::additive_bias() const {
    Mat b(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = at(i, j) ? 0.0 : -1e9;
        }
    }
    return b;
}

AttentionMask build_tree_attention_mask(const tok::AlignedSequence& seq, const ModelConfig& /*config*/) {
    // With the mask toggled off the rule is unchanged: padding keys are never
    // attendable, and CLS/SEP stay visible either way.
    const std::size_t n = seq.ids.size();
    AttentionMask m;
    m.n = n;
    m.allowed.assign(n * n, 0);
    for (std::size_t q = 0; q < n; ++q) {
        const bool q_pad = seq.ids[q] == tok::kPad;
        for (std::size_t k = 0; k < n; ++k) {
            const bool k_pad = seq.ids[k] == tok::kPad;
            m.allowed[q * n + k] = q_pad ? (q == k) : !k_pad;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Parameters

std::int64_t Parameters::count() const {
    std::int64_t n = 0;
    for_each([&](const std::string&, const Mat& m, Decay) { n += m.size(); });
    return n;
}

Parameters Parameters::zeros_like() const {
    Parameters z = *this;
    z.set_zero();
    return z;
}

void Parameters::set_zero() {
    for_each([](const std::string&, Mat& m, Decay) { m.setZero(); });
}

void Parameters::add_scaled(const Parameters& other, double scale) {
    std::vector<const Mat*> src;
    other.for_each([&](const std::string&, const Mat& m, Decay) { src.push_back(&m); });
    std::size_t i = 0;
    for_each([&](const std::string& name, Mat& m, Decay) {
        if (i >= src.size() || src[i]->rows() != m.rows() || src[i]->cols() != m.cols()) {
            throw ShapeError("add_scaled: tensor mismatch at " + name);
        }
        m += scale * *src[i++];
    });
}

void Parameters::scale(double s) {
    for_each([&](const std::string&, Mat& m, Decay) { m *= s; });
}

Parameters Parameters::zeros(const ModelConfig& c) {
    c.validate();
    const Eigen::Index d = c.d;
    Parameters p;
    p.tables.word = Mat::Zero(c.vocab_size, d);
    p.tables.linear_pos = Mat::Zero(c.max_len, d);
    p.tables.token_type = Mat::Zero(2, d);
    p.tables.depth = Mat::Zero(c.depth_table_size, d);
    p.tables.sibling = Mat::Zero(c.sibling_table_size, d);
    switch (c.strategy) {
        case StrategyKind::sum: p.strategy = embed::CombineStrategy::sum(); break;
        case StrategyKind::weighted_sum: p.strategy = embed::CombineStrategy::weighted(); break;
        case StrategyKind::concat: p.strategy = embed::CombineStrategy::concat(d); break;
    }
    p.emb_ln_g = Mat::Zero(1, d);
    p.emb_ln_b = Mat::Zero(1, d);
    p.layers.resize(static_cast<std::size_t>(c.layers));
    for (auto& l : p.layers) {
        for (Mat* w : {&l.wq, &l.wk, &l.wv, &l.wo}) {
            *w = Mat::Zero(d, d);
        }
        for (Mat* b : {&l.bq, &l.bk, &l.bv, &l.bo, &l.ln1_g, &l.ln1_b, &l.b2, &l.ln2_g, &l.ln2_b}) {
            *b = Mat::Zero(1, d);
        }
        l.w1 = Mat::Zero(d, c.ffn_width);
        l.b1 = Mat::Zero(1, c.ffn_width);
        l.w2 = Mat::Zero(c.ffn_width, d);
    }
    p.mlm_w = Mat::Zero(d, c.vocab_size);
    p.mlm_b = Mat::Zero(1, c.vocab_size);
    p.pair_w = Mat::Zero(d, 2);
    p.pair_b = Mat::Zero(1, 2);
    return p;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Parameters Parameters::init(const ModelConfig& c, std::uint64_t seed) {
    Parameters p = zeros(c);
    Rng rng(seed);
    p.for_each([&](const std::string& name, Mat& m, Decay) {
        if (ends_with(name, ".gain")) {
            m.setOnes();
        } else if (name.starts_with("embeddings.") || name == "strategy.projection" || ends_with(name, ".weight")) {
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = to_f32(0.02 * rng.normal());
            }
        }
    });
    if (!c.structural) {
        p.tables.depth.setZero();
        p.tables.sibling.setZero();
    }
    return p;
}

std::int64_t count_parameters(const ModelConfig& c) {
    const std::int64_t d = c.d;
    const std::int64_t f = c.ffn_width;
    std::int64_t n = (static_cast<std::int64_t>(c.vocab_size) + c.max_len + 2) * d;
    n += embed::count_extra_params(c.depth_table_size, c.sibling_table_size, d, c.strategy);
    n += 2 * d;
    n += c.layers * (4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d));
    n += d * c.vocab_size + c.vocab_size;
    n += 2 * d + 2;
    return n;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Mat layer_norm(const Mat& x, const Mat& g, const Mat& b, LayerNormCache& cache) {
    const Eigen::Index n = x.rows();
    cache.xhat.resize(n, x.cols());
    cache.inv_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.row(i).mean();
        const auto centered = (x.row(i).array() - mu).eval();
        const double var = centered.square().mean();
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        cache.inv_std(i) = inv;
        cache.xhat.row(i) = centered * inv;
    }
    Mat out = cache.xhat.array().rowwise() * g.row(0).array();
    out.rowwise() += b.row(0);
    return out;
}

Mat layer_norm_backward(const Mat& dy, const Mat& g, const LayerNormCache& c, Mat& dg, Mat& db) {
    dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
    db += dy.colwise().sum();
    const Mat dxhat = dy.array().rowwise() * g.row(0).array();
    Mat dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const double m1 = dxhat.row(i).mean();
        const double m2 = (dxhat.row(i).array() * c.xhat.row(i).array()).mean();
        dx.row(i) = c.inv_std(i) * (dxhat.row(i).array() - m1 - c.xhat.row(i).array() * m2);
    }
    return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Mat affine(const Mat& x, const Mat& w, const Mat& b) {
    Mat out = x * w;
    out.rowwise() += b.row(0);
    return out;
}

// Vectorised exp clamps large negative arguments to a denormal rather than
// 0, so masked entries are zeroed explicitly (denormals stall the matmuls).
void softmax_rows(Mat& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        const auto shifted = (s.row(i).array() - m).eval();
        s.row(i) = (shifted < -700.0).select(0.0, shifted.exp());
        s.row(i) /= s.row(i).sum();
    }
}

void check_inputs(const Parameters& params, const ModelConfig& config, const tok::AlignedSequence& seq,
                  const AttentionMask& mask) {
    const std::size_t n = seq.ids.size();
    if (n == 0 || n > static_cast<std::size_t>(config.max_len)) {
        throw ShapeError("sequence length " + std::to_string(n) + " outside 1.." + std::to_string(config.max_len));
    }
    for (const auto* v : {&seq.linear_pos, &seq.type_ids, &seq.depth_idx, &seq.sibling_idx, &seq.align_mask}) {
        if (v->size() != n) {
            throw ShapeError("aligned sequence index vectors differ in length");
        }
    }
    if (mask.n != n) {
        throw ShapeError("attention mask size does not match sequence length");
    }
    if (params.tables.width() != config.d || params.layers.size() != static_cast<std::size_t>(config.layers) ||
        params.strategy.kind != config.strategy || params.tables.word.rows() != config.vocab_size) {
        throw ShapeError("parameters are inconsistent with the model config");
    }
}

}  // namespace

ForwardCache forward(const Parameters& params, const ModelConfig& config, const tok::AlignedSequence& seq,
                     const AttentionMask& mask, bool train_mode, std::uint64_t rng_seed) {
    check_inputs(params, config, seq, mask);
    ForwardCache cache;
    cache.seq = seq;
    cache.components = embed::lookup(params.tables, seq);
    const Mat combined = embed::combine(cache.components, params.strategy);
    Mat h = layer_norm(combined, params.emb_ln_g, params.emb_ln_b, cache.emb_ln);
    if (train_mode && config.dropout_rate > 0.0) {
        Rng rng(rng_seed);
        const double keep = 1.0 - config.dropout_rate;
        cache.dropout_mask.resize(h.rows(), h.cols());
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            cache.dropout_mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
        h.array() *= cache.dropout_mask.array();
    }

    const Mat bias = mask.additive_bias();
    const int dh = config.d / config.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    cache.layers.resize(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& p = params.layers[li];
        auto& c = cache.layers[li];
        c.input = h;
        c.q = affine(h, p.wq, p.bq);
        c.k = affine(h, p.wk, p.bk);
        c.v = affine(h, p.wv, p.bv);
        c.context.resize(h.rows(), config.d);
        c.probs.resize(static_cast<std::size_t>(config.heads));
        for (int hd = 0; hd < config.heads; ++hd) {
            Mat s = scale * (c.q.middleCols(hd * dh, dh) * c.k.middleCols(hd * dh, dh).transpose());
            s += bias;
            softmax_rows(s);
            c.context.middleCols(hd * dh, dh).noalias() = s * c.v.middleCols(hd * dh, dh);
            c.probs[static_cast<std::size_t>(hd)] = std::move(s);
        }
        const Mat r1 = h + affine(c.context, p.wo, p.bo);
        c.h1 = layer_norm(r1, p.ln1_g, p.ln1_b, c.ln1);
        c.ffn_pre = affine(c.h1, p.w1, p.b1);
        c.ffn_act = c.ffn_pre.unaryExpr([](double x) { return gelu(x); });
        const Mat r2 = c.h1 + affine(c.ffn_act, p.w2, p.b2);
        h = layer_norm(r2, p.ln2_g, p.ln2_b, c.ln2);
    }
    cache.hidden = std::move(h);
    cache.valid = true;
    return cache;
}

Mat encode(const Parameters& params, const ModelConfig& config, const tok::AlignedSequence& seq,
           const AttentionMask& mask, bool train_mode, std::uint64_t rng_seed) {
    return forward(params, config, seq, mask, train_mode, rng_seed).hidden;
}

std::vector<std::vector<Mat>> attention_weights(const Parameters& params, const ModelConfig& config,
                                                const tok::AlignedSequence& seq, const AttentionMask& mask) {
    auto cache = forward(params, config, seq, mask, false, 0);
    std::vector<std::vector<Mat>> out;
    for (auto& l : cache.layers) {
        out.push_back(std::move(l.probs));
    }
    return out;
}

Mat mlm_logits(const Parameters& params, const Mat& hidden) {
    if (hidden.cols() != params.mlm_w.rows()) {
        throw ShapeError("mlm_logits: hidden width does not match head");
    }
    return affine(hidden, params.mlm_w, params.mlm_b);
}

RowVec pair_logits(const Parameters& params, const Mat& hidden) {
    if (hidden.rows() < 1 || hidden.cols() != params.pair_w.rows()) {
        throw ShapeError("pair_logits: hidden width does not match head");
    }
    return hidden.row(0) * params.pair_w + params.pair_b.row(0);
}

void backward(const Parameters& params, const ModelConfig& config, const ForwardCache& cache, const Mat& d_hidden,
              Parameters& grads) {
    if (!cache.valid) {
        throw MissingActivations();
    }
    if (d_hidden.rows() != cache.hidden.rows() || d_hidden.cols() != cache.hidden.cols()) {
        throw ShapeError("backward: gradient shape does not match hidden states");
    }
    const int dh = config.d / config.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat dh_out = d_hidden;
    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& p = params.layers[li];
        auto& g = grads.layers[li];
        const auto& c = cache.layers[li];

        const Mat dr2 = layer_norm_backward(dh_out, p.ln2_g, c.ln2, g.ln2_g, g.ln2_b);
        g.w2.noalias() += c.ffn_act.transpose() * dr2;
        g.b2 += dr2.colwise().sum();
        Mat df = dr2 * p.w2.transpose();
        df.array() *= c.ffn_pre.unaryExpr([](double x) { return gelu_grad(x); }).array();
        g.w1.noalias() += c.h1.transpose() * df;
        g.b1 += df.colwise().sum();
        Mat dh1 = dr2;
        dh1.noalias() += df * p.w1.transpose();

        const Mat dr1 = layer_norm_backward(dh1, p.ln1_g, c.ln1, g.ln1_g, g.ln1_b);
        g.wo.noalias() += c.context.transpose() * dr1;
        g.bo += dr1.colwise().sum();
        const Mat dctx = dr1 * p.wo.transpose();

        Mat dq(c.q.rows(), c.q.cols());
        Mat dk(c.k.rows(), c.k.cols());
        Mat dv(c.v.rows(), c.v.cols());
        for (int hd = 0; hd < config.heads; ++hd) {
            const Mat& P = c.probs[static_cast<std::size_t>(hd)];
            const auto dctx_h = dctx.middleCols(hd * dh, dh);
            dv.middleCols(hd * dh, dh).noalias() = P.transpose() * dctx_h;
            const Mat dP = dctx_h * c.v.middleCols(hd * dh, dh).transpose();
            const Eigen::VectorXd rowdot = (dP.array() * P.array()).rowwise().sum();
            Mat dS = P.array() * (dP.array().colwise() - rowdot.array());
            dS *= scale;
            dq.middleCols(hd * dh, dh).noalias() = dS * c.k.middleCols(hd * dh, dh);
            dk.middleCols(hd * dh, dh).noalias() = dS.transpose() * c.q.middleCols(hd * dh, dh);
        }
        g.wq.noalias() += c.input.transpose() * dq;
        g.bq += dq.colwise().sum();
        g.wk.noalias() += c.input.transpose() * dk;
        g.bk += dk.colwise().sum();
        g.wv.noalias() += c.input.transpose() * dv;
        g.bv += dv.colwise().sum();

        Mat d_in = dr1;
        d_in.noalias() += dq * p.wq.transpose();
        d_in.noalias() += dk * p.wk.transpose();
        d_in.noalias() += dv * p.wv.transpose();
        dh_out = std::move(d_in);
    }

    if (cache.dropout_mask.size() > 0) {
        dh_out.array() *= cache.dropout_mask.array();
    }
    const Mat d_combined = layer_norm_backward(dh_out, params.emb_ln_g, cache.emb_ln, grads.emb_ln_g, grads.emb_ln_b);
    const auto cg = embed::combine_backward(cache.components, params.strategy, d_combined);
    if (cg.raw_weights.size() > 0) {
        grads.strategy.raw_weights += cg.raw_weights;
    }
    if (cg.projection.size() > 0) {
        grads.strategy.projection += cg.projection;
        grads.strategy.projection_bias += cg.projection_bias;
    }
    embed::lookup_backward(cache.seq, cg.inputs, grads.tables);
    if (!config.structural) {
        grads.tables.depth.setZero();
        grads.tables.sibling.setZero();
    }
}

// ---------------------------------------------------------------------------
// Losses

namespace {

std::size_t total_count(const std::vector<Example>& batch, LossKind kind, int vocab_size) {
    std::size_t n = 0;
    for (const auto& ex : batch) {
        if (kind == LossKind::pair) {
            if (ex.pair_label != 0 && ex.pair_label != 1) {
                throw Error("pair label must be 0 or 1, got " + std::to_string(ex.pair_label));
            }
            ++n;
            continue;
        }
        if (ex.labels.size() != ex.input.ids.size()) {
            throw ShapeError("mlm labels must have one entry per position");
        }
        for (int l : ex.labels) {
            if (l == tok::kIgnoreLabel) {
                continue;
            }
            if (l < 0 || l >= vocab_size) {
                throw Error("mlm label " + std::to_string(l) + " outside vocabulary");
            }
            ++n;
        }
    }
    return n;
}

struct ExampleOut {
    double loss = 0.0;  // already divided by the batch denominator
    std::vector<int> predictions;
    std::vector<int> targets;
};

int argmax(const auto& row) {
    Eigen::Index best = 0;
    row.maxCoeff(&best);
    return static_cast<int>(best);
}

// Drops trailing padding. Padding never influences other rows (the mask hides
// PAD keys and a PAD query sees only itself) and carries no loss, so losses and
// gradients are unchanged.
tok::AlignedSequence without_padding(const tok::AlignedSequence& seq) {
    std::size_t len = seq.ids.size();
    while (len > 1 && seq.ids[len - 1] == tok::kPad) {
        --len;
    }
    if (len == seq.ids.size()) {
        return seq;
    }
    tok::AlignedSequence out;
    auto cut = [len](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        return v.size() < len ? v : V(v.begin(), v.begin() + static_cast<long>(len));
    };
    out.ids = cut(seq.ids);
    out.linear_pos = cut(seq.linear_pos);
    out.type_ids = cut(seq.type_ids);
    out.depth_idx = cut(seq.depth_idx);
    out.sibling_idx = cut(seq.sibling_idx);
    out.align_mask = cut(seq.align_mask);
    out.token_index = cut(seq.token_index);
    out.node = cut(seq.node);
    return out;
}

// Gradient accumulated into `grads` when non-null.
ExampleOut example_loss(const Parameters& params, const ModelConfig& config, const Example& ex, LossKind kind,
                        bool train_mode, double denom, Parameters* grads) {
    ExampleOut out;
    const tok::AlignedSequence input = without_padding(ex.input);
    const auto mask = build_tree_attention_mask(input, config);
    const ForwardCache cache = forward(params, config, input, mask, train_mode, ex.dropout_seed);
    Mat d_hidden;
    if (grads) {
        d_hidden = Mat::Zero(cache.hidden.rows(), cache.hidden.cols());
    }
    double loss = 0.0;
    if (kind == LossKind::mlm) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < ex.labels.size(); ++i) {
            if (ex.labels[i] != tok::kIgnoreLabel) {
                if (i >= input.ids.size()) {
                    throw Error("mlm label on a padding position");
                }
                rows.push_back(static_cast<Eigen::Index>(i));
            }
        }
        if (rows.empty()) {
            return out;
        }
        Mat h(static_cast<Eigen::Index>(rows.size()), cache.hidden.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            h.row(static_cast<Eigen::Index>(r)) = cache.hidden.row(rows[r]);
        }
        Mat z = affine(h, params.mlm_w, params.mlm_b);
        for (Eigen::Index r = 0; r < z.rows(); ++r) {
            const int label = ex.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])];
            out.predictions.push_back(argmax(z.row(r)));
            out.targets.push_back(label);
            const double m = z.row(r).maxCoeff();
            const double lse = m + std::log((z.row(r).array() - m).exp().sum());
            loss += lse - z(r, label);
            if (grads) {
                z.row(r) = (z.row(r).array() - lse).exp();
                z(r, label) -= 1.0;
            }
        }
        if (grads) {
            z /= denom;
            grads->mlm_w.noalias() += h.transpose() * z;
            grads->mlm_b += z.colwise().sum();
            const Mat dh = z * params.mlm_w.transpose();
            for (std::size_t r = 0; r < rows.size(); ++r) {
                d_hidden.row(rows[r]) += dh.row(static_cast<Eigen::Index>(r));
            }
        }
    } else {
        RowVec z = pair_logits(params, cache.hidden);
        const double m = z.maxCoeff();
        const double lse = m + std::log((z.array() - m).exp().sum());
        loss = lse - z(ex.pair_label);
        out.predictions.push_back(argmax(z));
        out.targets.push_back(ex.pair_label);
        if (grads) {
            RowVec dz = (z.array() - lse).exp();
            dz(ex.pair_label) -= 1.0;
            dz /= denom;
            grads->pair_w.noalias() += cache.hidden.row(0).transpose() * dz;
            grads->pair_b += dz;
            d_hidden.row(0) += dz * params.pair_w.transpose();
        }
    }
    if (grads) {
        backward(params, config, cache, d_hidden, *grads);
    }
    out.loss = loss / denom;
    return out;
}

}  // namespace

BatchLoss batch_loss(const Parameters& params, const ModelConfig& config, const std::vector<Example>& batch,
                     LossKind kind, bool train_mode, Parameters* grads, int threads) {
    BatchLoss result;
    result.count = total_count(batch, kind, config.vocab_size);
    if (result.count == 0) {
        return result;
    }
    const double denom = static_cast<double>(result.count);
    const std::size_t n = batch.size();
    std::vector<ExampleOut> outs(n);

    if (threads <= 1 || n <= 1) {
        Parameters buffer;
        if (grads) {
            buffer = grads->zeros_like();
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (grads) {
                buffer.set_zero();
            }
            outs[i] = example_loss(params, config, batch[i], kind, train_mode, denom, grads ? &buffer : nullptr);
            if (grads) {
                grads->add_scaled(buffer);
            }
        }
    } else {
        std::vector<Parameters> buffers;
        if (grads) {
            buffers.assign(n, grads->zeros_like());
        }
        const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < n; i += workers) {
                        outs[i] = example_loss(params, config, batch[i], kind, train_mode, denom,
                                               grads ? &buffers[i] : nullptr);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
        for (const auto& e : errors) {
            if (e) {
                std::rethrow_exception(e);
            }
        }
        if (grads) {
            for (const auto& b : buffers) {
                grads->add_scaled(b);
            }
        }
    }
    for (auto& o : outs) {
        result.loss += o.loss;
        result.predictions.insert(result.predictions.end(), o.predictions.begin(), o.predictions.end());
        result.targets.insert(result.targets.end(), o.targets.begin(), o.targets.end());
    }
    return result;
}

Parameters gradients(const Parameters& params, const ModelConfig& config, const std::vector<Example>& batch,
                     LossKind kind, bool train_mode, int threads) {
    Parameters g = params.zeros_like();
    batch_loss(params, config, batch, kind, train_mode, &g, threads);
    return g;
}

}  // namespace treepos::model
