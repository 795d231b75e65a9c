#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "treepos/ast.hpp"
#include "treepos/common.hpp"
#include "treepos/model.hpp"
#include "treepos/tokenize.hpp"

namespace treepos::testing {

// Random program over the whole mini-language grammar (params, calls with
// arguments, parens, every operator, return/if/else/while).
class ProgramGen {
public:
    explicit ProgramGen(std::uint64_t seed) : rng_(seed) {}

    std::string program() {
        std::string out;
        const auto fns = 1 + rng_.below(3);
        for (std::uint64_t i = 0; i < fns; ++i) {
            out += function();
            out += rng_.below(2) ? "\n" : " ";
        }
        return out;
    }

private:
    std::string ident() {
        static const char* names[] = {"a", "b", "x", "y", "foo", "_t1", "count", "g"};
        return names[rng_.below(8)];
    }

    std::string function() {
        std::string s = "fn " + ident() + "(";
        const auto params = rng_.below(4);
        for (std::uint64_t i = 0; i < params; ++i) {
            s += (i ? ", " : "") + ident();
        }
        return s + ") " + block(0);
    }

    std::string block(int level) {
        std::string s = "{";
        const auto n = rng_.below(4);
        for (std::uint64_t i = 0; i < n; ++i) {
            s += stmt(level);
        }
        return s + "}";
    }

    std::string stmt(int level) {
        const auto r = rng_.below(level < 4 ? 6 : 3);
        switch (r) {
            case 0: return ident() + " = " + expr(0) + ";";
            case 1: return "return " + expr(0) + ";";
            case 2: return expr(0) + ";";
            case 3: return "while (" + expr(0) + ") " + block(level + 1);
            default: {
                std::string s = "if(" + expr(0) + ")" + block(level + 1);
                if (rng_.below(2)) {
                    s += " else " + block(level + 1);
                }
                return s;
            }
        }
    }

    std::string term(int level) {
        const auto r = rng_.below(level < 3 ? 4 : 2);
        switch (r) {
            case 0: return ident();
            case 1: return std::to_string(rng_.below(1000));
            case 2: {
                std::string s = ident() + "(";
                const auto args = rng_.below(3);
                for (std::uint64_t i = 0; i < args; ++i) {
                    s += (i ? "," : "") + expr(level + 1);
                }
                return s + ")";
            }
            default: return "(" + expr(level + 1) + ")";
        }
    }

    std::string expr(int level) {
        static const char* ops[] = {"+", "-", "*", "/", "<", ">", "=="};
        std::string s = term(level);
        const auto n = rng_.below(3);
        for (std::uint64_t i = 0; i < n; ++i) {
            s += std::string(" ") + ops[rng_.below(7)] + " " + term(level);
        }
        return s;
    }

    Rng rng_;
};

// Depth by counting parent links up to the root.
inline int path_depth(const ast::Ast& t, ast::NodeId id) {
    int d = 1;
    while (t.node(id).parent) {
        id = *t.node(id).parent;
        ++d;
    }
    return d;
}

// 1-based slot of a node among its parent's children (1 for the root).
inline int path_slot(const ast::Ast& t, ast::NodeId id) {
    const auto& p = t.node(id).parent;
    if (!p) {
        return 1;
    }
    const auto& kids = t.node(*p).children;
    for (std::size_t j = 0; j < kids.size(); ++j) {
        if (kids[j] == id) {
            return static_cast<int>(j) + 1;
        }
    }
    return -1;
}

inline model::ModelConfig tiny_config(embed::StrategyKind kind, bool tree_mask = true) {
    model::ModelConfig c;
    c.layers = 2;
    c.d = 8;
    c.heads = 2;
    c.ffn_width = 16;
    c.max_len = 12;
    c.vocab_size = 50;
    c.depth_table_size = 10;
    c.sibling_table_size = 10;
    c.strategy = kind;
    c.dropout_rate = 0.0;
    c.tree_mask_enabled = tree_mask;
    return c;
}

// Hand-built sequence: CLS, tokens, SEP, PAD; structural indices cycle.
inline tok::AlignedSequence toy_sequence(const model::ModelConfig& c, std::size_t real, std::uint64_t seed,
                                         int segment_split = -1) {
    Rng rng(seed);
    tok::AlignedSequence s;
    const auto n = static_cast<std::size_t>(c.max_len);
    for (std::size_t i = 0; i < n; ++i) {
        const bool is_tok = i >= 1 && i <= real;
        int id = tok::kPad;
        if (i == 0) {
            id = tok::kCls;
        } else if (is_tok) {
            id = 5 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.vocab_size - 5)));
        } else if (i == real + 1) {
            id = tok::kSep;
        }
        s.ids.push_back(id);
        s.linear_pos.push_back(static_cast<int>(i));
        s.type_ids.push_back(segment_split >= 0 && static_cast<int>(i) >= segment_split ? 1 : 0);
        s.depth_idx.push_back(is_tok ? 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.depth_table_size - 1))) : 0);
        s.sibling_idx.push_back(is_tok ? 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.sibling_table_size - 1))) : 0);
        s.align_mask.push_back(is_tok ? 1 : 0);
        s.token_index.push_back(is_tok ? static_cast<int>(i - 1) : -1);
        s.node.push_back(is_tok ? static_cast<long>(i) : -1);
    }
    return s;
}

// Parameters with every tensor filled from N(0, scale), gains around 1.
inline model::Parameters random_params(const model::ModelConfig& c, std::uint64_t seed, double scale = 0.3) {
    auto p = model::Parameters::zeros(c);
    Rng rng(seed);
    p.for_each([&](const std::string& name, Mat& m, model::Decay) {
        const bool gain = name.find("gain") != std::string::npos;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = (gain ? 1.0 : 0.0) + scale * rng.normal();
        }
    });
    return p;
}

inline std::vector<model::Example> mlm_batch(const model::ModelConfig& c, std::uint64_t seed) {
    std::vector<model::Example> batch;
    for (std::uint64_t e = 0; e < 2; ++e) {
        model::Example ex;
        ex.input = toy_sequence(c, 6 + e * 2, seed + e);
        ex.labels.assign(ex.input.ids.size(), tok::kIgnoreLabel);
        ex.labels[2] = 7;
        ex.labels[4] = 11 + static_cast<int>(e);
        ex.input.ids[2] = tok::kMask;
        batch.push_back(std::move(ex));
    }
    return batch;
}

inline std::vector<model::Example> pair_batch(const model::ModelConfig& c, std::uint64_t seed) {
    std::vector<model::Example> batch;
    for (std::uint64_t e = 0; e < 2; ++e) {
        model::Example ex;
        ex.input = toy_sequence(c, 8, seed + e, 5);
        ex.pair_label = static_cast<int>(e);
        batch.push_back(std::move(ex));
    }
    return batch;
}

// Per tensor: ||analytic - numeric|| / max(||analytic||, ||numeric||), central
// differences with step 1e-5. Both norms below 1e-9 counts as agreement.
inline std::vector<std::pair<std::string, double>> gradient_errors(model::Parameters params,
                                                                   const model::ModelConfig& c,
                                                                   const std::vector<model::Example>& batch,
                                                                   model::LossKind kind) {
    const model::Parameters g = model::gradients(params, c, batch, kind, false);
    std::vector<const Mat*> analytic;
    g.for_each([&](const std::string&, const Mat& m, model::Decay) { analytic.push_back(&m); });
    std::vector<std::pair<std::string, double>> out;
    std::size_t t = 0;
    params.for_each([&](const std::string& name, Mat& m, model::Decay) {
        const Mat& a = *analytic[t++];
        Mat numeric(m.rows(), m.cols());
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double keep = m.data()[i];
            m.data()[i] = keep + 1e-5;
            const double up = model::batch_loss(params, c, batch, kind, false, nullptr).loss;
            m.data()[i] = keep - 1e-5;
            const double down = model::batch_loss(params, c, batch, kind, false, nullptr).loss;
            m.data()[i] = keep;
            numeric.data()[i] = (up - down) / 2e-5;
        }
        const double scale = std::max(a.norm(), numeric.norm());
        const double err = scale < 1e-9 ? 0.0 : (a - numeric).norm() / scale;
        out.emplace_back(name, err);
    });
    return out;
}

}  // namespace treepos::testing
