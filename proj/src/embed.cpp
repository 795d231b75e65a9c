#include "treepos/embed.hpp"

#include <algorithm>
#include <cmath>

namespace treepos::embed {

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::sum: return "sum";
        case StrategyKind::weighted_sum: return "weighted_sum";
        case StrategyKind::concat: return "concat";
    }
    return "?";
}

StrategyKind strategy_from_string(std::string_view name) {
    if (name == "sum") return StrategyKind::sum;
    if (name == "weighted_sum" || name == "weighted-sum") return StrategyKind::weighted_sum;
    if (name == "concat") return StrategyKind::concat;
    throw ConfigError("unknown strategy '" + std::string(name) + "' (expected sum, weighted_sum or concat)");
}

CombineStrategy CombineStrategy::sum() { return CombineStrategy{}; }

CombineStrategy CombineStrategy::weighted(Eigen::Index components) {
    CombineStrategy s;
    s.kind = StrategyKind::weighted_sum;
    s.raw_weights = Mat::Zero(1, components);
    return s;
}

CombineStrategy CombineStrategy::concat(Eigen::Index d) {
    CombineStrategy s;
    s.kind = StrategyKind::concat;
    s.projection = Mat::Zero(3 * d, d);
    s.projection_bias = Mat::Zero(1, d);
    return s;
}

namespace {

void gather(const Mat& table, const std::vector<int>& idx, const char* name, Mat& out) {
    out.resize(static_cast<Eigen::Index>(idx.size()), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= table.rows()) {
            throw ShapeError(std::string("lookup: ") + name + " index " + std::to_string(idx[i]) + " at position " +
                             std::to_string(i) + " outside table of " + std::to_string(table.rows()) + " rows");
        }
        out.row(static_cast<Eigen::Index>(i)) = table.row(idx[i]);
    }
}

void scatter(const Mat& grad, const std::vector<int>& idx, Mat& table_grad) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
        table_grad.row(idx[i]) += grad.row(static_cast<Eigen::Index>(i));
    }
}

void check_shapes(const Components& c) {
    for (const auto& p : c.parts) {
        if (p.rows() != c.word().rows() || p.cols() != c.word().cols()) {
            throw ShapeError("combine: component shapes disagree");
        }
    }
}

}  // namespace

Components lookup(const EmbeddingTables& tables, const tok::AlignedSequence& seq) {
    const Eigen::Index d = tables.width();
    for (const Mat* t : {&tables.linear_pos, &tables.token_type, &tables.depth, &tables.sibling}) {
        if (t->cols() != d) {
            throw ShapeError("lookup: embedding tables must share width");
        }
    }
    Components c;
    gather(tables.word, seq.ids, "word", c.word());
    gather(tables.linear_pos, seq.linear_pos, "linear_pos", c.pos());
    gather(tables.token_type, seq.type_ids, "token_type", c.type());
    gather(tables.depth, seq.depth_idx, "depth", c.depth());
    gather(tables.sibling, seq.sibling_idx, "sibling", c.sibling());
    return c;
}

Mat combine_sum(const Components& c) {
    check_shapes(c);
    return c.word() + c.pos() + c.type() + c.depth() + c.sibling();
}

std::array<double, kNumComponents> coefficients(const CombineStrategy& strategy) {
    if (strategy.kind != StrategyKind::weighted_sum || strategy.raw_weights.size() != kNumComponents) {
        throw ConfigError("coefficients: strategy is not weighted_sum");
    }
    const double* r = strategy.raw_weights.data();
    const double m = *std::max_element(r, r + kNumComponents);
    std::array<double, kNumComponents> out{};
    double z = 0.0;
    for (int i = 0; i < kNumComponents; ++i) {
        out[i] = std::exp(r[i] - m);
        z += out[i];
    }
    for (auto& v : out) {
        v /= z;
    }
    return out;
}

Mat combine_weighted(const Components& c, const CombineStrategy& strategy) {
    check_shapes(c);
    const auto coef = coefficients(strategy);
    Mat out = coef[0] * c.parts[0];
    for (int i = 1; i < kNumComponents; ++i) {
        out += coef[i] * c.parts[i];
    }
    return out;
}

Mat combine_concat(const Components& c, const CombineStrategy& strategy) {
    check_shapes(c);
    const Eigen::Index d = c.word().cols();
    if (strategy.kind != StrategyKind::concat || strategy.projection.rows() != 3 * d ||
        strategy.projection.cols() != d || strategy.projection_bias.cols() != d) {
        throw ShapeError("combine_concat: projection must be 3d x d with a 1 x d bias");
    }
    const Mat standard = c.word() + c.pos() + c.type();
    Mat out = standard * strategy.projection.topRows(d);
    out.noalias() += c.depth() * strategy.projection.middleRows(d, d);
    out.noalias() += c.sibling() * strategy.projection.bottomRows(d);
    out.rowwise() += strategy.projection_bias.row(0);
    return out;
}

Mat combine(const Components& c, const CombineStrategy& strategy) {
    switch (strategy.kind) {
        case StrategyKind::sum: return combine_sum(c);
        case StrategyKind::weighted_sum: return combine_weighted(c, strategy);
        case StrategyKind::concat: return combine_concat(c, strategy);
    }
    throw ConfigError("combine: unknown strategy");
}

CombineGrads combine_backward(const Components& c, const CombineStrategy& strategy, const Mat& d_out) {
    check_shapes(c);
    if (d_out.rows() != c.word().rows() || d_out.cols() != c.word().cols()) {
        throw ShapeError("combine_backward: gradient shape mismatch");
    }
    CombineGrads g;
    switch (strategy.kind) {
        case StrategyKind::sum:
            for (auto& p : g.inputs.parts) {
                p = d_out;
            }
            break;
        case StrategyKind::weighted_sum: {
            const auto coef = coefficients(strategy);
            std::array<double, kNumComponents> d_coef{};
            double dot = 0.0;
            for (int i = 0; i < kNumComponents; ++i) {
                g.inputs.parts[i] = coef[i] * d_out;
                d_coef[i] = (d_out.array() * c.parts[i].array()).sum();
                dot += coef[i] * d_coef[i];
            }
            g.raw_weights.resize(1, kNumComponents);
            for (int i = 0; i < kNumComponents; ++i) {
                g.raw_weights(0, i) = coef[i] * (d_coef[i] - dot);
            }
            break;
        }
        case StrategyKind::concat: {
            const Eigen::Index d = c.word().cols();
            const Mat standard = c.word() + c.pos() + c.type();
            g.projection.resize(3 * d, d);
            g.projection.topRows(d).noalias() = standard.transpose() * d_out;
            g.projection.middleRows(d, d).noalias() = c.depth().transpose() * d_out;
            g.projection.bottomRows(d).noalias() = c.sibling().transpose() * d_out;
            g.projection_bias = d_out.colwise().sum();
            const Mat d_standard = d_out * strategy.projection.topRows(d).transpose();
            g.inputs.word() = d_standard;
            g.inputs.pos() = d_standard;
            g.inputs.type() = d_standard;
            g.inputs.depth() = d_out * strategy.projection.middleRows(d, d).transpose();
            g.inputs.sibling() = d_out * strategy.projection.bottomRows(d).transpose();
            break;
        }
    }
    return g;
}

void lookup_backward(const tok::AlignedSequence& seq, const Components& d_components, EmbeddingTables& d_tables) {
    scatter(d_components.word(), seq.ids, d_tables.word);
    scatter(d_components.pos(), seq.linear_pos, d_tables.linear_pos);
    scatter(d_components.type(), seq.type_ids, d_tables.token_type);
    scatter(d_components.depth(), seq.depth_idx, d_tables.depth);
    scatter(d_components.sibling(), seq.sibling_idx, d_tables.sibling);
}

std::int64_t count_extra_params(std::int64_t depth_table_size, std::int64_t sibling_table_size, std::int64_t d,
                                StrategyKind kind) {
    std::int64_t n = (depth_table_size + sibling_table_size) * d;
    switch (kind) {
        case StrategyKind::sum: break;
        case StrategyKind::weighted_sum: n += kNumComponents; break;
        case StrategyKind::concat: n += 3 * d * d + d; break;
    }
    return n;
}

}  // namespace treepos::embed
