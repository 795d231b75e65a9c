#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "treepos/common.hpp"
#include "treepos/tokenize.hpp"

namespace treepos::embed {

enum class StrategyKind { sum, weighted_sum, concat };

std::string to_string(StrategyKind kind);
StrategyKind strategy_from_string(std::string_view name);

inline constexpr int kNumComponents = 5;

// Component order used everywhere: word, linear position, token type, depth, sibling.
inline constexpr std::array<const char*, kNumComponents> kComponentNames = {"word", "position", "token_type", "depth",
                                                                             "sibling"};

struct EmbeddingTables {
    Mat word;        // vocab_size x d
    Mat linear_pos;  // max_len x d
    Mat token_type;  // 2 x d
    Mat depth;       // depth_table_size x d, row 0 reserved
    Mat sibling;     // sibling_table_size x d, row 0 reserved

    Eigen::Index width() const { return word.cols(); }
};

struct CombineStrategy {
    StrategyKind kind = StrategyKind::sum;
    Mat raw_weights;      // 1 x 5, weighted_sum only
    Mat projection;       // 3d x d, concat only
    Mat projection_bias;  // 1 x d, concat only

    static CombineStrategy sum();
    static CombineStrategy weighted(Eigen::Index components = kNumComponents);
    static CombineStrategy concat(Eigen::Index d);
};

// One matrix per table, rows gathered by the sequence's indices.
struct Components {
    std::array<Mat, kNumComponents> parts;

    Mat& word() { return parts[0]; }
    Mat& pos() { return parts[1]; }
    Mat& type() { return parts[2]; }
    Mat& depth() { return parts[3]; }
    Mat& sibling() { return parts[4]; }
    const Mat& word() const { return parts[0]; }
    const Mat& pos() const { return parts[1]; }
    const Mat& type() const { return parts[2]; }
    const Mat& depth() const { return parts[3]; }
    const Mat& sibling() const { return parts[4]; }
};

Components lookup(const EmbeddingTables& tables, const tok::AlignedSequence& seq);

Mat combine_sum(const Components& c);

// softmax(raw_weights) in component order.
std::array<double, kNumComponents> coefficients(const CombineStrategy& strategy);

Mat combine_weighted(const Components& c, const CombineStrategy& strategy);
Mat combine_concat(const Components& c, const CombineStrategy& strategy);

// Dispatches on strategy.kind.
Mat combine(const Components& c, const CombineStrategy& strategy);

// Gradients flowing out of combine(): per-component input gradients plus the
// strategy's own parameters (left empty for strategies that have none).
struct CombineGrads {
    Components inputs;
    Mat raw_weights;
    Mat projection;
    Mat projection_bias;
};

CombineGrads combine_backward(const Components& c, const CombineStrategy& strategy, const Mat& d_out);

// Scatter-adds component gradients into table-shaped accumulators.
void lookup_backward(const tok::AlignedSequence& seq, const Components& d_components, EmbeddingTables& d_tables);

std::int64_t count_extra_params(std::int64_t depth_table_size, std::int64_t sibling_table_size, std::int64_t d,
                                StrategyKind kind);

}  // namespace treepos::embed
