#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "treepos/embed.hpp"
#include "treepos/model.hpp"
#include "treepos/train.hpp"

namespace treepos::analysis {

// ---------------------------------------------------------------------------
// Coefficient trajectories

struct TrajectoryRow {
    std::int64_t step = 0;
    std::array<double, embed::kNumComponents> coefficients{};  // word, position, token_type, depth, sibling
};

struct TrajectoryLog {
    std::vector<TrajectoryRow> rows;
};

class WrongStrategy : public Error {
public:
    explicit WrongStrategy(embed::StrategyKind kind)
        : Error("coefficient trajectories need the weighted_sum strategy, run used " + embed::to_string(kind)) {}
};

// One row per optimizer step holding the coefficients that step used.
TrajectoryLog log_trajectory(const train::TrainResult& run, const model::ModelConfig& config);

inline constexpr const char* kTrajectoryHeader = "step,word,position,token_type,depth,sibling";
std::string trajectory_csv(const TrajectoryLog& log);

// ---------------------------------------------------------------------------
// Hidden-state export

struct HiddenExport {
    std::vector<std::string> doc_id;
    std::vector<int> token_index;
    std::vector<double> normalized_depth;
    Mat hidden;  // rows x d

    std::size_t rows() const { return doc_id.size(); }
};

class CorpusMismatch : public Error {
public:
    using Error::Error;
};

// Final-layer states of every aligned token (specials and PAD excluded).
HiddenExport export_hidden(const model::Parameters& params, const model::ModelConfig& config,
                           const std::vector<train::PreparedDoc>& docs);
// Tokenizes with the checkpoint's vocabulary; fails when it has none or when
// the vocabulary and model disagree.
HiddenExport export_hidden(const train::Checkpoint& ckpt, const std::vector<train::Document>& docs);

std::string hidden_tsv(const HiddenExport& ex);
HiddenExport parse_hidden_tsv(std::string_view text);

// ---------------------------------------------------------------------------
// 2-D projection

enum class Projection { pca, tsne };
Projection projection_from_string(std::string_view name);

class TooFewRows : public Error {
public:
    TooFewRows(std::size_t have, std::size_t need)
        : Error("need at least " + std::to_string(need) + " rows, got " + std::to_string(have)) {}
};

// Scores on the top two principal components of the mean-centred rows. Each
// component's largest-magnitude loading is made positive.
Mat pca_2d(const Mat& x);

struct TsneOptions {
    double perplexity = 30.0;  // replaced by n / 4 when n < 120
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
};

// Exact O(n^2) t-SNE.
Mat tsne_2d(const Mat& x, std::uint64_t seed, const TsneOptions& options = {});

struct Projected {
    std::vector<std::string> doc_id;
    std::vector<int> token_index;
    Mat xy;  // rows x 2
    std::vector<double> normalized_depth;
};

Projected project_2d(const HiddenExport& ex, Projection method, std::uint64_t seed);

inline constexpr const char* kProjectionHeader = "doc_id,token_index,x,y,normalized_depth";
std::string projection_csv(const Projected& p);

struct Rgb {
    std::uint8_t r, g, b;
};
// 256-step ramp interpolated between five viridis anchors
// (#440154, #3b528b, #21918c, #5ec962, #fde725); t is clamped to [0, 1].
Rgb depth_color(double t);
std::string projection_svg(const Projected& p, int size = 640);

// ---------------------------------------------------------------------------
// Depth probe

// Held-out coefficient of determination; 0 when the held-out targets are constant.
double r_squared(const std::vector<double>& y, const std::vector<double>& prediction);

struct ProbeFit {
    double r2 = 0.0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
};

// Least squares with intercept (ridge 1e-6 on the slopes keeps rank-deficient
// designs solvable) on a fixed 80/20 row split; returns held-out R^2.
ProbeFit depth_probe_fit(const Mat& x, const std::vector<double>& y);
double depth_probe(const HiddenExport& ex);

// ---------------------------------------------------------------------------
// Synthetic depth-probe corpus

struct GenOptions {
    std::size_t n_docs = 2000;
    std::size_t n_pairs = 2000;  // balanced; even indices are positives
    std::uint64_t seed = 12345;
};

struct ProbeCorpus {
    std::vector<train::Document> docs;
    std::vector<train::CodePair> pairs;
};

// Programs nest if/while blocks to a depth drawn uniformly from 1..6; the block
// at nesting level k assigns the identifier `v<k>`.
ProbeCorpus gen_depth_probe_corpus(const GenOptions& options);

// Nesting level of an assignment target at AST depth `depth`, or 0 if no
// level produces that depth.
int level_for_depth(int depth);

// Assignment targets of a prepared document and the sequence positions of
// their tokens.
struct IdentifierSite {
    ast::NodeId node = 0;
    std::string name;
    int depth = 0;
    std::vector<std::size_t> positions;
};
std::vector<IdentifierSite> identifier_sites(const train::PreparedDoc& doc);

struct ProbeAccuracy {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

// Every assignment-target token of a document is replaced by MASK at once; a
// site counts as correct when all of its tokens are predicted exactly.
ProbeAccuracy masked_identifier_accuracy(const model::Parameters& params, const model::ModelConfig& config,
                                         const std::vector<train::PreparedDoc>& docs);

}  // namespace treepos::analysis
