#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "treepos/ast.hpp"

namespace treepos::tok {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kCls = 2;
inline constexpr int kSep = 3;
inline constexpr int kMask = 4;
inline constexpr int kNumSpecial = 5;

// Label value for positions that do not contribute to the MLM loss.
inline constexpr int kIgnoreLabel = -100;

class Vocab {
public:
    // Specials only.
    Vocab();

    std::size_t size() const { return tokens_.size(); }
    std::optional<int> id_of(std::string_view token) const;
    const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::size_t longest_token() const { return longest_; }

    // Returns the id, adding the token when new.
    int add(std::string token);

    // One token per line, line number = id. Bytes outside printable ASCII and
    // the backslash are escaped (\n, \t, \r, \\, \xHH).
    std::string serialize() const;
    static Vocab deserialize(std::string_view text);
    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

    static bool is_special(int id) { return id >= 0 && id < kNumSpecial; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    std::size_t longest_ = 0;
};

// Deterministic greedy byte-pair merging. Text is first split into words
// (identifier-character runs, whitespace runs, single other bytes); merges
// never cross word boundaries.
Vocab train_vocab(std::span<const std::string> corpus, std::size_t target_size);

// Merge sequence of the most recent train_vocab call, exposed for tests.
struct MergeTrace {
    std::vector<std::pair<std::string, std::string>> merges;
};
Vocab train_vocab(std::span<const std::string> corpus, std::size_t target_size, MergeTrace* trace);

struct TokenizedCode {
    std::vector<int> ids;
    std::vector<ast::SourceSpan> spans;
};

// Greedy longest match over the vocabulary; unmatched bytes become UNK.
TokenizedCode tokenize(std::string_view source, const Vocab& vocab);

struct TableSizes {
    int depth = 514;
    int sibling = 514;
};

struct AlignedSequence {
    std::vector<int> ids;
    std::vector<int> linear_pos;
    std::vector<int> type_ids;
    std::vector<int> depth_idx;
    std::vector<int> sibling_idx;
    std::vector<int> align_mask;
    // Not model inputs: index into the source TokenizedCode (-1 for specials
    // and padding) and the owning AST node (-1 when unaligned).
    std::vector<int> token_index;
    std::vector<long> node;

    std::size_t max_len() const { return ids.size(); }
    // Number of non-PAD positions.
    std::size_t length() const;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

// Deepest node whose span contains `byte`, or nullopt.
std::optional<ast::NodeId> owning_node(const ast::Ast& ast, std::size_t byte);

AlignedSequence align(const TokenizedCode& tokens, const ast::Ast& ast, std::size_t max_len, int segment,
                      TableSizes tables = {});

// CLS code1 SEP SEP code2 SEP; type id 0 for the first three-part segment and
// 1 for the second. Longer segments are truncated first.
AlignedSequence align_pair(const TokenizedCode& first, const ast::Ast& first_ast, const TokenizedCode& second,
                           const ast::Ast& second_ast, std::size_t max_len, TableSizes tables = {});

}  // namespace treepos::tok
