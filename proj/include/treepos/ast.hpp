#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "treepos/common.hpp"

namespace treepos::ast {

struct SourceSpan {
    std::size_t start_byte = 0;
    std::size_t end_byte = 0;  // exclusive

    bool contains(std::size_t byte) const { return start_byte <= byte && byte < end_byte; }
    bool encloses(const SourceSpan& other) const {
        return start_byte <= other.start_byte && other.end_byte <= end_byte;
    }
    bool operator==(const SourceSpan&) const = default;
};

// Hierarchical position of a node: root is (1, 1); a child in slot j of a
// parent at depth d is (d + 1, j).
struct HierPos {
    int depth = 0;
    int sibling_index = 0;
    bool operator==(const HierPos&) const = default;
};

using NodeId = std::size_t;

struct AstNode {
    std::string kind;
    SourceSpan span;
    std::vector<NodeId> children;
    std::optional<NodeId> parent;
    std::optional<HierPos> position;
};

// Arena-backed tree. Nodes are stored in pre-order, so the root is node 0 and
// every parent precedes its children.
struct Ast {
    std::string source;
    std::vector<AstNode> nodes;

    static constexpr NodeId root = 0;

    std::size_t node_count() const { return nodes.size(); }
    const AstNode& node(NodeId id) const { return nodes.at(id); }
    AstNode& node(NodeId id) { return nodes.at(id); }
    bool has_positions() const;
    int max_depth() const;
};

class ParseError : public Error {
public:
    ParseError(std::size_t offset, std::string expected);
    std::size_t offset() const { return offset_; }
    const std::string& expected() const { return expected_; }

private:
    std::size_t offset_;
    std::string expected_;
};

class SchemaError : public Error {
public:
    SchemaError(std::string path, std::string message);
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class PositionsMissing : public Error {
public:
    PositionsMissing() : Error("hierarchical positions have not been assigned") {}
};

// Recursive-descent parser for the built-in mini-language. Punctuation leaves
// are kinded by their literal text, keywords by text + "_kw" (fn_kw), so leaf
// spans tile every non-whitespace, non-comment byte of the source.
Ast parse_mini(std::string_view source);

// Reads an AST-JSON document. Accepts either a bare node object or a wrapper
// {"source": ..., "root": node}. `source` overrides the embedded text.
Ast import_ast(std::string_view serialized, std::optional<std::string> source = std::nullopt);

// Serialises to AST-JSON; when `with_positions` each node carries
// "position": [depth, sibling].
std::string export_ast(const Ast& ast, bool with_positions = false, int indent = -1);

// Structural checks shared by the importer and tests. Throws SchemaError.
void validate(const Ast& ast);

void assign_positions_inplace(Ast& ast);
Ast assign_positions(Ast ast);

// Indexed by NodeId.
std::vector<double> normalized_depths(const Ast& ast);

// Pre-order canonical form with children sorted, used for clone isomorphism.
std::string unordered_shape(const Ast& ast, NodeId id = Ast::root);

}  // namespace treepos::ast
