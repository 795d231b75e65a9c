#include "treepos/ast.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <memory>

#include "json.hpp"

namespace treepos::ast {

ParseError::ParseError(std::size_t offset, std::string expected)
    : Error("syntax error at byte " + std::to_string(offset) + ": expected " + expected),
      offset_(offset),
      expected_(std::move(expected)) {}

SchemaError::SchemaError(std::string path, std::string message)
    : Error("schema violation at " + path + ": " + message), path_(std::move(path)) {}

bool Ast::has_positions() const {
    return !nodes.empty() &&
           std::all_of(nodes.begin(), nodes.end(), [](const AstNode& n) { return n.position.has_value(); });
}

int Ast::max_depth() const {
    if (!has_positions()) {
        throw PositionsMissing();
    }
    int best = 0;
    for (const auto& n : nodes) {
        best = std::max(best, n.position->depth);
    }
    return best;
}

namespace {

// Intermediate owning tree; flattened into the arena once complete.
struct Tmp {
    std::string kind;
    SourceSpan span;
    std::vector<Tmp> children;
};

Tmp leaf(std::string kind, std::size_t start, std::size_t end) {
    return Tmp{std::move(kind), {start, end}, {}};
}

void flatten(Tmp& t, std::optional<NodeId> parent, Ast& out) {
    const NodeId id = out.nodes.size();
    out.nodes.push_back(AstNode{std::move(t.kind), t.span, {}, parent, std::nullopt});
    if (parent) {
        out.nodes[*parent].children.push_back(id);
    }
    for (auto& c : t.children) {
        flatten(c, id, out);
    }
}

enum class Tok { ident, integer, keyword, punct, end };

struct Lexeme {
    Tok type = Tok::end;
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;
};

bool is_keyword(std::string_view s) {
    return s == "fn" || s == "return" || s == "if" || s == "else" || s == "while";
}

std::vector<Lexeme> lex(std::string_view src) {
    std::vector<Lexeme> out;
    std::size_t i = 0;
    const auto n = src.size();
    auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
    auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
    while (i < n) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n') {
                ++i;
            }
            continue;
        }
        const std::size_t start = i;
        if (ident_start(c)) {
            while (i < n && ident_char(src[i])) {
                ++i;
            }
            std::string text(src.substr(start, i - start));
            const Tok t = is_keyword(text) ? Tok::keyword : Tok::ident;
            out.push_back({t, std::move(text), start, i});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            while (i < n && std::isdigit(static_cast<unsigned char>(src[i]))) {
                ++i;
            }
            out.push_back({Tok::integer, std::string(src.substr(start, i - start)), start, i});
            continue;
        }
        if (c == '=' && i + 1 < n && src[i + 1] == '=') {
            i += 2;
            out.push_back({Tok::punct, "==", start, i});
            continue;
        }
        static constexpr std::string_view kPunct = "(){},;=+-*/<>";
        if (kPunct.find(c) != std::string_view::npos) {
            ++i;
            out.push_back({Tok::punct, std::string(1, c), start, i});
            continue;
        }
        throw ParseError(start, "a token (unexpected character '" + std::string(1, c) + "')");
    }
    out.push_back({Tok::end, "", n, n});
    return out;
}

class Parser {
public:
    explicit Parser(std::string_view src) : toks_(lex(src)) {}

    // The program node spans the whole text, including surrounding whitespace.
    Tmp program(std::size_t source_size) {
        Tmp root{"program", {0, source_size}, {}};
        while (peek().type != Tok::end) {
            root.children.push_back(function());
        }
        return root;
    }

private:
    const Lexeme& peek(std::size_t ahead = 0) const {
        return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
    }

    bool at(std::string_view text) const {
        const auto& t = peek();
        return (t.type == Tok::punct || t.type == Tok::keyword) && t.text == text;
    }

    Tmp expect(std::string_view text) {
        if (!at(text)) {
            fail("'" + std::string(text) + "'");
        }
        const auto& t = toks_[pos_++];
        // Keyword leaves get a suffix so they never collide with statement kinds.
        return leaf(t.type == Tok::keyword ? t.text + "_kw" : t.text, t.start, t.end);
    }

    Tmp identifier() {
        if (peek().type != Tok::ident) {
            fail("identifier");
        }
        const auto& t = toks_[pos_++];
        return leaf("identifier", t.start, t.end);
    }

    [[noreturn]] void fail(const std::string& what) const {
        const auto& t = peek();
        const std::string found = t.type == Tok::end ? "end of input" : "'" + t.text + "'";
        throw ParseError(t.start, what + " but found " + found);
    }

    static Tmp node(std::string kind, std::vector<Tmp> children) {
        SourceSpan span{children.front().span.start_byte, children.back().span.end_byte};
        return Tmp{std::move(kind), span, std::move(children)};
    }

    Tmp function() {
        std::vector<Tmp> kids;
        kids.push_back(expect("fn"));
        kids.push_back(identifier());
        kids.push_back(expect("("));
        if (peek().type == Tok::ident) {
            std::vector<Tmp> params;
            params.push_back(identifier());
            while (at(",")) {
                params.push_back(expect(","));
                params.push_back(identifier());
            }
            kids.push_back(node("params", std::move(params)));
        }
        kids.push_back(expect(")"));
        kids.push_back(block());
        return node("function", std::move(kids));
    }

    Tmp block() {
        std::vector<Tmp> kids;
        kids.push_back(expect("{"));
        while (!at("}")) {
            if (peek().type == Tok::end) {
                fail("'}'");
            }
            kids.push_back(statement());
        }
        kids.push_back(expect("}"));
        return node("block", std::move(kids));
    }

    Tmp statement() {
        if (at("return")) {
            std::vector<Tmp> kids;
            kids.push_back(expect("return"));
            kids.push_back(expr());
            kids.push_back(expect(";"));
            return node("return", std::move(kids));
        }
        if (at("if")) {
            std::vector<Tmp> kids;
            kids.push_back(expect("if"));
            kids.push_back(expect("("));
            kids.push_back(expr());
            kids.push_back(expect(")"));
            kids.push_back(block());
            if (at("else")) {
                kids.push_back(expect("else"));
                kids.push_back(block());
            }
            return node("if", std::move(kids));
        }
        if (at("while")) {
            std::vector<Tmp> kids;
            kids.push_back(expect("while"));
            kids.push_back(expect("("));
            kids.push_back(expr());
            kids.push_back(expect(")"));
            kids.push_back(block());
            return node("while", std::move(kids));
        }
        if (peek().type == Tok::ident && peek(1).type == Tok::punct && peek(1).text == "=") {
            std::vector<Tmp> kids;
            kids.push_back(identifier());
            kids.push_back(expect("="));
            kids.push_back(expr());
            kids.push_back(expect(";"));
            return node("assign", std::move(kids));
        }
        if (peek().type == Tok::ident || peek().type == Tok::integer || at("(")) {
            std::vector<Tmp> kids;
            kids.push_back(expr());
            kids.push_back(expect(";"));
            return node("expr_stmt", std::move(kids));
        }
        fail("statement");
    }

    static bool is_binary_op(const Lexeme& t) {
        if (t.type != Tok::punct) {
            return false;
        }
        return t.text == "+" || t.text == "-" || t.text == "*" || t.text == "/" || t.text == "<" ||
               t.text == ">" || t.text == "==";
    }

    Tmp expr() {
        Tmp lhs = term();
        while (is_binary_op(peek())) {
            const auto& op = toks_[pos_++];
            Tmp rhs = term();
            std::vector<Tmp> kids;
            kids.push_back(std::move(lhs));
            kids.push_back(leaf(op.text, op.start, op.end));
            kids.push_back(std::move(rhs));
            lhs = node("binary", std::move(kids));
        }
        return lhs;
    }

    Tmp term() {
        const auto& t = peek();
        if (t.type == Tok::integer) {
            ++pos_;
            return leaf("integer", t.start, t.end);
        }
        if (t.type == Tok::ident) {
            if (peek(1).type == Tok::punct && peek(1).text == "(") {
                return call();
            }
            return identifier();
        }
        if (at("(")) {
            std::vector<Tmp> kids;
            kids.push_back(expect("("));
            kids.push_back(expr());
            kids.push_back(expect(")"));
            return node("paren", std::move(kids));
        }
        fail("expression");
    }

    Tmp call() {
        std::vector<Tmp> kids;
        kids.push_back(identifier());
        kids.push_back(expect("("));
        if (!at(")")) {
            kids.push_back(expr());
            while (at(",")) {
                kids.push_back(expect(","));
                kids.push_back(expr());
            }
        }
        kids.push_back(expect(")"));
        return node("call", std::move(kids));
    }

    std::vector<Lexeme> toks_;
    std::size_t pos_ = 0;
};

}  // namespace

Ast parse_mini(std::string_view source) {
    Parser p(source);
    Tmp root = p.program(source.size());
    Ast ast;
    ast.source = std::string(source);
    flatten(root, std::nullopt, ast);
    return ast;
}

// ---------------------------------------------------------------------------
// AST-JSON

namespace {

using nlohmann::json;

std::string child_path(const std::string& parent, std::size_t i) {
    return parent + ".children[" + std::to_string(i) + "]";
}

void read_node(const json& j, const std::string& path, std::optional<NodeId> parent, Ast& out) {
    if (!j.is_object()) {
        throw SchemaError(path, "node must be an object");
    }
    for (const char* field : {"kind", "start", "end", "children"}) {
        if (!j.contains(field)) {
            throw SchemaError(path, std::string("missing field '") + field + "'");
        }
    }
    if (!j["kind"].is_string()) {
        throw SchemaError(path, "'kind' must be a string");
    }
    if (!j["start"].is_number_unsigned() && !(j["start"].is_number_integer() && j["start"].get<long long>() >= 0)) {
        throw SchemaError(path, "'start' must be a non-negative integer");
    }
    if (!j["end"].is_number_unsigned() && !(j["end"].is_number_integer() && j["end"].get<long long>() >= 0)) {
        throw SchemaError(path, "'end' must be a non-negative integer");
    }
    if (!j["children"].is_array()) {
        throw SchemaError(path, "'children' must be an array");
    }
    const SourceSpan span{j["start"].get<std::size_t>(), j["end"].get<std::size_t>()};
    if (span.start_byte > span.end_byte) {
        throw SchemaError(path, "span inversion (start > end)");
    }
    const NodeId id = out.nodes.size();
    out.nodes.push_back(AstNode{j["kind"].get<std::string>(), span, {}, parent, std::nullopt});
    if (parent) {
        out.nodes[*parent].children.push_back(id);
    }
    const auto& kids = j["children"];
    for (std::size_t i = 0; i < kids.size(); ++i) {
        read_node(kids[i], child_path(path, i), id, out);
    }
}

std::string node_path(const Ast& ast, NodeId id) {
    std::vector<std::size_t> slots;
    NodeId cur = id;
    while (ast.nodes[cur].parent) {
        const NodeId p = *ast.nodes[cur].parent;
        const auto& sib = ast.nodes[p].children;
        slots.push_back(static_cast<std::size_t>(std::find(sib.begin(), sib.end(), cur) - sib.begin()));
        cur = p;
    }
    std::string path = "$";
    for (auto it = slots.rbegin(); it != slots.rend(); ++it) {
        path = child_path(path, *it);
    }
    return path;
}

json write_node(const Ast& ast, NodeId id, bool with_positions) {
    const auto& n = ast.nodes[id];
    json j;
    j["kind"] = n.kind;
    j["start"] = n.span.start_byte;
    j["end"] = n.span.end_byte;
    if (with_positions) {
        if (!n.position) {
            throw PositionsMissing();
        }
        j["position"] = {n.position->depth, n.position->sibling_index};
    }
    json kids = json::array();
    for (NodeId c : n.children) {
        kids.push_back(write_node(ast, c, with_positions));
    }
    j["children"] = std::move(kids);
    return j;
}

}  // namespace

void validate(const Ast& ast) {
    if (ast.nodes.empty()) {
        throw SchemaError("$", "empty tree");
    }
    std::size_t roots = 0;
    for (NodeId id = 0; id < ast.nodes.size(); ++id) {
        const auto& n = ast.nodes[id];
        if (!n.parent) {
            ++roots;
        }
        if (n.span.start_byte > n.span.end_byte) {
            throw SchemaError(node_path(ast, id), "span inversion (start > end)");
        }
        if (!ast.source.empty() && n.span.end_byte > ast.source.size()) {
            throw SchemaError(node_path(ast, id), "span exceeds source length");
        }
        for (std::size_t i = 0; i < n.children.size(); ++i) {
            const auto& c = ast.nodes.at(n.children[i]);
            if (!c.parent || *c.parent != id) {
                throw SchemaError(node_path(ast, n.children[i]), "parent link does not match");
            }
            if (!n.span.encloses(c.span)) {
                throw SchemaError(node_path(ast, n.children[i]), "child span escapes parent span");
            }
            if (i > 0) {
                const auto& prev = ast.nodes[n.children[i - 1]];
                if (prev.span.end_byte > c.span.start_byte) {
                    throw SchemaError(node_path(ast, n.children[i]), "sibling spans overlap or are out of order");
                }
            }
        }
    }
    if (roots != 1 || ast.nodes[Ast::root].parent) {
        throw SchemaError("$", "tree must have exactly one root");
    }
}

Ast import_ast(std::string_view serialized, std::optional<std::string> source) {
    json doc;
    try {
        doc = json::parse(serialized);
    } catch (const json::parse_error& e) {
        throw SchemaError("$", std::string("malformed JSON: ") + e.what());
    }
    Ast ast;
    const json* root = &doc;
    if (doc.is_object() && doc.contains("root") && !doc.contains("kind")) {
        root = &doc["root"];
        if (doc.contains("source")) {
            if (!doc["source"].is_string()) {
                throw SchemaError("$.source", "'source' must be a string");
            }
            ast.source = doc["source"].get<std::string>();
        }
    }
    if (source) {
        ast.source = *source;
    }
    read_node(*root, "$", std::nullopt, ast);
    validate(ast);
    return ast;
}

std::string export_ast(const Ast& ast, bool with_positions, int indent) {
    return write_node(ast, Ast::root, with_positions).dump(indent);
}

void assign_positions_inplace(Ast& ast) {
    if (ast.nodes.empty()) {
        return;
    }
    // Explicit stack: imported trees may be arbitrarily deep.
    ast.nodes[Ast::root].position = HierPos{1, 1};
    std::vector<NodeId> stack{Ast::root};
    while (!stack.empty()) {
        const NodeId id = stack.back();
        stack.pop_back();
        const int depth = ast.nodes[id].position->depth;
        const auto& kids = ast.nodes[id].children;
        for (std::size_t j = 0; j < kids.size(); ++j) {
            ast.nodes[kids[j]].position = HierPos{depth + 1, static_cast<int>(j) + 1};
            stack.push_back(kids[j]);
        }
    }
}

Ast assign_positions(Ast ast) {
    assign_positions_inplace(ast);
    return ast;
}

std::vector<double> normalized_depths(const Ast& ast) {
    const int max_depth = ast.max_depth();
    std::vector<double> out(ast.nodes.size(), 0.0);
    if (max_depth <= 1) {
        return out;
    }
    for (std::size_t i = 0; i < ast.nodes.size(); ++i) {
        out[i] = static_cast<double>(ast.nodes[i].position->depth - 1) / static_cast<double>(max_depth - 1);
    }
    return out;
}

std::string unordered_shape(const Ast& ast, NodeId id) {
    const auto& n = ast.nodes.at(id);
    std::vector<std::string> parts;
    parts.reserve(n.children.size());
    for (NodeId c : n.children) {
        parts.push_back(unordered_shape(ast, c));
    }
    std::sort(parts.begin(), parts.end());
    std::string out = n.kind + "(";
    for (const auto& p : parts) {
        out += p;
        out += ',';
    }
    out += ')';
    return out;
}

}  // namespace treepos::ast
