#include <fstream>

#include "treepos/train.hpp"

namespace treepos::train {

bool is_heldout(std::string_view id) { return fnv1a(id) % 10 == 0; }

PreparedDoc prepare_document(const Document& doc, const tok::Vocab& vocab, const model::ModelConfig& cfg) {
    PreparedDoc out;
    out.id = doc.id;
    out.ast = ast::assign_positions(ast::parse_mini(doc.code));
    out.tokens = tok::tokenize(doc.code, vocab);
    out.seq = tok::align(out.tokens, out.ast, static_cast<std::size_t>(cfg.max_len), 0, cfg.table_sizes());
    return out;
}

std::vector<PreparedDoc> prepare_corpus(const std::vector<Document>& docs, const tok::Vocab& vocab,
                                        const model::ModelConfig& cfg) {
    std::vector<PreparedDoc> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        try {
            out.push_back(prepare_document(d, vocab, cfg));
        } catch (const ast::ParseError& e) {
            throw Error("document " + d.id + ": " + e.what());
        }
    }
    return out;
}

std::vector<PreparedPair> prepare_pairs(const std::vector<CodePair>& pairs, const tok::Vocab& vocab,
                                        const model::ModelConfig& cfg) {
    std::vector<PreparedPair> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        PreparedPair pp;
        pp.id = "pair-" + std::to_string(i);
        pp.label = p.label;
        try {
            const auto a = ast::assign_positions(ast::parse_mini(p.code1));
            const auto b = ast::assign_positions(ast::parse_mini(p.code2));
            pp.seq = tok::align_pair(tok::tokenize(p.code1, vocab), a, tok::tokenize(p.code2, vocab), b,
                                     static_cast<std::size_t>(cfg.max_len), cfg.table_sizes());
        } catch (const ast::ParseError& e) {
            throw Error(pp.id + ": " + e.what());
        }
        out.push_back(std::move(pp));
    }
    return out;
}

namespace {

template <class F>
void for_each_line(const std::string& path, F&& f) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            f(j, lineno);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void write_lines(const std::string& path, const std::vector<nlohmann::json>& rows) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write " + path);
    }
    for (const auto& r : rows) {
        out << r.dump() << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path);
    }
}

}  // namespace

std::vector<Document> read_corpus_jsonl(const std::string& path) {
    std::vector<Document> docs;
    for_each_line(path, [&](const nlohmann::json& j, std::size_t lineno) {
        Document d;
        d.code = j.at("code").get<std::string>();
        d.id = j.contains("id") ? j["id"].get<std::string>() : "doc-" + std::to_string(lineno);
        docs.push_back(std::move(d));
    });
    return docs;
}

void write_corpus_jsonl(const std::string& path, const std::vector<Document>& docs) {
    std::vector<nlohmann::json> rows;
    for (const auto& d : docs) {
        rows.push_back({{"id", d.id}, {"code", d.code}});
    }
    write_lines(path, rows);
}

std::vector<CodePair> read_pairs_jsonl(const std::string& path) {
    std::vector<CodePair> pairs;
    for_each_line(path, [&](const nlohmann::json& j, std::size_t) {
        pairs.push_back({j.at("code1").get<std::string>(), j.at("code2").get<std::string>(), j.at("label").get<int>()});
    });
    return pairs;
}

void write_pairs_jsonl(const std::string& path, const std::vector<CodePair>& pairs) {
    std::vector<nlohmann::json> rows;
    for (const auto& p : pairs) {
        rows.push_back({{"code1", p.code1}, {"code2", p.code2}, {"label", p.label}});
    }
    write_lines(path, rows);
}

}  // namespace treepos::train
