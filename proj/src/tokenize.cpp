#include "treepos/tokenize.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace treepos::tok {

namespace {

constexpr const char* kSpecialNames[kNumSpecial] = {"<pad>", "<unk>", "<cls>", "<sep>", "<mask>"};

bool word_char(unsigned char c) { return std::isalnum(c) || c == '_'; }
bool space_char(unsigned char c) { return std::isspace(c) != 0; }

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        std::size_t j = i + 1;
        if (word_char(c)) {
            while (j < text.size() && word_char(static_cast<unsigned char>(text[j]))) {
                ++j;
            }
        } else if (space_char(c)) {
            while (j < text.size() && space_char(static_cast<unsigned char>(text[j]))) {
                ++j;
            }
        }
        out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string escape(const std::string& token) {
    std::string out;
    for (unsigned char c : token) {
        switch (c) {
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            case '\\': out += "\\\\"; break;
            default:
                if (c < 0x20 || c >= 0x7f) {
                    static constexpr char kHex[] = "0123456789abcdef";
                    out += "\\x";
                    out += kHex[c >> 4];
                    out += kHex[c & 0xf];
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

std::string unescape(std::string_view line, std::size_t line_no) {
    std::string out;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '\\') {
            out += line[i];
            continue;
        }
        if (i + 1 >= line.size()) {
            throw Error("vocab line " + std::to_string(line_no) + ": dangling escape");
        }
        const char e = line[++i];
        switch (e) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            case '\\': out += '\\'; break;
            case 'x': {
                if (i + 2 >= line.size()) {
                    throw Error("vocab line " + std::to_string(line_no) + ": truncated \\x escape");
                }
                const std::string hex(line.substr(i + 1, 2));
                out += static_cast<char>(std::stoi(hex, nullptr, 16));
                i += 2;
                break;
            }
            default: throw Error("vocab line " + std::to_string(line_no) + ": unknown escape");
        }
    }
    return out;
}

}  // namespace

Vocab::Vocab() {
    for (const char* name : kSpecialNames) {
        add(name);
    }
}

std::optional<int> Vocab::id_of(std::string_view token) const {
    const auto it = ids_.find(std::string(token));
    if (it == ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

int Vocab::add(std::string token) {
    if (const auto it = ids_.find(token); it != ids_.end()) {
        return it->second;
    }
    const int id = static_cast<int>(tokens_.size());
    longest_ = std::max(longest_, token.size());
    ids_.emplace(token, id);
    tokens_.push_back(std::move(token));
    return id;
}

std::string Vocab::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += escape(t);
        out += '\n';
    }
    return out;
}

Vocab Vocab::deserialize(std::string_view text) {
    Vocab v;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            nl = text.size();
        }
        const std::string token = unescape(text.substr(pos, nl - pos), line_no);
        if (line_no < kNumSpecial) {
            if (token != kSpecialNames[line_no]) {
                throw Error("vocab line " + std::to_string(line_no) + ": expected special token " +
                            kSpecialNames[line_no]);
            }
        } else if (v.add(token) != static_cast<int>(line_no)) {
            throw Error("vocab line " + std::to_string(line_no) + ": duplicate token");
        }
        ++line_no;
        pos = nl + 1;
    }
    if (line_no < kNumSpecial) {
        throw Error("vocab file truncated: missing special tokens");
    }
    return v;
}

void Vocab::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write vocab file " + path);
    }
    f << serialize();
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot read vocab file " + path);
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return deserialize(ss.str());
}

Vocab train_vocab(std::span<const std::string> corpus, std::size_t target_size) {
    return train_vocab(corpus, target_size, nullptr);
}

Vocab train_vocab(std::span<const std::string> corpus, std::size_t target_size, MergeTrace* trace) {
    if (corpus.empty()) {
        throw Error("train_vocab: corpus is empty");
    }
    std::map<std::string, long> word_freq;
    bool seen[256] = {};
    for (const auto& doc : corpus) {
        for (auto& w : split_words(doc)) {
            for (unsigned char c : w) {
                seen[c] = true;
            }
            ++word_freq[std::move(w)];
        }
    }
    Vocab vocab;
    for (int b = 0; b < 256; ++b) {
        if (seen[b]) {
            vocab.add(std::string(1, static_cast<char>(b)));
        }
    }
    if (target_size < vocab.size()) {
        throw ConfigError("train_vocab: target_size " + std::to_string(target_size) + " is below " +
                          std::to_string(vocab.size()) + " (specials + distinct bytes)");
    }

    struct Word {
        std::vector<std::string> symbols;
        long freq;
    };
    std::vector<Word> words;
    words.reserve(word_freq.size());
    for (const auto& [w, f] : word_freq) {
        Word word{{}, f};
        for (char c : w) {
            word.symbols.emplace_back(1, c);
        }
        words.push_back(std::move(word));
    }

    using Pair = std::pair<std::string, std::string>;
    while (vocab.size() < target_size) {
        std::map<Pair, long> counts;
        for (const auto& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                counts[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
            }
        }
        // Ascending iteration with a strict comparison keeps the
        // lexicographically smallest pair among equal counts.
        const Pair* best = nullptr;
        long best_count = 0;
        for (const auto& [p, c] : counts) {
            if (c > best_count) {
                best = &p;
                best_count = c;
            }
        }
        if (best == nullptr) {
            break;
        }
        const Pair merge = *best;
        const std::string joined = merge.first + merge.second;
        for (auto& w : words) {
            std::vector<std::string> next;
            next.reserve(w.symbols.size());
            for (std::size_t i = 0; i < w.symbols.size(); ++i) {
                if (i + 1 < w.symbols.size() && w.symbols[i] == merge.first && w.symbols[i + 1] == merge.second) {
                    next.push_back(joined);
                    ++i;
                } else {
                    next.push_back(std::move(w.symbols[i]));
                }
            }
            w.symbols = std::move(next);
        }
        vocab.add(joined);
        if (trace) {
            trace->merges.push_back(merge);
        }
    }
    return vocab;
}

TokenizedCode tokenize(std::string_view source, const Vocab& vocab) {
    TokenizedCode out;
    std::size_t i = 0;
    std::string buf;
    while (i < source.size()) {
        const std::size_t max_len = std::min(vocab.longest_token(), source.size() - i);
        int id = kUnk;
        std::size_t len = 1;
        for (std::size_t l = max_len; l >= 1; --l) {
            buf.assign(source.substr(i, l));
            if (const auto found = vocab.id_of(buf); found && !Vocab::is_special(*found)) {
                id = *found;
                len = l;
                break;
            }
        }
        out.ids.push_back(id);
        out.spans.push_back({i, i + len});
        i += len;
    }
    return out;
}

std::size_t AlignedSequence::length() const {
    return static_cast<std::size_t>(std::count_if(ids.begin(), ids.end(), [](int id) { return id != kPad; }));
}

std::optional<ast::NodeId> owning_node(const ast::Ast& ast, std::size_t byte) {
    if (ast.nodes.empty() || !ast.nodes[ast::Ast::root].span.contains(byte)) {
        return std::nullopt;
    }
    ast::NodeId cur = ast::Ast::root;
    for (;;) {
        const auto& kids = ast.nodes[cur].children;
        const auto it = std::find_if(kids.begin(), kids.end(),
                                     [&](ast::NodeId c) { return ast.nodes[c].span.contains(byte); });
        if (it == kids.end()) {
            return cur;
        }
        cur = *it;
    }
}

namespace {

struct Builder {
    AlignedSequence seq;
    TableSizes tables;

    void push_special(int id, int type) {
        seq.ids.push_back(id);
        seq.type_ids.push_back(type);
        seq.depth_idx.push_back(0);
        seq.sibling_idx.push_back(0);
        seq.align_mask.push_back(0);
        seq.token_index.push_back(-1);
        seq.node.push_back(-1);
    }

    void push_tokens(const TokenizedCode& tokens, std::size_t count, const ast::Ast& ast, int type) {
        if (!ast.has_positions()) {
            throw ast::PositionsMissing();
        }
        for (std::size_t i = 0; i < count; ++i) {
            const auto& span = tokens.spans[i];
            if (span.end_byte > ast.source.size()) {
                throw AlignmentError("token " + std::to_string(i) + " span [" + std::to_string(span.start_byte) +
                                     "," + std::to_string(span.end_byte) + ") exceeds source length " +
                                     std::to_string(ast.source.size()));
            }
            seq.ids.push_back(tokens.ids[i]);
            seq.type_ids.push_back(type);
            seq.token_index.push_back(static_cast<int>(i));
            const auto owner = owning_node(ast, span.start_byte);
            if (!owner) {
                seq.depth_idx.push_back(0);
                seq.sibling_idx.push_back(0);
                seq.align_mask.push_back(0);
                seq.node.push_back(-1);
                continue;
            }
            const auto& pos = *ast.nodes[*owner].position;
            seq.depth_idx.push_back(std::min(pos.depth, tables.depth - 1));
            seq.sibling_idx.push_back(std::min(pos.sibling_index, tables.sibling - 1));
            seq.align_mask.push_back(1);
            seq.node.push_back(static_cast<long>(*owner));
        }
    }

    AlignedSequence finish(std::size_t max_len) {
        while (seq.ids.size() < max_len) {
            push_special(kPad, 0);
        }
        seq.linear_pos.resize(max_len);
        for (std::size_t i = 0; i < max_len; ++i) {
            seq.linear_pos[i] = static_cast<int>(i);
        }
        return std::move(seq);
    }
};

void check_tokens(const TokenizedCode& tokens) {
    if (tokens.ids.size() != tokens.spans.size()) {
        throw AlignmentError("token ids and spans differ in length");
    }
}

}  // namespace

AlignedSequence align(const TokenizedCode& tokens, const ast::Ast& ast, std::size_t max_len, int segment,
                      TableSizes tables) {
    check_tokens(tokens);
    if (max_len < 2) {
        throw ConfigError("align: max_len must be at least 2");
    }
    if (segment != 0 && segment != 1) {
        throw ConfigError("align: segment must be 0 or 1");
    }
    Builder b{{}, tables};
    b.push_special(kCls, segment);
    b.push_tokens(tokens, std::min(tokens.ids.size(), max_len - 2), ast, segment);
    b.push_special(kSep, segment);
    return b.finish(max_len);
}

AlignedSequence align_pair(const TokenizedCode& first, const ast::Ast& first_ast, const TokenizedCode& second,
                           const ast::Ast& second_ast, std::size_t max_len, TableSizes tables) {
    check_tokens(first);
    check_tokens(second);
    if (max_len < 4) {
        throw ConfigError("align_pair: max_len must be at least 4");
    }
    std::size_t la = first.ids.size();
    std::size_t lb = second.ids.size();
    const std::size_t budget = max_len - 4;
    while (la + lb > budget) {
        if (la >= lb) {
            --la;
        } else {
            --lb;
        }
    }
    Builder b{{}, tables};
    b.push_special(kCls, 0);
    b.push_tokens(first, la, first_ast, 0);
    b.push_special(kSep, 0);
    b.push_special(kSep, 1);
    b.push_tokens(second, lb, second_ast, 1);
    b.push_special(kSep, 1);
    return b.finish(max_len);
}

}  // namespace treepos::tok
