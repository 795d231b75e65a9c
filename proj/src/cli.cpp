#include "treepos/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "treepos/analysis.hpp"
#include "treepos/ast.hpp"

namespace treepos::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

long long parse_int(const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not an integer");
    }
    if (used != v.size()) throw std::invalid_argument("not an integer");
    return x;
}

int parse_i32(const std::string& v) {
    const long long x = parse_int(v);
    if (x < INT32_MIN || x > INT32_MAX) throw std::invalid_argument("out of range");
    return static_cast<int>(x);
}

std::uint64_t parse_u64(const std::string& v) {
    if (v.empty() || v[0] == '-') throw std::invalid_argument("not a non-negative integer");
    std::size_t used = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a non-negative integer");
    }
    if (used != v.size()) throw std::invalid_argument("not a non-negative integer");
    return x;
}

double parse_double(const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("not a number");
    }
    if (used != v.size()) throw std::invalid_argument("not a number");
    return x;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("not a boolean");
}

std::string show(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct Key {
    const char* section;
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        {"model", "layers", [](RunConfig& c, const std::string& v) { c.model.layers = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.layers); }},
        {"model", "d", [](RunConfig& c, const std::string& v) { c.model.d = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.d); }},
        {"model", "heads", [](RunConfig& c, const std::string& v) { c.model.heads = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.heads); }},
        {"model", "ffn_width", [](RunConfig& c, const std::string& v) { c.model.ffn_width = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.ffn_width); }},
        {"model", "max_len", [](RunConfig& c, const std::string& v) { c.model.max_len = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.max_len); }},
        {"model", "vocab_size",
         [](RunConfig& c, const std::string& v) {
             c.model.vocab_size = parse_i32(v);
             c.vocab_size_set = true;
         },
         [](const RunConfig& c) { return std::to_string(c.model.vocab_size); }},
        {"model", "depth_table_size",
         [](RunConfig& c, const std::string& v) { c.model.depth_table_size = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.depth_table_size); }},
        {"model", "sibling_table_size",
         [](RunConfig& c, const std::string& v) { c.model.sibling_table_size = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.model.sibling_table_size); }},
        {"model", "strategy",
         [](RunConfig& c, const std::string& v) { c.model.strategy = embed::strategy_from_string(v); },
         [](const RunConfig& c) { return embed::to_string(c.model.strategy); }},
        {"model", "dropout", [](RunConfig& c, const std::string& v) { c.model.dropout_rate = parse_double(v); },
         [](const RunConfig& c) { return show(c.model.dropout_rate); }},
        {"model", "tree_mask", [](RunConfig& c, const std::string& v) { c.model.tree_mask_enabled = parse_bool(v); },
         [](const RunConfig& c) { return std::string(c.model.tree_mask_enabled ? "true" : "false"); }},
        {"model", "structural", [](RunConfig& c, const std::string& v) { c.model.structural = parse_bool(v); },
         [](const RunConfig& c) { return std::string(c.model.structural ? "true" : "false"); }},
        {"train", "lr", [](RunConfig& c, const std::string& v) { c.train.lr = parse_double(v); },
         [](const RunConfig& c) { return show(c.train.lr); }},
        {"train", "batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
        {"train", "epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
        {"train", "mask_rate", [](RunConfig& c, const std::string& v) { c.train.mask_rate = parse_double(v); },
         [](const RunConfig& c) { return show(c.train.mask_rate); }},
        {"train", "beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = parse_double(v); },
         [](const RunConfig& c) { return show(c.train.beta1); }},
        {"train", "beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = parse_double(v); },
         [](const RunConfig& c) { return show(c.train.beta2); }},
        {"train", "eps", [](RunConfig& c, const std::string& v) { c.train.eps = parse_double(v); },
         [](const RunConfig& c) { return show(c.train.eps); }},
        {"train", "weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = parse_double(v); },
         [](const RunConfig& c) { return show(c.train.weight_decay); }},
        {"train", "grad_clip",
         [](RunConfig& c, const std::string& v) {
             if (v == "none") {
                 c.train.grad_clip.reset();
             } else {
                 c.train.grad_clip = parse_double(v);
             }
         },
         [](const RunConfig& c) { return c.train.grad_clip ? show(*c.train.grad_clip) : std::string("none"); }},
        {"train", "threads", [](RunConfig& c, const std::string& v) { c.train.threads = parse_i32(v); },
         [](const RunConfig& c) { return std::to_string(c.train.threads); }},
        {"data", "corpus", [](RunConfig& c, const std::string& v) { c.data.corpus = v; },
         [](const RunConfig& c) { return c.data.corpus; }},
        {"data", "eval_corpus", [](RunConfig& c, const std::string& v) { c.data.eval_corpus = v; },
         [](const RunConfig& c) { return c.data.eval_corpus; }},
        {"data", "pairs", [](RunConfig& c, const std::string& v) { c.data.pairs = v; },
         [](const RunConfig& c) { return c.data.pairs; }},
        {"data", "vocab", [](RunConfig& c, const std::string& v) { c.data.vocab = v; },
         [](const RunConfig& c) { return c.data.vocab; }},
        {"run", "seed", [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64(v); },
         [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        {"run", "output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
         [](const RunConfig& c) { return c.output_dir; }},
        {"run", "checkpoint_every",
         [](RunConfig& c, const std::string& v) { c.checkpoint_every = parse_int(v); },
         [](const RunConfig& c) { return std::to_string(c.checkpoint_every); }},
    };
    return k;
}

const Key* find_key(const std::string& section, const std::string& name) {
    for (const auto& k : keys()) {
        if (section == k.section && name == k.name) return &k;
    }
    return nullptr;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    f << content;
    if (!f) {
        throw IoError("write failed: " + path.string());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot read " + path);
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir + ": " + ec.message());
    }
}

std::string json_error(const std::string& kind, const std::string& message, nlohmann::json extra = {}) {
    nlohmann::json j = {{"error", kind}, {"message", message}};
    if (extra.is_object()) {
        j.update(extra);
    }
    return j.dump();
}

void require_path(const std::string& value, const char* key) {
    if (value.empty()) {
        throw ConfigError(std::string("missing required setting ") + key);
    }
}

tok::Vocab resolve_vocab(RunConfig& cfg, const std::optional<tok::Vocab>& fallback = std::nullopt) {
    tok::Vocab vocab;
    if (!cfg.data.vocab.empty()) {
        vocab = tok::Vocab::load(cfg.data.vocab);
    } else if (fallback) {
        vocab = *fallback;
    } else {
        throw ConfigError("missing required setting data.vocab");
    }
    if (cfg.vocab_size_set && static_cast<std::size_t>(cfg.model.vocab_size) != vocab.size()) {
        throw ConfigError("model.vocab_size = " + std::to_string(cfg.model.vocab_size) + " but the vocabulary has " +
                          std::to_string(vocab.size()) + " tokens");
    }
    cfg.model.vocab_size = static_cast<int>(vocab.size());
    cfg.model.validate();
    return vocab;
}

// ---------------------------------------------------------------------------
// Subcommands

struct ParseArgs {
    std::string input;
    std::string format;
    std::string emit = "ast";
};

int cmd_parse(const ParseArgs& a, std::ostream& out) {
    const std::string text = read_file(a.input);
    std::string format = a.format;
    if (format.empty()) {
        format = fs::path(a.input).extension() == ".json" ? "json" : "mini";
    }
    ast::Ast tree = format == "json" ? ast::import_ast(text) : ast::parse_mini(text);
    const bool positions = a.emit == "positions";
    if (positions) {
        ast::assign_positions_inplace(tree);
    }
    out << ast::export_ast(tree, positions, 2) << '\n';
    return ok;
}

struct VocabArgs {
    std::vector<std::string> corpora;
    std::vector<std::string> pairs;
    std::size_t size = 1000;
    std::string out;
};

int cmd_train_vocab(const VocabArgs& a, std::ostream& out) {
    std::vector<std::string> texts;
    for (const auto& path : a.corpora) {
        for (auto& d : train::read_corpus_jsonl(path)) texts.push_back(std::move(d.code));
    }
    for (const auto& path : a.pairs) {
        for (auto& p : train::read_pairs_jsonl(path)) {
            texts.push_back(std::move(p.code1));
            texts.push_back(std::move(p.code2));
        }
    }
    const auto vocab = tok::train_vocab(texts, a.size);
    vocab.save(a.out);
    out << "vocab_size " << vocab.size() << '\n';
    return ok;
}

int cmd_pretrain(const std::string& config_path, std::ostream& out) {
    RunConfig cfg = load_run_config(config_path);
    require_path(cfg.data.corpus, "data.corpus");
    const tok::Vocab vocab = resolve_vocab(cfg);
    cfg.train.threads = effective_threads(cfg.train.threads);
    const auto docs = train::prepare_corpus(train::read_corpus_jsonl(cfg.data.corpus), vocab, cfg.model);
    std::vector<train::PreparedDoc> eval_docs;
    if (!cfg.data.eval_corpus.empty()) {
        eval_docs = train::prepare_corpus(train::read_corpus_jsonl(cfg.data.eval_corpus), vocab, cfg.model);
    }
    ensure_dir(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    write_file(dir / "resolved_config.ini", resolved_config(cfg));

    auto make_ckpt = [&](const model::Parameters& p, const train::AdamState& opt) {
        return train::Checkpoint{cfg.model, cfg.train, p, opt, opt.step, cfg.train.seed, vocab};
    };
    train::PretrainOptions options;
    if (!eval_docs.empty()) {
        options.eval_docs = &eval_docs;
    }
    if (cfg.checkpoint_every > 0) {
        options.hook = [&](std::int64_t step, const model::Parameters& p, const train::AdamState& opt) {
            if (step % cfg.checkpoint_every == 0) {
                train::save_checkpoint((dir / ("checkpoint-" + std::to_string(step) + ".tpc")).string(),
                                       make_ckpt(p, opt));
            }
        };
    }
    const auto result = train::pretrain_mlm(docs, cfg.model, cfg.train, options);
    const auto ckpt_path = (dir / "checkpoint.tpc").string();
    train::save_checkpoint(ckpt_path, make_ckpt(result.params, result.opt));
    write_file(dir / "metrics.csv", train::metrics_csv(result.metrics));
    if (cfg.model.strategy == embed::StrategyKind::weighted_sum) {
        write_file(dir / "trajectory.csv", analysis::trajectory_csv(analysis::log_trajectory(result, cfg.model)));
    }
    if (train::load_checkpoint(ckpt_path).step != result.opt.step) {
        throw IoError("checkpoint verification failed: " + ckpt_path);
    }
    out << train::format_metrics_row(result.metrics.back()) << '\n';
    return ok;
}

int cmd_finetune(const std::string& config_path, const std::string& init_path, std::ostream& out) {
    RunConfig cfg = load_run_config(config_path);
    require_path(cfg.data.pairs, "data.pairs");
    const auto init = train::load_checkpoint(init_path);
    if (!cfg.vocab_size_set) {
        cfg.model.vocab_size = init.model.vocab_size;
    }
    const auto mismatched = model::config_mismatches(cfg.model, init.model);
    if (!mismatched.empty()) {
        std::string fields;
        for (const auto& f : mismatched) {
            fields += (fields.empty() ? "" : ", ") + f;
        }
        throw ConfigError("checkpoint " + init_path + " is incompatible with the config; mismatched fields: " + fields);
    }
    const tok::Vocab vocab = resolve_vocab(cfg, init.vocab);
    cfg.train.threads = effective_threads(cfg.train.threads);
    const auto pairs = train::prepare_pairs(train::read_pairs_jsonl(cfg.data.pairs), vocab, cfg.model);
    ensure_dir(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    write_file(dir / "resolved_config.ini", resolved_config(cfg));
    const auto result = train::finetune_clone(pairs, init.params, cfg.model, cfg.train);
    const auto ckpt_path = (dir / "checkpoint.tpc").string();
    train::save_checkpoint(ckpt_path, train::Checkpoint{cfg.model, cfg.train, result.train.params, result.train.opt,
                                                        result.train.opt.step, cfg.train.seed, vocab});
    write_file(dir / "metrics.csv", train::metrics_csv(result.train.metrics));
    out << train::format_metrics_row(result.train.metrics.back()) << '\n';
    return ok;
}

struct AnalyzeArgs {
    std::string checkpoint;
    std::string corpus;
    std::string project = "pca";
    bool probe = false;
    bool svg = false;
    std::string out_dir = "analysis";
    std::uint64_t seed = 12345;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    for (const auto* p : {&a.checkpoint, &a.corpus}) {
        if (!fs::exists(*p)) {
            throw IoError("missing artifact: " + *p);
        }
    }
    const auto method = analysis::projection_from_string(a.project);
    const auto ckpt = train::load_checkpoint(a.checkpoint);
    const auto ex = analysis::export_hidden(ckpt, train::read_corpus_jsonl(a.corpus));
    ensure_dir(a.out_dir);
    const fs::path dir(a.out_dir);
    write_file(dir / "hidden.tsv", analysis::hidden_tsv(ex));
    const auto proj = analysis::project_2d(ex, method, a.seed);
    write_file(dir / "projection.csv", analysis::projection_csv(proj));
    if (a.svg) {
        write_file(dir / "projection.svg", analysis::projection_svg(proj));
    }
    if (a.probe) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "depth_probe_r2 %.6f", analysis::depth_probe(ex));
        out << buf << '\n';
    }
    return ok;
}

struct GenArgs {
    std::size_t docs = 2000;
    std::size_t pairs = 2000;
    std::uint64_t seed = 12345;
    std::string out_docs;
    std::string out_pairs;
};

int cmd_gen_corpus(const GenArgs& a, std::ostream& out) {
    const auto corpus = analysis::gen_depth_probe_corpus({a.docs, a.pairs, a.seed});
    train::write_corpus_jsonl(a.out_docs, corpus.docs);
    if (!a.out_pairs.empty()) {
        train::write_pairs_jsonl(a.out_pairs, corpus.pairs);
    }
    out << "docs " << corpus.docs.size() << " pairs " << (a.out_pairs.empty() ? 0 : corpus.pairs.size()) << '\n';
    return ok;
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig parse_run_config(std::string_view text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in{std::string(text)};
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    RunConfig cfg;
    std::vector<std::string> problems;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            problems.push_back("unknown key '" + section + "' outside any section");
            continue;
        }
        for (const auto& [name, value] : body) {
            const Key* k = find_key(section, name);
            if (!k) {
                problems.push_back("unknown key [" + section + "] " + name);
                continue;
            }
            const std::string v = trim(value.data());
            try {
                k->set(cfg, v);
            } catch (const std::exception& e) {
                problems.push_back("invalid value for [" + section + "] " + name + " = '" + v + "': " + e.what());
            }
        }
    }
    for (const auto& v : cfg.model.violations()) {
        if (cfg.vocab_size_set || v.rfind("vocab_size", 0) != 0) {
            problems.push_back("model: " + v);
        }
    }
    for (const auto& v : cfg.train.violations()) {
        problems.push_back("train: " + v);
    }
    if (cfg.checkpoint_every < 0) {
        problems.push_back("run: checkpoint_every must be non-negative");
    }
    if (!problems.empty()) {
        std::string msg = "invalid config (" + std::to_string(problems.size()) + " problem" +
                          (problems.size() == 1 ? "" : "s") + "):";
        for (const auto& p : problems) {
            msg += "\n  - " + p;
        }
        throw ConfigError(msg);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

std::string resolved_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& k : keys()) {
        if (section != k.section) {
            section = k.section;
            out += (out.empty() ? "[" : "\n[") + section + "]\n";
        }
        out += std::string(k.name) + " = " + k.get(cfg) + '\n';
    }
    return out;
}

int effective_threads(int requested) {
    int n = std::max(1, requested);
    if (const char* env = std::getenv("TREEPOS_THREADS")) {
        try {
            const int cap = parse_i32(env);
            if (cap >= 1) {
                n = std::min(n, cap);
            }
        } catch (const std::exception&) {
        }
    }
    return n;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tree-structured positional embeddings for code transformers"};
    app.require_subcommand(1);

    ParseArgs parse_args;
    auto* parse = app.add_subcommand("parse", "Parse a program and print its AST as JSON");
    parse->add_option("input", parse_args.input, "Mini-language source or AST-JSON file")->required();
    parse->add_option("--format", parse_args.format, "Input format (default: json for .json files, else mini)")
        ->check(CLI::IsMember({"mini", "json"}));
    parse->add_option("--emit", parse_args.emit, "ast, or positions to add [depth, sibling] to every node")
        ->check(CLI::IsMember({"ast", "positions"}))
        ->capture_default_str();

    VocabArgs vocab_args;
    auto* vocab = app.add_subcommand("train-vocab", "Learn a byte-pair vocabulary");
    vocab->add_option("--corpus", vocab_args.corpora, "JSONL documents (repeatable)");
    vocab->add_option("--pairs", vocab_args.pairs, "JSONL clone pairs (repeatable)");
    vocab->add_option("--size", vocab_args.size, "Target vocabulary size including specials")->capture_default_str();
    vocab->add_option("--out", vocab_args.out, "Output vocabulary file")->required();

    std::string config_path;
    auto* pretrain = app.add_subcommand("pretrain", "Masked-language-model pretraining from a config file");
    pretrain->add_option("config", config_path, "Run config (INI with [model] [train] [data] [run])")->required();

    std::string ft_config;
    std::string init_path;
    auto* finetune = app.add_subcommand("finetune", "Clone-detection fine-tuning from a checkpoint");
    finetune->add_option("config", ft_config, "Run config")->required();
    finetune->add_option("--init", init_path, "Pretrained checkpoint")->required();

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "Export hidden states, project to 2-D, optional depth probe");
    analyze->add_option("--checkpoint", an.checkpoint, "Checkpoint to analyse")->required();
    analyze->add_option("--corpus", an.corpus, "JSONL documents")->required();
    analyze->add_option("--project", an.project, "Projection method")
        ->check(CLI::IsMember({"pca", "tsne"}))
        ->capture_default_str();
    analyze->add_flag("--probe", an.probe, "Fit the linear depth probe and print its held-out R^2");
    analyze->add_flag("--svg", an.svg, "Also write projection.svg");
    analyze->add_option("--out", an.out_dir, "Output directory")->capture_default_str();
    analyze->add_option("--seed", an.seed, "t-SNE seed")->capture_default_str();

    GenArgs gen;
    auto* gen_corpus = app.add_subcommand("gen-corpus", "Generate the synthetic depth-probe corpus and clone pairs");
    gen_corpus->add_option("--docs", gen.docs, "Number of documents")->capture_default_str();
    gen_corpus->add_option("--pairs", gen.pairs, "Number of clone pairs")->capture_default_str();
    gen_corpus->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    gen_corpus->add_option("--out-docs", gen.out_docs, "Output JSONL for documents")->required();
    gen_corpus->add_option("--out-pairs", gen.out_pairs, "Output JSONL for pairs");

    std::vector<std::string> argv_store = args;
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? ok : input_error;
    }

    try {
        if (parse->parsed()) return cmd_parse(parse_args, out);
        if (vocab->parsed()) return cmd_train_vocab(vocab_args, out);
        if (pretrain->parsed()) return cmd_pretrain(config_path, out);
        if (finetune->parsed()) return cmd_finetune(ft_config, init_path, out);
        if (analyze->parsed()) return cmd_analyze(an, out);
        if (gen_corpus->parsed()) return cmd_gen_corpus(gen, out);
    } catch (const ast::ParseError& e) {
        err << json_error("parse_error", e.what(), {{"offset", e.offset()}, {"expected", e.expected()}}) << '\n';
        return input_error;
    } catch (const ast::SchemaError& e) {
        err << json_error("schema_error", e.what(), {{"path", e.path()}}) << '\n';
        return input_error;
    } catch (const IoError& e) {
        err << json_error("io_error", e.what()) << '\n';
        return io_error;
    } catch (const ConfigError& e) {
        err << json_error("config_error", e.what()) << '\n';
        return input_error;
    } catch (const std::exception& e) {
        err << json_error("error", e.what()) << '\n';
        return input_error;
    }
    return input_error;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace treepos::cli
