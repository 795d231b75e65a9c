#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "treepos/analysis.hpp"
#include "treepos/ast.hpp"
#include "treepos/embed.hpp"
#include "treepos/model.hpp"
#include "treepos/tokenize.hpp"
#include "treepos/train.hpp"

namespace py = pybind11;
using namespace treepos;

namespace {

// json -> python through the json module; the trees are small
py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

struct Encoder {
    model::ModelConfig config;
    model::Parameters params;
    tok::Vocab vocab;

    Mat hidden(const std::string& code) const {
        const auto doc = train::prepare_document({"x", code}, vocab, config);
        const auto mask = model::build_tree_attention_mask(doc.seq, config);
        const Mat h = model::encode(params, config, doc.seq, mask, false, 0);
        return h.topRows(static_cast<Eigen::Index>(doc.seq.length()));
    }
};

py::dict metrics_dict(const train::Metrics& m) {
    py::dict d;
    d["loss"] = m.loss;
    d["accuracy"] = m.accuracy;
    d["f1"] = m.f1;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    return d;
}

}  // namespace

PYBIND11_MODULE(_treepos, m) {
    m.doc() = "Tree-structured positional embeddings for code transformers";

    // translators are tried newest first, so the base class goes in first
    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ast::ParseError>(m, "ParseError", base);
    py::register_exception<ast::SchemaError>(m, "SchemaError", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<IoError>(m, "IoError", base);

    m.def(
        "parse",
        [](const std::string& source, bool positions) {
            auto tree = ast::parse_mini(source);
            if (positions) ast::assign_positions_inplace(tree);
            return to_py(nlohmann::json::parse(ast::export_ast(tree, positions)));
        },
        py::arg("source"), py::arg("positions") = true, "Parse mini-language source into an AST dict");

    m.def(
        "positions",
        [](const std::string& source) {
            const auto tree = ast::assign_positions(ast::parse_mini(source));
            std::vector<std::tuple<std::string, int, int>> out;
            for (const auto& n : tree.nodes) out.emplace_back(n.kind, n.position->depth, n.position->sibling_index);
            return out;
        },
        py::arg("source"), "(kind, depth, sibling) for every node in pre-order");

    m.def(
        "positions_from_json",
        [](const py::object& doc) {
            auto tree = ast::import_ast(from_py(doc).dump());
            ast::assign_positions_inplace(tree);
            return to_py(nlohmann::json::parse(ast::export_ast(tree, true)));
        },
        py::arg("ast"));

    m.def("normalized_depths", [](const std::string& source) {
        return ast::normalized_depths(ast::assign_positions(ast::parse_mini(source)));
    });

    py::class_<tok::Vocab>(m, "Vocab")
        .def(py::init<>())
        .def_static(
            "train",
            [](const std::vector<std::string>& corpus, std::size_t size) { return tok::train_vocab(corpus, size); },
            py::arg("corpus"), py::arg("size"))
        .def_static("load", &tok::Vocab::load)
        .def("save", &tok::Vocab::save)
        .def("__len__", &tok::Vocab::size)
        .def_property_readonly("tokens", &tok::Vocab::tokens)
        .def("id_of", &tok::Vocab::id_of)
        .def(
            "tokenize",
            [](const tok::Vocab& v, const std::string& text) {
                const auto t = tok::tokenize(text, v);
                std::vector<std::pair<std::size_t, std::size_t>> spans;
                for (const auto& s : t.spans) spans.emplace_back(s.start_byte, s.end_byte);
                return py::make_tuple(t.ids, spans);
            },
            py::arg("text"), "(ids, [(start, end)]) byte spans")
        .def(
            "align",
            [](const tok::Vocab& v, const std::string& code, std::size_t max_len) {
                const auto seq = tok::align(tok::tokenize(code, v), ast::assign_positions(ast::parse_mini(code)),
                                            max_len, 0);
                py::dict d;
                d["ids"] = seq.ids;
                d["depth"] = seq.depth_idx;
                d["sibling"] = seq.sibling_idx;
                d["align_mask"] = seq.align_mask;
                return d;
            },
            py::arg("code"), py::arg("max_len") = 128);

    m.def(
        "count_extra_params",
        [](std::int64_t depth_rows, std::int64_t sibling_rows, std::int64_t d, const std::string& strategy) {
            return embed::count_extra_params(depth_rows, sibling_rows, d, embed::strategy_from_string(strategy));
        },
        py::arg("depth_rows") = 514, py::arg("sibling_rows") = 514, py::arg("d") = 768, py::arg("strategy") = "sum");

    m.def(
        "compute_metrics",
        [](const std::vector<int>& pred, const std::vector<int>& labels, const std::string& averaging) {
            if (averaging != "binary" && averaging != "weighted") throw ConfigError("averaging must be binary or weighted");
            return metrics_dict(train::compute_metrics(
                pred, labels, averaging == "binary" ? train::Averaging::binary : train::Averaging::weighted));
        },
        py::arg("predictions"), py::arg("labels"), py::arg("averaging") = "binary");

    m.def(
        "gen_corpus",
        [](std::size_t docs, std::size_t pairs, std::uint64_t seed) {
            const auto c = analysis::gen_depth_probe_corpus({docs, pairs, seed});
            py::list d, p;
            for (const auto& doc : c.docs) d.append(py::make_tuple(doc.id, doc.code));
            for (const auto& pr : c.pairs) p.append(py::make_tuple(pr.code1, pr.code2, pr.label));
            return py::make_tuple(d, p);
        },
        py::arg("docs") = 2000, py::arg("pairs") = 2000, py::arg("seed") = 12345);

    py::class_<Encoder>(m, "Encoder")
        .def_static(
            "init",
            [](const py::dict& config, const tok::Vocab& vocab, std::uint64_t seed) {
                model::ModelConfig c;
                auto j = nlohmann::json(c);
                j.update(from_py(config));
                j["vocab_size"] = vocab.size();
                c = j.get<model::ModelConfig>();
                c.validate();
                return Encoder{c, model::Parameters::init(c, seed), vocab};
            },
            py::arg("config"), py::arg("vocab"), py::arg("seed") = 12345)
        .def_static("load",
                    [](const std::string& path) {
                        auto ck = train::load_checkpoint(path);
                        if (!ck.vocab) throw ConfigError("checkpoint has no vocabulary: " + path);
                        return Encoder{ck.model, std::move(ck.params), *ck.vocab};
                    })
        .def_property_readonly("config", [](const Encoder& e) { return to_py(nlohmann::json(e.config)); })
        .def_property_readonly("parameter_count",
                               [](const Encoder& e) { return model::count_parameters(e.config); })
        .def_property_readonly("coefficients",
                               [](const Encoder& e) { return embed::coefficients(e.params.strategy); })
        .def("hidden", &Encoder::hidden, py::arg("code"), "Final hidden states for CLS, tokens and SEP")
        .def("pretrain",
             [](Encoder& e, const std::vector<std::string>& codes, double lr, int epochs, std::uint64_t seed) {
                 std::vector<train::Document> docs;
                 for (std::size_t i = 0; i < codes.size(); ++i) docs.push_back({"doc-" + std::to_string(i), codes[i]});
                 train::TrainConfig t;
                 t.lr = lr;
                 t.epochs = epochs;
                 t.seed = seed;
                 py::gil_scoped_release release;
                 auto r = train::pretrain_mlm(train::prepare_corpus(docs, e.vocab, e.config), e.config, t);
                 e.params = std::move(r.params);
                 return r.epoch_loss;
             },
             py::arg("codes"), py::arg("lr") = 1e-3, py::arg("epochs") = 1, py::arg("seed") = 12345);

    m.def(
        "depth_probe",
        [](const Mat& x, const std::vector<double>& y) { return analysis::depth_probe_fit(x, y).r2; },
        py::arg("hidden"), py::arg("normalized_depth"), "Held-out R^2 of the linear depth probe");
    m.def("pca_2d", &analysis::pca_2d, py::arg("x"));
}
