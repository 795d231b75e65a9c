#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "support.hpp"
#include "treepos/analysis.hpp"

using namespace treepos;
using namespace treepos::analysis;
using embed::StrategyKind;

namespace {

// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
void jacobi(Eigen::MatrixXd a, Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
    const Eigen::Index n = a.rows();
    vectors = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = vectors(k, p), vkq = vectors(k, q);
                    vectors(k, p) = c * vkp - s * vkq;
                    vectors(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    values = a.diagonal();
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    Rng rng(seed);
    return Mat::NullaryExpr(r, c, [&]() { return rng.normal(); });
}

struct Setup {
    tok::Vocab vocab;
    model::ModelConfig cfg;
    std::vector<train::Document> docs;
    std::vector<train::PreparedDoc> prepared;
};

Setup probe_setup(std::size_t n_docs) {
    Setup s;
    s.docs = gen_depth_probe_corpus({n_docs, 0, 9}).docs;
    std::vector<std::string> texts;
    for (const auto& d : s.docs) texts.push_back(d.code);
    s.vocab = tok::train_vocab(texts, 200);
    s.cfg.layers = 1;
    s.cfg.d = 16;
    s.cfg.heads = 2;
    s.cfg.ffn_width = 32;
    s.cfg.max_len = 96;
    s.cfg.vocab_size = static_cast<int>(s.vocab.size());
    s.prepared = train::prepare_corpus(s.docs, s.vocab, s.cfg);
    return s;
}

}  // namespace

TEST_CASE("trajectory: uniform start, rows sum to one, matches checkpointed weights") {
    auto s = probe_setup(40);
    train::TrainConfig t;
    t.lr = 1e-2;
    t.batch_size = 4;
    t.epochs = 10;  // 100 steps
    std::map<std::int64_t, Mat> raw;
    train::PretrainOptions opt;
    opt.hook = [&](std::int64_t step, const model::Parameters& p, const train::AdamState&) {
        raw[step] = p.strategy.raw_weights;
    };
    const auto run = train::pretrain_mlm(s.prepared, s.cfg, t, opt);
    const auto log = log_trajectory(run, s.cfg);
    REQUIRE(log.rows.size() == 100);
    for (double c : log.rows[0].coefficients) CHECK(c == 0.2);
    for (const auto& row : log.rows) {
        const double sum = std::accumulate(row.coefficients.begin(), row.coefficients.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-6);
        if (row.step == 0) continue;
        // Row k holds the coefficients used by step k, i.e. the weights after step k-1's update.
        const Mat& w = raw.at(row.step);
        double z = 0.0;
        for (int i = 0; i < 5; ++i) z += std::exp(w(0, i));
        for (int i = 0; i < 5; ++i) {
            CHECK(row.coefficients[static_cast<std::size_t>(i)] == doctest::Approx(std::exp(w(0, i)) / z).epsilon(1e-14));
        }
    }
    CHECK(log.rows.back().coefficients != log.rows.front().coefficients);
    const std::string csv = trajectory_csv(log);
    CHECK(csv.rfind("step,word,position,token_type,depth,sibling\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 101);

    s.cfg.strategy = StrategyKind::sum;
    CHECK_THROWS_AS(log_trajectory(run, s.cfg), WrongStrategy);
}

TEST_CASE("export_hidden") {
    auto s = probe_setup(6);
    const auto p = model::Parameters::init(s.cfg, 3);
    SUBCASE("one row per aligned token, depths from the tree") {
        const auto ex = export_hidden(p, s.cfg, s.prepared);
        std::size_t expected = 0;
        for (const auto& d : s.prepared) {
            for (int m : d.seq.align_mask) expected += static_cast<std::size_t>(m);
        }
        CHECK(ex.rows() == expected);
        CHECK(ex.hidden.rows() == static_cast<Eigen::Index>(expected));
        CHECK(ex.hidden.cols() == s.cfg.d);
        std::size_t r = 0;
        for (const auto& d : s.prepared) {
            const auto& t = d.ast;
            for (std::size_t i = 0; i < d.seq.ids.size(); ++i) {
                if (!d.seq.align_mask[i]) continue;
                const auto node = static_cast<ast::NodeId>(d.seq.node[i]);
                const double want = (testing::path_depth(t, node) - 1.0) / (t.max_depth() - 1.0);
                CHECK(ex.doc_id[r] == d.id);
                CHECK(ex.normalized_depth[r] == doctest::Approx(want).epsilon(1e-15));
                ++r;
            }
        }
    }
    SUBCASE("single-token document") {
        train::Document one{"one", "fn"};
        tok::Vocab v;
        v.add("fn");
        auto cfg = s.cfg;
        cfg.vocab_size = static_cast<int>(v.size());
        // "fn" alone is not a program, so build the tree by hand.
        train::PreparedDoc d;
        d.id = "one";
        d.ast = ast::assign_positions(ast::import_ast(R"({"kind":"x","start":0,"end":2,"children":[]})", std::string("fn")));
        d.tokens = tok::tokenize("fn", v);
        d.seq = tok::align(d.tokens, d.ast, static_cast<std::size_t>(cfg.max_len), 0);
        const auto ex = export_hidden(model::Parameters::init(cfg, 1), cfg, {d});
        CHECK(ex.rows() == 1);
        CHECK(ex.normalized_depth[0] == 0.0);
    }
    SUBCASE("checkpoint mismatches") {
        train::Checkpoint ck{s.cfg, {}, p, std::nullopt, 0, 0, std::nullopt};
        CHECK_THROWS_AS(export_hidden(ck, s.docs), CorpusMismatch);
        tok::Vocab small;
        ck.vocab = small;
        CHECK_THROWS_AS(export_hidden(ck, s.docs), CorpusMismatch);
        ck.vocab = s.vocab;
        CHECK(export_hidden(ck, s.docs).rows() > 0);
        auto cfg = s.cfg;
        cfg.vocab_size = 10;
        CHECK_THROWS_AS(export_hidden(model::Parameters::init(cfg, 1), cfg, s.prepared), CorpusMismatch);
    }
    SUBCASE("tsv round trip") {
        const auto ex = export_hidden(p, s.cfg, s.prepared);
        const std::string tsv = hidden_tsv(ex);
        CHECK(tsv.rfind("doc_id\ttoken_index\tnormalized_depth\th0\th1", 0) == 0);
        const auto back = parse_hidden_tsv(tsv);
        CHECK(back.doc_id == ex.doc_id);
        CHECK(back.token_index == ex.token_index);
        for (std::size_t i = 0; i < ex.rows(); ++i) {
            CHECK(std::abs(back.normalized_depth[i] - ex.normalized_depth[i]) < 1e-8);
        }
        CHECK((back.hidden - ex.hidden).cwiseAbs().maxCoeff() < 1e-7);
    }
}

TEST_CASE("pca") {
    SUBCASE("rank-2 data keeps pairwise distances") {
        const Mat basis = random_mat(2, 6, 1);
        const Mat coords = random_mat(30, 2, 2);
        const Mat x = (coords * basis).rowwise() + random_mat(1, 6, 3).row(0);
        const Mat y = pca_2d(x);
        for (Eigen::Index i = 0; i < 30; ++i) {
            for (Eigen::Index j = 0; j < 30; ++j) {
                CHECK(std::abs((x.row(i) - x.row(j)).norm() - (y.row(i) - y.row(j)).norm()) < 1e-9);
            }
        }
    }
    SUBCASE("collinear points") {
        Mat x(3, 3);
        x << 1, 2, 3, 2, 4, 6, 4, 8, 12;
        const Mat y = pca_2d(x);
        const double mean = y.col(1).mean();
        CHECK((y.col(1).array() - mean).square().sum() < 1e-20);
    }
    SUBCASE("eigendecomposition oracle on 50x8") {
        const Mat x = random_mat(50, 8, 4);
        const Mat centred = x.rowwise() - x.colwise().mean();
        const Eigen::MatrixXd cov = centred.transpose() * centred / 49.0;
        Eigen::VectorXd vals;
        Eigen::MatrixXd vecs;
        jacobi(cov, vals, vecs);
        std::vector<Eigen::Index> order(8);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return vals(a) > vals(b); });
        const Mat y = pca_2d(x);
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd v = vecs.col(order[static_cast<std::size_t>(c)]);
            Eigen::Index arg = 0;
            v.cwiseAbs().maxCoeff(&arg);
            if (v(arg) < 0) v = -v;
            const Eigen::VectorXd want = centred * v;
            CHECK((y.col(c) - want).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
    SUBCASE("too few rows") {
        CHECK_THROWS_AS(pca_2d(Mat::Zero(2, 4)), TooFewRows);
    }
}

TEST_CASE("tsne is seeded and separates clusters") {
    Mat x(60, 5);
    Rng rng(8);
    for (Eigen::Index i = 0; i < 60; ++i) {
        for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = (i < 30 ? 0.0 : 10.0) + rng.normal();
    }
    const TsneOptions o;
    const Mat a = tsne_2d(x, 1, o);
    const Mat b = tsne_2d(x, 1, o);
    CHECK(a == b);
    CHECK(a.rows() == 60);
    CHECK(a.cols() == 2);
    CHECK(tsne_2d(x, 2, o) != a);
    // nearest neighbour of each point should sit in its own cluster
    int same = 0;
    for (Eigen::Index i = 0; i < 60; ++i) {
        Eigen::Index best = -1;
        double bd = 1e300;
        for (Eigen::Index j = 0; j < 60; ++j) {
            if (j == i) continue;
            const double dist = (a.row(i) - a.row(j)).squaredNorm();
            if (dist < bd) {
                bd = dist;
                best = j;
            }
        }
        if ((best < 30) == (i < 30)) ++same;
    }
    CHECK(same >= 57);
    CHECK_THROWS_AS(tsne_2d(Mat::Zero(2, 3), 1), TooFewRows);
}

TEST_CASE("projection outputs") {
    HiddenExport ex;
    ex.hidden = random_mat(5, 4, 1);
    for (int i = 0; i < 5; ++i) {
        ex.doc_id.push_back("d");
        ex.token_index.push_back(i);
        ex.normalized_depth.push_back(i / 4.0);
    }
    const auto p = project_2d(ex, Projection::pca, 0);
    const std::string csv = projection_csv(p);
    CHECK(csv.rfind("doc_id,token_index,x,y,normalized_depth\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
    const std::string svg = projection_svg(p);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    std::size_t circles = 0;
    for (auto pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++circles;
    CHECK(circles == 5);
    CHECK(projection_from_string("tsne") == Projection::tsne);
    CHECK_THROWS_AS(projection_from_string("umap"), ConfigError);

    const Rgb lo = depth_color(0.0), hi = depth_color(1.0), mid = depth_color(0.5);
    CHECK((lo.r == 0x44 && lo.g == 0x01 && lo.b == 0x54));
    CHECK((hi.r == 0xfd && hi.g == 0xe7 && hi.b == 0x25));
    CHECK((mid.r == 0x21 && mid.g == 0x91 && mid.b == 0x8c));
    const Rgb clamp = depth_color(7.0);
    CHECK(clamp.r == hi.r);
}

TEST_CASE("depth probe") {
    SUBCASE("one-hot of quantised depth") {
        Rng rng(1);
        Mat x = Mat::Zero(600, 7);
        std::vector<double> y;
        for (Eigen::Index i = 0; i < 600; ++i) {
            const auto level = static_cast<Eigen::Index>(rng.below(7));
            x(i, level) = 1.0;
            y.push_back(static_cast<double>(level) / 6.0);
        }
        CHECK(depth_probe_fit(x, y).r2 > 0.99);
    }
    SUBCASE("noise on 1000 rows") {
        Rng rng(2);
        const Mat x = random_mat(1000, 32, 3);
        std::vector<double> y;
        for (int i = 0; i < 1000; ++i) y.push_back(static_cast<double>(rng.below(7)) / 6.0);
        const auto fit = depth_probe_fit(x, y);
        CHECK(fit.r2 <= 0.1);
        CHECK(fit.train_rows == 800);
        CHECK(fit.test_rows == 200);
    }
    SUBCASE("constant predictor and constant target") {
        const std::vector<double> y = {0.1, 0.5, 0.9, 0.3};
        const double mean = std::accumulate(y.begin(), y.end(), 0.0) / 4.0;
        CHECK(r_squared(y, std::vector<double>(4, mean)) == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(r_squared({0.5, 0.5}, {0.1, 0.9}) == 0.0);
    }
    SUBCASE("too few rows") {
        CHECK_THROWS_AS(depth_probe_fit(Mat::Zero(5, 4), std::vector<double>(5, 0.0)), TooFewRows);
    }
}

TEST_CASE("generator: determinism, depth spread, answers from depth") {
    const auto a = gen_depth_probe_corpus({300, 100, 12345});
    const auto b = gen_depth_probe_corpus({300, 100, 12345});
    REQUIRE(a.docs.size() == 300);
    REQUIRE(a.pairs.size() == 100);
    for (std::size_t i = 0; i < a.docs.size(); ++i) {
        CHECK(a.docs[i].code == b.docs[i].code);
        CHECK(a.docs[i].id == b.docs[i].id);
    }
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        CHECK(a.pairs[i].code1 == b.pairs[i].code1);
        CHECK(a.pairs[i].code2 == b.pairs[i].code2);
    }
    CHECK(gen_depth_probe_corpus({300, 0, 1}).docs[0].code != a.docs[0].code);

    std::map<int, int> levels;
    tok::Vocab v;
    std::vector<std::string> texts;
    for (const auto& d : a.docs) texts.push_back(d.code);
    v = tok::train_vocab(texts, 150);
    model::ModelConfig cfg;
    cfg.vocab_size = static_cast<int>(v.size());
    cfg.max_len = 512;
    for (const auto& d : a.docs) {
        const auto prepared = train::prepare_document(d, v, cfg);
        int deepest = 0;
        const auto sites = identifier_sites(prepared);
        CHECK_FALSE(sites.empty());
        for (const auto& s : sites) {
            const int level = level_for_depth(s.depth);
            CHECK(level >= 1);
            CHECK(s.name == "v" + std::to_string(level));
            deepest = std::max(deepest, level);
        }
        ++levels[deepest];
    }
    CHECK(levels.size() == 6);
    for (const auto& [level, count] : levels) {
        CHECK(level >= 1);
        CHECK(level <= 6);
        CHECK(count > 25);  // 50 expected per level
    }
}

TEST_CASE("generator: positives are isomorphic, negatives are not") {
    const auto c = gen_depth_probe_corpus({0, 400, 7});
    int positives = 0;
    for (const auto& p : c.pairs) {
        const auto s1 = ast::unordered_shape(ast::parse_mini(p.code1));
        const auto s2 = ast::unordered_shape(ast::parse_mini(p.code2));
        if (p.label == 1) {
            ++positives;
            CHECK(s1 == s2);
        } else {
            CHECK(p.label == 0);
            CHECK(s1 != s2);
        }
    }
    CHECK(positives == 200);
}

TEST_CASE("masked identifier accuracy counts every site") {
    auto s = probe_setup(10);
    const auto p = model::Parameters::init(s.cfg, 5);
    const auto acc = masked_identifier_accuracy(p, s.cfg, s.prepared);
    std::size_t sites = 0;
    for (const auto& d : s.prepared) sites += identifier_sites(d).size();
    CHECK(acc.total == sites);
    CHECK(acc.accuracy() >= 0.0);
    CHECK(acc.accuracy() <= 1.0);
    CHECK(level_for_depth(5) == 1);
    CHECK(level_for_depth(6) == 0);
    CHECK(level_for_depth(15) == 6);
    CHECK(level_for_depth(3) == 0);
}
