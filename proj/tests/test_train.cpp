#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "treepos/train.hpp"

using namespace treepos;
using namespace treepos::train;
using embed::StrategyKind;

namespace {

struct Corpus {
    tok::Vocab vocab;
    model::ModelConfig cfg;
    std::vector<Document> docs;
    std::vector<PreparedDoc> prepared;
};

Corpus small_corpus(std::size_t n, StrategyKind kind = StrategyKind::weighted_sum) {
    Corpus c;
    testing::ProgramGen gen(77);
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n; ++i) {
        c.docs.push_back({"doc-" + std::to_string(i), gen.program()});
        texts.push_back(c.docs.back().code);
    }
    c.vocab = tok::train_vocab(texts, 120);
    c.cfg.layers = 1;
    c.cfg.d = 16;
    c.cfg.heads = 2;
    c.cfg.ffn_width = 32;
    c.cfg.max_len = 48;
    c.cfg.vocab_size = static_cast<int>(c.vocab.size());
    c.cfg.strategy = kind;
    c.prepared = prepare_corpus(c.docs, c.vocab, c.cfg);
    return c;
}

TrainConfig fast_train() {
    TrainConfig t;
    t.lr = 1e-3;
    t.batch_size = 8;
    t.epochs = 2;
    t.seed = 42;
    return t;
}

// Per-class one-vs-rest counts computed from scratch.
Metrics oracle_metrics(const std::vector<int>& pred, const std::vector<int>& lab, Averaging avg) {
    const double n = static_cast<double>(lab.size());
    double correct = 0.0;
    for (std::size_t i = 0; i < lab.size(); ++i) correct += pred[i] == lab[i];
    std::set<int> classes(lab.begin(), lab.end());
    if (avg == Averaging::binary) classes = {1};
    Metrics m;
    m.accuracy = correct / n;
    for (int c : classes) {
        double tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < lab.size(); ++i) {
            tp += pred[i] == c && lab[i] == c;
            fp += pred[i] == c && lab[i] != c;
            fn += pred[i] != c && lab[i] == c;
            support += lab[i] == c;
        }
        const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        const double w = avg == Averaging::binary ? 1.0 : support / n;
        m.precision += w * p;
        m.recall += w * r;
        m.f1 += w * f;
    }
    return m;
}

std::string temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "treepos-test";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

bool same_params(const model::Parameters& a, const model::Parameters& b) {
    std::vector<const Mat*> xs;
    a.for_each([&](const std::string&, const Mat& m, model::Decay) { xs.push_back(&m); });
    std::size_t i = 0;
    bool same = true;
    b.for_each([&](const std::string&, const Mat& m, model::Decay) {
        same = same && i < xs.size() && m.rows() == xs[i]->rows() && m.cols() == xs[i]->cols() && m == *xs[i];
        ++i;
    });
    return same && i == xs.size();
}

}  // namespace

TEST_CASE("train config") {
    TrainConfig t;
    CHECK(t.lr == 1e-5);
    CHECK(t.batch_size == 32);
    CHECK(t.epochs == 3);
    CHECK(t.violations().empty());
    t.mask_rate = 0.0;
    t.batch_size = 0;
    t.grad_clip = -1.0;
    CHECK(t.violations().size() == 3);
    CHECK_THROWS_AS(t.validate(), ConfigError);
    TrainConfig u;
    u.grad_clip = 1.5;
    nlohmann::json j = u;
    CHECK(j.get<TrainConfig>() == u);
    nlohmann::json k = TrainConfig{};
    CHECK(k["grad_clip"].is_null());
}

TEST_CASE("mask_tokens: seeded behaviour and errors") {
    auto cfg = testing::tiny_config(StrategyKind::sum);
    const auto seq = testing::toy_sequence(cfg, 8, 1);
    Rng rng(5);
    const auto none = mask_tokens(seq, 1e-12, cfg.vocab_size, rng);
    CHECK(none.input.ids == seq.ids);
    for (int l : none.labels) CHECK(l == tok::kIgnoreLabel);

    auto specials = testing::toy_sequence(cfg, 0, 1);
    CHECK_THROWS_AS(mask_tokens(specials, 0.15, cfg.vocab_size, rng), NoMaskableToken);
    CHECK_THROWS_AS(mask_tokens(seq, 0.15, 5, rng), ConfigError);

    const auto all = mask_tokens(seq, 0.999999, cfg.vocab_size, rng);
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        CHECK(all.input.depth_idx[i] == seq.depth_idx[i]);
        CHECK(all.input.sibling_idx[i] == seq.sibling_idx[i]);
        CHECK(all.input.align_mask[i] == seq.align_mask[i]);
        if (tok::Vocab::is_special(seq.ids[i])) {
            CHECK(all.labels[i] == tok::kIgnoreLabel);
            CHECK(all.input.ids[i] == seq.ids[i]);
        } else {
            CHECK(all.labels[i] == seq.ids[i]);
        }
    }
}

TEST_CASE("mask_tokens: Monte Carlo rates") {
    auto cfg = testing::tiny_config(StrategyKind::sum);
    cfg.max_len = 102;
    cfg.vocab_size = 1000;
    const auto seq = testing::toy_sequence(cfg, 100, 9);
    Rng rng(2024);
    double selected = 0, masked = 0, random = 0, kept = 0, total = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto m = mask_tokens(seq, 0.15, cfg.vocab_size, rng);
        for (std::size_t i = 0; i < seq.ids.size(); ++i) {
            if (tok::Vocab::is_special(seq.ids[i])) continue;
            ++total;
            if (m.labels[i] == tok::kIgnoreLabel) {
                CHECK(m.input.ids[i] == seq.ids[i]);
                continue;
            }
            ++selected;
            if (m.input.ids[i] == tok::kMask) {
                ++masked;
            } else if (m.input.ids[i] == seq.ids[i]) {
                ++kept;  // includes random draws that hit the original id (p = 1/995)
            } else {
                CHECK(m.input.ids[i] >= tok::kNumSpecial);
                ++random;
            }
        }
    }
    CHECK(std::abs(selected / total - 0.15) < 0.01);
    CHECK(std::abs(masked / selected - 0.8) < 0.02);
    CHECK(std::abs(random / selected - 0.1) < 0.02);
    CHECK(std::abs(kept / selected - 0.1) < 0.02);
}

TEST_CASE("adamw_step") {
    model::ModelConfig cfg = testing::tiny_config(StrategyKind::sum);
    SUBCASE("zero gradient, zero decay") {
        auto p = testing::random_params(cfg, 1);
        const auto before = p;
        auto st = AdamState::zeros_like(p);
        TrainConfig t;
        t.weight_decay = 0.0;
        adamw_step(p, p.zeros_like(), t, st);
        CHECK(same_params(p, before));
        CHECK(st.step == 1);
    }
    SUBCASE("closed-form single step") {
        model::Parameters p = model::Parameters::zeros(cfg);
        p.mlm_w(0, 0) = 1.0;
        auto g = p.zeros_like();
        g.mlm_w(0, 0) = 1.0;
        auto st = AdamState::zeros_like(p);
        TrainConfig t;
        t.lr = 0.1;
        adamw_step(p, g, t, st);
        // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1; decay first: w = 1 - 0.1 * 0.01
        CHECK(st.m.mlm_w(0, 0) == doctest::Approx(0.1).epsilon(1e-15));
        CHECK(st.v.mlm_w(0, 0) == doctest::Approx(0.001).epsilon(1e-12));
        const double expected = (1.0 - 0.1 * 0.01) - 0.1 * 1.0 / (1.0 + 1e-8);
        CHECK(std::abs(p.mlm_w(0, 0) - expected) < 1e-15);
    }
    SUBCASE("decay only") {
        model::Parameters p = model::Parameters::zeros(cfg);
        p.mlm_w(1, 1) = 2.0;
        p.mlm_b(0, 1) = 2.0;  // bias: never decayed
        p.emb_ln_g(0, 0) = 2.0;
        auto st = AdamState::zeros_like(p);
        TrainConfig t;
        t.lr = 0.1;
        t.weight_decay = 0.5;
        double w = 2.0;
        for (int i = 0; i < 3; ++i) {
            adamw_step(p, p.zeros_like(), t, st);
            w -= 0.1 * 0.5 * w;
            CHECK(p.mlm_w(1, 1) == doctest::Approx(w).epsilon(1e-15));
        }
        CHECK(p.mlm_b(0, 1) == 2.0);
        CHECK(p.emb_ln_g(0, 0) == 2.0);
    }
    SUBCASE("clipping and shape checks") {
        model::Parameters p = model::Parameters::zeros(cfg);
        auto g = p.zeros_like();
        g.mlm_b(0, 0) = 30.0;
        g.mlm_b(0, 1) = 40.0;
        CHECK(global_norm(g) == 50.0);
        auto st = AdamState::zeros_like(p);
        TrainConfig t;
        t.grad_clip = 5.0;
        adamw_step(p, g, t, st);
        CHECK(st.m.mlm_b(0, 0) == doctest::Approx(0.1 * 3.0));
        auto other = model::Parameters::zeros(testing::tiny_config(StrategyKind::concat));
        CHECK_THROWS_AS(adamw_step(p, other, t, st), ShapeError);
    }
}

TEST_CASE("compute_metrics: fixed cases") {
    SUBCASE("perfect") {
        const std::vector<int> y = {0, 1, 2, 1, 0};
        for (auto avg : {Averaging::weighted}) {
            const auto m = compute_metrics(y, y, avg);
            CHECK(m.accuracy == 1.0);
            CHECK(m.f1 == 1.0);
            CHECK(m.precision == 1.0);
            CHECK(m.recall == 1.0);
        }
    }
    SUBCASE("binary TP=2 FP=1 FN=1 TN=6") {
        std::vector<int> pred = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
        std::vector<int> lab = {1, 1, 0, 1, 0, 0, 0, 0, 0, 0};
        const auto m = compute_metrics(pred, lab, Averaging::binary);
        CHECK(m.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(m.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(m.accuracy == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("weighted on three classes by hand") {
        // class 0: tp 1 fp 1 fn 1 -> p 1/2 r 1/2; class 1: tp 2 fp 0 fn 0; class 2: tp 0 fp 1 fn 1
        const std::vector<int> lab = {0, 0, 1, 1, 2};
        const std::vector<int> pred = {0, 2, 1, 1, 0};
        const auto m = compute_metrics(pred, lab, Averaging::weighted);
        CHECK(m.accuracy == doctest::Approx(0.6));
        CHECK(m.precision == doctest::Approx(0.4 * 0.5 + 0.4 * 1.0));
        CHECK(m.recall == doctest::Approx(0.4 * 0.5 + 0.4 * 1.0));
        CHECK(m.f1 == doctest::Approx(0.4 * 0.5 + 0.4 * 1.0));
    }
    SUBCASE("degenerate all-zero") {
        const std::vector<int> zeros(20, 0);
        const auto m = compute_metrics(zeros, zeros, Averaging::binary);
        CHECK(m.accuracy == 1.0);
        CHECK(m.precision == 0.0);
        CHECK(m.recall == 0.0);
        CHECK(m.f1 == 0.0);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_metrics({1}, {1, 0}, Averaging::binary), Error);
        CHECK_THROWS_AS(compute_metrics({}, {}, Averaging::binary), Error);
    }
}

TEST_CASE("compute_metrics: confusion-matrix oracle on random sets") {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + rng.below(60);
        const bool binary = trial % 2 == 0;
        const auto classes = binary ? 2 : 2 + rng.below(6);
        std::vector<int> pred(n), lab(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = static_cast<int>(rng.below(classes));
            lab[i] = static_cast<int>(rng.below(classes));
        }
        const auto avg = binary ? Averaging::binary : Averaging::weighted;
        const auto got = compute_metrics(pred, lab, avg);
        const auto want = oracle_metrics(pred, lab, avg);
        CHECK(got.accuracy == doctest::Approx(want.accuracy).epsilon(1e-12));
        CHECK(got.precision == doctest::Approx(want.precision).epsilon(1e-12));
        CHECK(got.recall == doctest::Approx(want.recall).epsilon(1e-12));
        CHECK(got.f1 == doctest::Approx(want.f1).epsilon(1e-12));
    }
}

TEST_CASE("metrics csv") {
    CHECK(std::string(kMetricsHeader) == "split,step,loss,accuracy,f1,precision,recall");
    const MetricsRow row{"train", 7, {1.5, 0.25, 0.5, 0.75, 1.0}};
    CHECK(format_metrics_row(row) == "train,7,1.500000,0.250000,0.500000,0.750000,1.000000");
    CHECK(metrics_csv({row}) == std::string(kMetricsHeader) + "\n" + format_metrics_row(row) + "\n");
}

TEST_CASE("held-out split is about one in ten and stable") {
    int held = 0;
    for (int i = 0; i < 5000; ++i) {
        const std::string id = "doc-" + std::to_string(i);
        held += is_heldout(id);
        CHECK(is_heldout(id) == is_heldout(id));
    }
    CHECK(held > 400);
    CHECK(held < 600);
}

TEST_CASE("jsonl round trip and errors") {
    const std::vector<Document> docs = {{"a", "fn f(){}"}, {"b", "fn g(x){return \"x\";}\n"}};
    const auto path = temp_path("docs.jsonl");
    write_corpus_jsonl(path, docs);
    const auto back = read_corpus_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].id == "b");
    CHECK(back[1].code == docs[1].code);

    const std::vector<CodePair> pairs = {{"fn a(){}", "fn b(){}", 1}, {"fn c(){}", "fn d(){}", 0}};
    const auto ppath = temp_path("pairs.jsonl");
    write_pairs_jsonl(ppath, pairs);
    const auto pb = read_pairs_jsonl(ppath);
    REQUIRE(pb.size() == 2);
    CHECK(pb[0].label == 1);
    CHECK(pb[1].code2 == "fn d(){}");

    CHECK_THROWS_AS(read_corpus_jsonl(temp_path("missing.jsonl")), IoError);
    std::ofstream(temp_path("bad.jsonl")) << "{\"code\": 3}\n";
    CHECK_THROWS_AS(read_corpus_jsonl(temp_path("bad.jsonl")), Error);
}

TEST_CASE("untrained loss is near ln(vocab)") {
    auto cfg = testing::tiny_config(StrategyKind::weighted_sum);
    cfg.d = 64;
    cfg.heads = 4;
    cfg.ffn_width = 256;
    cfg.vocab_size = 1000;
    cfg.max_len = 64;
    const auto p = model::Parameters::init(cfg, derive_seed(12345, "init"));
    std::vector<model::Example> batch;
    Rng rng(3);
    for (std::uint64_t i = 0; i < 32; ++i) {
        auto m = mask_tokens(testing::toy_sequence(cfg, 50, i), 0.15, cfg.vocab_size, rng);
        batch.push_back({m.input, m.labels, -1, 0});
    }
    const auto l = model::batch_loss(p, cfg, batch, model::LossKind::mlm, false, nullptr);
    CHECK(std::abs(l.loss - std::log(1000.0)) < 0.05 * std::log(1000.0));
}

TEST_CASE("pretrain: deterministic, logs coefficients, loss falls") {
    const auto c = small_corpus(48);
    const auto t = fast_train();
    std::vector<std::int64_t> hooked;
    PretrainOptions opt;
    opt.hook = [&](std::int64_t step, const model::Parameters&, const AdamState& st) {
        hooked.push_back(step);
        CHECK(st.step == step);
    };
    const auto a = pretrain_mlm(c.prepared, c.cfg, t, opt);
    const auto b = pretrain_mlm(c.prepared, c.cfg, t);
    CHECK(metrics_csv(a.metrics) == metrics_csv(b.metrics));
    CHECK(same_params(a.params, b.params));
    REQUIRE(a.steps.size() == 12);
    CHECK(hooked.size() == 12);
    CHECK(a.steps[0].coefficients == std::vector<double>(5, 0.2));
    for (std::size_t i = 0; i < a.steps.size(); ++i) {
        CHECK(a.steps[i].loss == b.steps[i].loss);
        CHECK(a.steps[i].step == static_cast<std::int64_t>(i));
    }
    CHECK(a.epoch_loss.size() == 2);
    CHECK(a.epoch_loss[1] < a.epoch_loss[0]);
    CHECK(a.metrics.size() == 2);
    CHECK(a.metrics[0].split == "train");

    auto t2 = t;
    t2.seed = 43;
    const auto d = pretrain_mlm(c.prepared, c.cfg, t2);
    CHECK(metrics_csv(d.metrics) != metrics_csv(a.metrics));

    auto t4 = t;
    t4.threads = 3;
    CHECK(metrics_csv(pretrain_mlm(c.prepared, c.cfg, t4).metrics) == metrics_csv(a.metrics));

    CHECK_THROWS_AS(pretrain_mlm({}, c.cfg, t), EmptyCorpus);
}

TEST_CASE("pretrain: ablated arm keeps structural tables at zero") {
    auto c = small_corpus(24, StrategyKind::sum);
    c.cfg.structural = false;
    const auto r = pretrain_mlm(c.prepared, c.cfg, fast_train());
    CHECK(r.params.tables.depth.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.params.tables.sibling.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.params.tables.word.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("finetune: pair handling") {
    auto c = small_corpus(8, StrategyKind::concat);
    std::vector<CodePair> pairs;
    for (std::size_t i = 0; i < 40; ++i) {
        pairs.push_back({c.docs[i % 8].code, c.docs[(i + 3) % 8].code, 0});
    }
    c.cfg.max_len = 20;  // forces truncation
    const auto prepared = prepare_pairs(pairs, c.vocab, c.cfg);
    for (const auto& p : prepared) {
        CHECK(p.seq.ids.size() == 20);
        CHECK(p.seq.ids.back() == tok::kSep);
        CHECK(std::count(p.seq.ids.begin(), p.seq.ids.end(), tok::kSep) == 3);
    }
    auto init = model::Parameters::init(c.cfg, 1);
    // Constant-0 predictor on all-zero labels.
    init.pair_b << 5.0, -5.0;
    const auto m = evaluate_pairs(init, c.cfg, prepared);
    CHECK(m.accuracy == 1.0);

    auto t = fast_train();
    t.epochs = 1;
    const auto r = finetune_clone(prepared, init, c.cfg, t);
    CHECK(r.final_metrics.accuracy == 1.0);
    CHECK(r.train.metrics.back().split == "heldout");

    auto bad = prepared;
    bad[0].label = 2;
    CHECK_THROWS_AS(finetune_clone(bad, init, c.cfg, t), Error);
}

TEST_CASE("checkpoint round trip is bit exact") {
    const auto c = small_corpus(16, StrategyKind::concat);
    auto t = fast_train();
    t.epochs = 1;
    const auto r = pretrain_mlm(c.prepared, c.cfg, t);
    Checkpoint ck{c.cfg, t, r.params, r.opt, r.opt.step, t.seed, c.vocab};
    const auto path = temp_path("ckpt.tpc");
    save_checkpoint(path, ck);
    const auto back = load_checkpoint(path);
    CHECK(back.model == c.cfg);
    CHECK(back.train == t);
    CHECK(back.step == ck.step);
    CHECK(back.seed == t.seed);
    REQUIRE(back.vocab.has_value());
    CHECK(back.vocab->tokens() == c.vocab.tokens());
    REQUIRE(back.opt.has_value());
    CHECK(same_params(back.params, r.params));
    CHECK(same_params(back.opt->m, r.opt.m));
    CHECK(same_params(back.opt->v, r.opt.v));
    CHECK(back.opt->step == r.opt.step);
    const auto& seq = c.prepared[0].seq;
    const auto mask = model::build_tree_attention_mask(seq, c.cfg);
    CHECK(model::encode(back.params, c.cfg, seq, mask, false, 0) == model::encode(r.params, c.cfg, seq, mask, false, 0));

    const std::string bytes = serialize_checkpoint(ck);
    CHECK(bytes.substr(0, 4) == "TPC1");
    CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint("TPC2" + bytes.substr(4)), CheckpointError);
    CHECK_THROWS_AS(deserialize_checkpoint("TP"), CheckpointError);
    CHECK_THROWS_AS(load_checkpoint(temp_path("nope.tpc")), IoError);

    Checkpoint bare{c.cfg, t, r.params, std::nullopt, 0, 1, std::nullopt};
    const auto bare_back = deserialize_checkpoint(serialize_checkpoint(bare));
    CHECK_FALSE(bare_back.opt.has_value());
    CHECK_FALSE(bare_back.vocab.has_value());
}
