#include "treepos/train.hpp"

#include <cmath>
#include <numeric>

namespace treepos::train {

using model::Decay;
using model::Parameters;

std::vector<std::string> TrainConfig::violations() const {
    std::vector<std::string> v;
    if (!(lr > 0.0)) v.push_back("lr must be positive");
    if (batch_size < 1) v.push_back("batch_size must be positive");
    if (epochs < 1) v.push_back("epochs must be positive");
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) v.push_back("mask_rate must lie in (0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) v.push_back("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) v.push_back("beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) v.push_back("eps must be positive");
    if (!(weight_decay >= 0.0)) v.push_back("weight_decay must be non-negative");
    if (grad_clip && !(*grad_clip > 0.0)) v.push_back("grad_clip must be positive when set");
    if (threads < 1) v.push_back("threads must be positive");
    return v;
}

void TrainConfig::validate() const {
    const auto v = violations();
    if (!v.empty()) {
        std::string msg = "invalid train config:";
        for (const auto& s : v) {
            msg += "\n  - " + s;
        }
        throw ConfigError(msg);
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr", c.lr},
                       {"batch_size", c.batch_size},
                       {"epochs", c.epochs},
                       {"seed", c.seed},
                       {"mask_rate", c.mask_rate},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"eps", c.eps},
                       {"weight_decay", c.weight_decay},
                       {"grad_clip", c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("lr").get_to(c.lr);
    j.at("batch_size").get_to(c.batch_size);
    j.at("epochs").get_to(c.epochs);
    j.at("seed").get_to(c.seed);
    j.at("mask_rate").get_to(c.mask_rate);
    j.at("beta1").get_to(c.beta1);
    j.at("beta2").get_to(c.beta2);
    j.at("eps").get_to(c.eps);
    j.at("weight_decay").get_to(c.weight_decay);
    if (j.at("grad_clip").is_null()) {
        c.grad_clip.reset();
    } else {
        c.grad_clip = j.at("grad_clip").get<double>();
    }
}

// ---------------------------------------------------------------------------

MaskedExample mask_tokens(const tok::AlignedSequence& seq, double mask_rate, int vocab_size, Rng& rng) {
    if (vocab_size <= tok::kNumSpecial) {
        throw ConfigError("mask_tokens: vocabulary has no non-special tokens");
    }
    MaskedExample out{seq, std::vector<int>(seq.ids.size(), tok::kIgnoreLabel)};
    bool any = false;
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
        const int id = seq.ids[i];
        if (tok::Vocab::is_special(id)) {
            continue;
        }
        any = true;
        if (rng.uniform() >= mask_rate) {
            continue;
        }
        out.labels[i] = id;
        const double r = rng.uniform();
        if (r < 0.8) {
            out.input.ids[i] = tok::kMask;
        } else if (r < 0.9) {
            out.input.ids[i] =
                tok::kNumSpecial + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size - tok::kNumSpecial)));
        }
    }
    if (!any) {
        throw NoMaskableToken();
    }
    return out;
}

// ---------------------------------------------------------------------------

AdamState AdamState::zeros_like(const Parameters& p) {
    return AdamState{p.zeros_like(), p.zeros_like(), 0};
}

namespace {

template <class P>
auto tensors(P& p) {
    using M = std::conditional_t<std::is_const_v<P>, const Mat, Mat>;
    std::vector<std::pair<M*, Decay>> out;
    p.for_each([&](const std::string&, M& m, Decay d) { out.emplace_back(&m, d); });
    return out;
}

}  // namespace

double global_norm(const Parameters& grads) {
    double sq = 0.0;
    grads.for_each([&](const std::string&, const Mat& m, Decay) { sq += m.squaredNorm(); });
    return std::sqrt(sq);
}

void adamw_step(Parameters& params, const Parameters& grads, const TrainConfig& cfg, AdamState& state) {
    auto p = tensors(params);
    const auto g = tensors(grads);
    auto m = tensors(state.m);
    auto v = tensors(state.v);
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
        throw ShapeError("adamw_step: parameter, gradient and moment sets differ");
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
        for (const Mat* other : {g[k].first, static_cast<const Mat*>(m[k].first), static_cast<const Mat*>(v[k].first)}) {
            if (other->rows() != p[k].first->rows() || other->cols() != p[k].first->cols()) {
                throw ShapeError("adamw_step: tensor shape mismatch");
            }
        }
    }
    double clip = 1.0;
    if (cfg.grad_clip) {
        const double norm = global_norm(grads);
        if (norm > *cfg.grad_clip) {
            clip = *cfg.grad_clip / norm;
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < p.size(); ++k) {
        Mat& w = *p[k].first;
        Mat& m1 = *m[k].first;
        Mat& m2 = *v[k].first;
        const auto grad = (clip * g[k].first->array()).eval();
        if (p[k].second == Decay::yes && cfg.weight_decay != 0.0) {
            w *= 1.0 - cfg.lr * cfg.weight_decay;
        }
        m1.array() = cfg.beta1 * m1.array() + (1.0 - cfg.beta1) * grad;
        m2.array() = cfg.beta2 * m2.array() + (1.0 - cfg.beta2) * grad.square();
        w.array() -= cfg.lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + cfg.eps);
    }
}

void round_to_storage(Parameters& params, AdamState& state) {
    for (auto* p : {&params, &state.m, &state.v}) {
        p->for_each([](const std::string&, Mat& m, Decay) { round_to_f32(m); });
    }
}

// ---------------------------------------------------------------------------
// Loops

namespace {

struct LoopSpec {
    std::size_t n = 0;
    model::LossKind kind = model::LossKind::mlm;
    Averaging averaging = Averaging::weighted;
    // Builds the example for item `idx` at (epoch, step, slot within batch).
    std::function<model::Example(std::size_t idx, int epoch, std::int64_t step, std::size_t slot)> make;
    std::function<void(int epoch, std::int64_t step, TrainResult&)> on_epoch_end;
};

void run_loop(TrainResult& r, const model::ModelConfig& mcfg, const TrainConfig& cfg, const LoopSpec& spec,
              const StepHook& hook) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    std::vector<std::size_t> order(spec.n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool weighted = mcfg.strategy == embed::StrategyKind::weighted_sum;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t count = 0;
        std::vector<int> preds;
        std::vector<int> targets;
        for (std::size_t start = 0; start < spec.n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(spec.n, start + static_cast<std::size_t>(cfg.batch_size));
            const std::int64_t step = r.opt.step;
            std::vector<model::Example> batch;
            batch.reserve(end - start);
            for (std::size_t j = start; j < end; ++j) {
                batch.push_back(spec.make(order[j], epoch, step, j - start));
            }
            StepLog log;
            log.step = step;
            if (weighted) {
                const auto c = embed::coefficients(r.params.strategy);
                log.coefficients.assign(c.begin(), c.end());
            }
            Parameters grads = r.params.zeros_like();
            auto bl = model::batch_loss(r.params, mcfg, batch, spec.kind, true, &grads, cfg.threads);
            adamw_step(r.params, grads, cfg, r.opt);
            round_to_storage(r.params, r.opt);
            log.loss = bl.loss;
            r.steps.push_back(std::move(log));
            loss_sum += bl.loss * static_cast<double>(bl.count);
            count += bl.count;
            preds.insert(preds.end(), bl.predictions.begin(), bl.predictions.end());
            targets.insert(targets.end(), bl.targets.begin(), bl.targets.end());
            if (hook) {
                hook(r.opt.step, r.params, r.opt);
            }
        }
        const double avg = count > 0 ? loss_sum / static_cast<double>(count) : 0.0;
        r.epoch_loss.push_back(avg);
        Metrics m;
        if (!preds.empty()) {
            m = compute_metrics(preds, targets, spec.averaging);
        }
        m.loss = avg;
        r.metrics.push_back({"train", r.opt.step, m});
        if (spec.on_epoch_end) {
            spec.on_epoch_end(epoch, r.opt.step, r);
        }
    }
}

}  // namespace

TrainResult pretrain_mlm(const std::vector<PreparedDoc>& docs, const model::ModelConfig& mcfg, const TrainConfig& cfg,
                         const PretrainOptions& options) {
    if (docs.empty()) {
        throw EmptyCorpus();
    }
    mcfg.validate();
    cfg.validate();
    TrainResult r;
    r.params = options.init ? *options.init : Parameters::init(mcfg, derive_seed(cfg.seed, "init"));
    r.opt = AdamState::zeros_like(r.params);
    const std::uint64_t mask_seed = derive_seed(cfg.seed, "mask");
    const std::uint64_t dropout_seed = derive_seed(cfg.seed, "dropout");
    LoopSpec spec;
    spec.n = docs.size();
    spec.kind = model::LossKind::mlm;
    spec.averaging = Averaging::weighted;
    spec.make = [&](std::size_t idx, int epoch, std::int64_t step, std::size_t slot) {
        Rng rng(derive_seed(mask_seed, static_cast<std::uint64_t>(epoch), idx));
        auto masked = mask_tokens(docs[idx].seq, cfg.mask_rate, mcfg.vocab_size, rng);
        return model::Example{std::move(masked.input), std::move(masked.labels), -1,
                              derive_seed(dropout_seed, static_cast<std::uint64_t>(step), slot)};
    };
    if (options.eval_docs && !options.eval_docs->empty()) {
        spec.on_epoch_end = [&](int, std::int64_t step, TrainResult& res) {
            res.metrics.push_back(
                {"heldout", step, evaluate_mlm(res.params, mcfg, *options.eval_docs, cfg.seed, cfg.mask_rate)});
        };
    }
    run_loop(r, mcfg, cfg, spec, options.hook);
    return r;
}

Metrics evaluate_mlm(const Parameters& params, const model::ModelConfig& mcfg, const std::vector<PreparedDoc>& docs,
                     std::uint64_t seed, double mask_rate) {
    const std::uint64_t mask_seed = derive_seed(seed, "eval-mask");
    std::vector<model::Example> batch;
    double loss_sum = 0.0;
    std::size_t count = 0;
    std::vector<int> preds;
    std::vector<int> targets;
    auto flush = [&] {
        if (batch.empty()) {
            return;
        }
        auto bl = model::batch_loss(params, mcfg, batch, model::LossKind::mlm, false, nullptr);
        loss_sum += bl.loss * static_cast<double>(bl.count);
        count += bl.count;
        preds.insert(preds.end(), bl.predictions.begin(), bl.predictions.end());
        targets.insert(targets.end(), bl.targets.begin(), bl.targets.end());
        batch.clear();
    };
    for (std::size_t i = 0; i < docs.size(); ++i) {
        Rng rng(derive_seed(mask_seed, i));
        try {
            auto masked = mask_tokens(docs[i].seq, mask_rate, mcfg.vocab_size, rng);
            batch.push_back({std::move(masked.input), std::move(masked.labels), -1, 0});
        } catch (const NoMaskableToken&) {
            continue;
        }
        if (batch.size() == 64) {
            flush();
        }
    }
    flush();
    if (count == 0) {
        return {};
    }
    Metrics m = compute_metrics(preds, targets, Averaging::weighted);
    m.loss = loss_sum / static_cast<double>(count);
    return m;
}

Metrics evaluate_pairs(const Parameters& params, const model::ModelConfig& mcfg, const std::vector<PreparedPair>& pairs) {
    if (pairs.empty()) {
        return {};
    }
    std::vector<model::Example> batch;
    batch.reserve(pairs.size());
    for (const auto& p : pairs) {
        batch.push_back({p.seq, {}, p.label, 0});
    }
    auto bl = model::batch_loss(params, mcfg, batch, model::LossKind::pair, false, nullptr);
    Metrics m = compute_metrics(bl.predictions, bl.targets, Averaging::binary);
    m.loss = bl.loss;
    return m;
}

FinetuneResult finetune_clone(const std::vector<PreparedPair>& pairs, const Parameters& init,
                              const model::ModelConfig& mcfg, const TrainConfig& cfg) {
    mcfg.validate();
    cfg.validate();
    std::vector<PreparedPair> train_set;
    std::vector<PreparedPair> heldout;
    for (const auto& p : pairs) {
        if (p.label != 0 && p.label != 1) {
            throw Error("clone label must be 0 or 1, got " + std::to_string(p.label) + " for pair " + p.id);
        }
        (is_heldout(p.id) ? heldout : train_set).push_back(p);
    }
    if (train_set.empty()) {
        throw EmptyCorpus();
    }
    FinetuneResult out;
    TrainResult& r = out.train;
    r.params = init;
    r.opt = AdamState::zeros_like(r.params);
    const std::uint64_t dropout_seed = derive_seed(cfg.seed, "dropout");
    LoopSpec spec;
    spec.n = train_set.size();
    spec.kind = model::LossKind::pair;
    spec.averaging = Averaging::binary;
    spec.make = [&](std::size_t idx, int, std::int64_t step, std::size_t slot) {
        return model::Example{train_set[idx].seq, {}, train_set[idx].label,
                              derive_seed(dropout_seed, static_cast<std::uint64_t>(step), slot)};
    };
    const auto& eval_set = heldout.empty() ? train_set : heldout;
    spec.on_epoch_end = [&](int, std::int64_t step, TrainResult& res) {
        out.final_metrics = evaluate_pairs(res.params, mcfg, eval_set);
        res.metrics.push_back({"heldout", step, out.final_metrics});
    };
    run_loop(r, mcfg, cfg, spec, {});
    return out;
}

}  // namespace treepos::train
