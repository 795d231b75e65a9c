#include "treepos/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace treepos::analysis {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

TrajectoryLog log_trajectory(const train::TrainResult& run, const model::ModelConfig& config) {
    if (config.strategy != embed::StrategyKind::weighted_sum) {
        throw WrongStrategy(config.strategy);
    }
    TrajectoryLog log;
    log.rows.reserve(run.steps.size());
    for (const auto& s : run.steps) {
        if (s.coefficients.size() != embed::kNumComponents) {
            throw Error("step " + std::to_string(s.step) + " has no logged coefficients");
        }
        TrajectoryRow row;
        row.step = s.step;
        std::copy(s.coefficients.begin(), s.coefficients.end(), row.coefficients.begin());
        log.rows.push_back(row);
    }
    return log;
}

std::string trajectory_csv(const TrajectoryLog& log) {
    std::string out = kTrajectoryHeader;
    out += '\n';
    for (const auto& r : log.rows) {
        out += std::to_string(r.step);
        for (double c : r.coefficients) {
            out += ',' + fmt("%.10f", c);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------

HiddenExport export_hidden(const model::Parameters& params, const model::ModelConfig& config,
                           const std::vector<train::PreparedDoc>& docs) {
    HiddenExport ex;
    std::vector<Mat> blocks;
    std::size_t total = 0;
    for (const auto& doc : docs) {
        for (int id : doc.seq.ids) {
            if (id >= config.vocab_size) {
                throw CorpusMismatch("document " + doc.id + " has token id " + std::to_string(id) +
                                     " outside the model vocabulary of " + std::to_string(config.vocab_size));
            }
        }
        const auto mask = model::build_tree_attention_mask(doc.seq, config);
        const Mat h = model::encode(params, config, doc.seq, mask, false, 0);
        const auto depths = ast::normalized_depths(doc.ast);
        std::vector<Eigen::Index> keep;
        for (std::size_t i = 0; i < doc.seq.ids.size(); ++i) {
            if (doc.seq.align_mask[i] == 0 || doc.seq.node[i] < 0) {
                continue;
            }
            keep.push_back(static_cast<Eigen::Index>(i));
            ex.doc_id.push_back(doc.id);
            ex.token_index.push_back(doc.seq.token_index[i]);
            ex.normalized_depth.push_back(depths[static_cast<std::size_t>(doc.seq.node[i])]);
        }
        Mat rows(static_cast<Eigen::Index>(keep.size()), h.cols());
        for (std::size_t k = 0; k < keep.size(); ++k) {
            rows.row(static_cast<Eigen::Index>(k)) = h.row(keep[k]);
        }
        total += keep.size();
        blocks.push_back(std::move(rows));
    }
    ex.hidden.resize(static_cast<Eigen::Index>(total), config.d);
    Eigen::Index r = 0;
    for (const auto& b : blocks) {
        ex.hidden.middleRows(r, b.rows()) = b;
        r += b.rows();
    }
    return ex;
}

HiddenExport export_hidden(const train::Checkpoint& ckpt, const std::vector<train::Document>& docs) {
    if (!ckpt.vocab) {
        throw CorpusMismatch("checkpoint carries no vocabulary");
    }
    if (static_cast<int>(ckpt.vocab->size()) != ckpt.model.vocab_size) {
        throw CorpusMismatch("checkpoint vocabulary has " + std::to_string(ckpt.vocab->size()) +
                             " tokens but the model expects " + std::to_string(ckpt.model.vocab_size));
    }
    return export_hidden(ckpt.params, ckpt.model, train::prepare_corpus(docs, *ckpt.vocab, ckpt.model));
}

std::string hidden_tsv(const HiddenExport& ex) {
    std::string out = "doc_id\ttoken_index\tnormalized_depth";
    for (Eigen::Index j = 0; j < ex.hidden.cols(); ++j) {
        out += "\th" + std::to_string(j);
    }
    out += '\n';
    for (std::size_t i = 0; i < ex.rows(); ++i) {
        out += ex.doc_id[i] + '\t' + std::to_string(ex.token_index[i]) + '\t' + fmt("%.9g", ex.normalized_depth[i]);
        for (Eigen::Index j = 0; j < ex.hidden.cols(); ++j) {
            out += '\t' + fmt("%.9g", ex.hidden(static_cast<Eigen::Index>(i), j));
        }
        out += '\n';
    }
    return out;
}

HiddenExport parse_hidden_tsv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("doc_id\ttoken_index\tnormalized_depth", 0) != 0) {
        throw Error("hidden export: missing header");
    }
    const auto width = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), '\t') - 2);
    HiddenExport ex;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            cells.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (static_cast<Eigen::Index>(cells.size()) != width + 3) {
            throw Error("hidden export line " + std::to_string(lineno) + ": expected " + std::to_string(width + 3) +
                        " fields, got " + std::to_string(cells.size()));
        }
        ex.doc_id.push_back(cells[0]);
        ex.token_index.push_back(std::stoi(cells[1]));
        ex.normalized_depth.push_back(std::stod(cells[2]));
        std::vector<double> h;
        for (std::size_t j = 3; j < cells.size(); ++j) {
            h.push_back(std::stod(cells[j]));
        }
        rows.push_back(std::move(h));
    }
    ex.hidden.resize(static_cast<Eigen::Index>(rows.size()), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Eigen::Index j = 0; j < width; ++j) {
            ex.hidden(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
        }
    }
    return ex;
}

// ---------------------------------------------------------------------------

Projection projection_from_string(std::string_view name) {
    if (name == "pca") return Projection::pca;
    if (name == "tsne") return Projection::tsne;
    throw ConfigError("unknown projection '" + std::string(name) + "' (expected pca or tsne)");
}

Mat pca_2d(const Mat& x) {
    if (x.rows() < 3) {
        throw TooFewRows(static_cast<std::size_t>(x.rows()), 3);
    }
    if (x.cols() < 2) {
        throw ShapeError("pca_2d: need at least two columns");
    }
    const Mat centred = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // Eigenvalues ascend; take the last two columns, largest first.
    Eigen::MatrixXd comp(x.cols(), 2);
    comp.col(0) = eig.eigenvectors().col(x.cols() - 1);
    comp.col(1) = eig.eigenvectors().col(x.cols() - 2);
    for (int c = 0; c < 2; ++c) {
        Eigen::Index arg = 0;
        comp.col(c).cwiseAbs().maxCoeff(&arg);
        if (comp(arg, c) < 0) {
            comp.col(c) = -comp.col(c);
        }
    }
    return centred * comp;
}

namespace {

// Conditional probabilities for one row with the bandwidth that matches the
// requested perplexity (natural-log entropy).
void row_affinities(const Mat& d2, Eigen::Index i, double perplexity, Mat& p) {
    const Eigen::Index n = d2.rows();
    const double target = std::log(perplexity);
    double beta = 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 100; ++it) {
        double sum = 0.0;
        double weighted = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) {
                p(i, j) = 0.0;
                continue;
            }
            const double v = std::exp(-d2(i, j) * beta);
            p(i, j) = v;
            sum += v;
            weighted += d2(i, j) * v;
        }
        if (sum <= 0.0) {
            sum = 1e-300;
        }
        const double entropy = std::log(sum) + beta * weighted / sum;
        p.row(i) /= sum;
        const double diff = entropy - target;
        if (std::abs(diff) < 1e-5) {
            break;
        }
        if (diff > 0) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
}

}  // namespace

Mat tsne_2d(const Mat& x, std::uint64_t seed, const TsneOptions& options) {
    const Eigen::Index n = x.rows();
    if (n < 3) {
        throw TooFewRows(static_cast<std::size_t>(n), 3);
    }
    const double perplexity = n < 120 ? static_cast<double>(n) / 4.0 : options.perplexity;
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    Mat d2 = (-2.0 * x * x.transpose()).eval();
    d2.colwise() += sq;
    d2.rowwise() += sq.transpose();
    d2 = d2.cwiseMax(0.0);

    Mat p(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        row_affinities(d2, i, perplexity, p);
    }
    p = ((p + p.transpose()) / (2.0 * static_cast<double>(n))).eval();
    p = p.cwiseMax(1e-12);

    Rng rng(derive_seed(seed, "tsne"));
    Mat y(n, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y.data()[i] = 1e-4 * rng.normal();
    }
    Mat update = Mat::Zero(n, 2);
    Mat gains = Mat::Ones(n, 2);
    Mat num(n, n);
    Mat grad(n, 2);
    for (int it = 0; it < options.iterations; ++it) {
        const double exag = it < options.exaggeration_iters ? options.early_exaggeration : 1.0;
        const double momentum = it < options.exaggeration_iters ? 0.5 : 0.8;
        const Eigen::VectorXd ysq = y.rowwise().squaredNorm();
        num = -2.0 * y * y.transpose();
        num.colwise() += ysq;
        num.rowwise() += ysq.transpose();
        num = (1.0 + num.array()).inverse().matrix();
        num.diagonal().setZero();
        const double z = num.sum();
        // stiffness = (exag * P - Q) .* num
        const Mat stiff = ((exag * p.array() - (num.array() / z).max(1e-12)) * num.array()).matrix();
        const Eigen::VectorXd rowsum = stiff.rowwise().sum();
        grad = 4.0 * (rowsum.asDiagonal() * y - stiff * y);
        for (Eigen::Index k = 0; k < grad.size(); ++k) {
            double& g = gains.data()[k];
            const bool same = (grad.data()[k] > 0) == (update.data()[k] > 0);
            g = same ? g * 0.8 : g + 0.2;
            g = std::max(g, 0.01);
        }
        update = momentum * update - options.learning_rate * gains.cwiseProduct(grad);
        y += update;
        y.rowwise() -= y.colwise().mean();
    }
    return y;
}

Projected project_2d(const HiddenExport& ex, Projection method, std::uint64_t seed) {
    if (ex.rows() < 3) {
        throw TooFewRows(ex.rows(), 3);
    }
    Projected out{ex.doc_id, ex.token_index, {}, ex.normalized_depth};
    out.xy = method == Projection::pca ? pca_2d(ex.hidden) : tsne_2d(ex.hidden, seed);
    return out;
}

std::string projection_csv(const Projected& p) {
    std::string out = kProjectionHeader;
    out += '\n';
    for (std::size_t i = 0; i < p.doc_id.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out += p.doc_id[i] + ',' + std::to_string(p.token_index[i]) + ',' + fmt("%.9g", p.xy(r, 0)) + ',' +
               fmt("%.9g", p.xy(r, 1)) + ',' + fmt("%.9g", p.normalized_depth[i]) + '\n';
    }
    return out;
}

Rgb depth_color(double t) {
    static constexpr std::array<std::array<double, 3>, 5> anchors{{
        {0x44, 0x01, 0x54},
        {0x3b, 0x52, 0x8b},
        {0x21, 0x91, 0x8c},
        {0x5e, 0xc9, 0x62},
        {0xfd, 0xe7, 0x25},
    }};
    if (!(t >= 0.0)) t = 0.0;
    if (t > 1.0) t = 1.0;
    const int step = static_cast<int>(std::lround(t * 255.0));
    const double s = static_cast<double>(step) / 255.0 * 4.0;
    const int k = std::min(3, static_cast<int>(s));
    const double f = s - k;
    std::array<std::uint8_t, 3> c{};
    for (int i = 0; i < 3; ++i) {
        c[i] = static_cast<std::uint8_t>(std::lround(anchors[k][i] + f * (anchors[k + 1][i] - anchors[k][i])));
    }
    return {c[0], c[1], c[2]};
}

std::string projection_svg(const Projected& p, int size) {
    const double margin = 20.0;
    const double span = size - 2 * margin;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (p.xy.rows() > 0) {
        x0 = p.xy.col(0).minCoeff();
        x1 = p.xy.col(0).maxCoeff();
        y0 = p.xy.col(1).minCoeff();
        y1 = p.xy.col(1).maxCoeff();
    }
    const double wx = x1 > x0 ? x1 - x0 : 1.0;
    const double wy = y1 > y0 ? y1 - y0 : 1.0;
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(size) + "\" height=\"" +
           std::to_string(size) + "\" viewBox=\"0 0 " + std::to_string(size) + " " + std::to_string(size) + "\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    char buf[160];
    for (Eigen::Index i = 0; i < p.xy.rows(); ++i) {
        const double cx = margin + (p.xy(i, 0) - x0) / wx * span;
        const double cy = margin + (1.0 - (p.xy(i, 1) - y0) / wy) * span;
        const Rgb c = depth_color(p.normalized_depth[static_cast<std::size_t>(i)]);
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"#%02x%02x%02x\"/>\n", cx, cy,
                      c.r, c.g, c.b);
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

// ---------------------------------------------------------------------------

double r_squared(const std::vector<double>& y, const std::vector<double>& prediction) {
    if (y.size() != prediction.size()) {
        throw ShapeError("r_squared: size mismatch");
    }
    if (y.empty()) {
        return 0.0;
    }
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - prediction[i]) * (y[i] - prediction[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    return ss_tot == 0.0 ? 0.0 : 1.0 - ss_res / ss_tot;
}

ProbeFit depth_probe_fit(const Mat& x, const std::vector<double>& y) {
    const auto n = static_cast<std::size_t>(x.rows());
    const auto d = static_cast<std::size_t>(x.cols());
    if (y.size() != n) {
        throw ShapeError("depth_probe: target count differs from row count");
    }
    if (n < d + 2) {
        throw TooFewRows(n, d + 2);
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(0, "depth-probe-split"));
    rng.shuffle(order.begin(), order.end());
    const std::size_t n_train = std::max<std::size_t>(1, (n * 8) / 10);
    ProbeFit fit;
    fit.train_rows = n_train;
    fit.test_rows = n - n_train;

    const auto p = static_cast<Eigen::Index>(d + 1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd row(p);
    for (std::size_t k = 0; k < n_train; ++k) {
        const auto i = static_cast<Eigen::Index>(order[k]);
        row(0) = 1.0;
        row.tail(p - 1) = x.row(i).transpose();
        a.noalias() += row * row.transpose();
        b += row * y[order[k]];
    }
    for (Eigen::Index j = 1; j < p; ++j) {
        a(j, j) += 1e-6;
    }
    const Eigen::VectorXd w = a.ldlt().solve(b);
    std::vector<double> truth;
    std::vector<double> pred;
    for (std::size_t k = n_train; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(order[k]);
        truth.push_back(y[order[k]]);
        pred.push_back(w(0) + x.row(i).dot(w.tail(p - 1).transpose()));
    }
    fit.r2 = r_squared(truth, pred);
    return fit;
}

double depth_probe(const HiddenExport& ex) { return depth_probe_fit(ex.hidden, ex.normalized_depth).r2; }

// ---------------------------------------------------------------------------
// Generator

namespace {

struct Block;

struct Stmt {
    enum Kind { assign, call, branch } kind = assign;
    std::string target;        // assign: logical name
    std::string lhs, op, rhs;  // assign value or branch condition; op empty for a single atom
    std::string arg;           // call argument
    std::string keyword;       // branch: if / while
    std::vector<Block> bodies;  // branch: body, optional else body
};

struct Block {
    std::vector<Stmt> stmts;
};

struct Program {
    Block body;
};

using Names = std::vector<std::pair<std::string, std::string>>;

const std::string& rename(const Names& names, const std::string& logical) {
    for (const auto& [from, to] : names) {
        if (from == logical) return to;
    }
    return logical;
}

class Generator {
public:
    explicit Generator(std::uint64_t seed) : rng_(seed) {}

    Program program() {
        const int max_level = 1 + static_cast<int>(rng_.below(6));
        Program p;
        p.body = block(1, max_level);
        return p;
    }

    Rng& rng() { return rng_; }

private:
    std::string atom() {
        if (rng_.uniform() < 0.6) {
            return rng_.below(2) == 0 ? "a" : "b";
        }
        return std::to_string(rng_.below(10));
    }

    void value(Stmt& s) {
        s.lhs = atom();
        if (rng_.uniform() < 0.5) {
            static constexpr const char* ops[] = {"+", "-", "*", "<"};
            s.op = ops[rng_.below(4)];
            s.rhs = atom();
        }
    }

    Block block(int level, int max_level, bool nest = true) {
        Block b;
        Stmt as;
        as.kind = Stmt::assign;
        as.target = "v" + std::to_string(level);
        value(as);
        b.stmts.push_back(std::move(as));
        const int calls = rng_.uniform() < 0.4 ? 1 : 0;
        for (int i = 0; i < calls; ++i) {
            Stmt c;
            c.kind = Stmt::call;
            c.arg = atom();
            b.stmts.push_back(std::move(c));
        }
        if (nest && level < max_level) {
            Stmt br;
            br.kind = Stmt::branch;
            br.keyword = rng_.below(2) == 0 ? "if" : "while";
            br.lhs = rng_.below(2) == 0 ? "a" : "b";
            if (rng_.uniform() < 0.5) {
                br.op = "<";
                br.rhs = std::to_string(rng_.below(10));
            }
            br.bodies.push_back(block(level + 1, max_level));
            if (br.keyword == "if" && rng_.uniform() < 0.25) {
                br.bodies.push_back(block(level + 1, max_level, false));
            }
            b.stmts.push_back(std::move(br));
        }
        rng_.shuffle(b.stmts.begin(), b.stmts.end());
        return b;
    }

    Rng rng_;
};

std::string expr(const Names& names, const std::string& lhs, const std::string& op, const std::string& rhs) {
    auto term = [&](const std::string& t) { return std::isdigit(static_cast<unsigned char>(t[0])) ? t : rename(names, t); };
    return op.empty() ? term(lhs) : term(lhs) + op + term(rhs);
}

void render(const Block& b, const Names& names, std::string& out) {
    out += '{';
    for (const auto& s : b.stmts) {
        switch (s.kind) {
            case Stmt::assign: out += rename(names, s.target) + '=' + expr(names, s.lhs, s.op, s.rhs) + ';'; break;
            case Stmt::call: out += rename(names, "g") + '(' + expr(names, s.arg, "", "") + ");"; break;
            case Stmt::branch:
                out += s.keyword + '(' + expr(names, s.lhs, s.op, s.rhs) + ')';
                render(s.bodies[0], names, out);
                if (s.bodies.size() > 1) {
                    out += "else";
                    render(s.bodies[1], names, out);
                }
                break;
        }
    }
    out += '}';
}

std::string render(const Program& p, const Names& names) {
    std::string out = "fn " + rename(names, "main") + '(' + rename(names, "a") + ',' + rename(names, "b") + ')';
    render(p.body, names, out);
    return out;
}

// Statements never read the variables they assign, so any order is equivalent
// as long as calls keep their relative order.
void permute(Block& b, Rng& rng) {
    std::vector<std::size_t> call_slots;
    std::vector<Stmt> calls;
    for (std::size_t i = 0; i < b.stmts.size(); ++i) {
        if (b.stmts[i].kind == Stmt::call) {
            call_slots.push_back(i);
            calls.push_back(b.stmts[i]);
        }
    }
    rng.shuffle(b.stmts.begin(), b.stmts.end());
    std::size_t k = 0;
    for (auto& s : b.stmts) {
        if (s.kind == Stmt::call) {
            s = calls[k++];
        }
        for (auto& body : s.bodies) {
            permute(body, rng);
        }
    }
}

Names random_names(Rng& rng) {
    std::vector<std::string> pool;
    for (char c = 'a'; c <= 'z'; ++c) {
        pool.emplace_back(1, c);
    }
    for (int i = 1; i <= 9; ++i) {
        pool.push_back("t" + std::to_string(i));
        pool.push_back("x" + std::to_string(i));
    }
    rng.shuffle(pool.begin(), pool.end());
    Names names;
    std::size_t k = 0;
    for (const char* logical : {"main", "a", "b", "g", "v1", "v2", "v3", "v4", "v5", "v6", "v7"}) {
        names.emplace_back(logical, pool[k++]);
    }
    return names;
}

}  // namespace

int level_for_depth(int depth) {
    if (depth < 5 || (depth - 5) % 2 != 0) {
        return 0;
    }
    return (depth - 5) / 2 + 1;
}

ProbeCorpus gen_depth_probe_corpus(const GenOptions& options) {
    ProbeCorpus out;
    Generator docs(derive_seed(options.seed, "corpus-docs"));
    char id[32];
    for (std::size_t i = 0; i < options.n_docs; ++i) {
        std::snprintf(id, sizeof id, "doc-%05zu", i);
        out.docs.push_back({id, render(docs.program(), {})});
    }
    Generator pairs(derive_seed(options.seed, "corpus-pairs"));
    for (std::size_t i = 0; i < options.n_pairs; ++i) {
        const Program p = pairs.program();
        train::CodePair cp;
        cp.code1 = render(p, {});
        if (i % 2 == 0) {
            Program q = p;
            permute(q.body, pairs.rng());
            cp.code2 = render(q, random_names(pairs.rng()));
            cp.label = 1;
        } else {
            const std::string shape = ast::unordered_shape(ast::parse_mini(cp.code1));
            std::string other;
            do {
                other = render(pairs.program(), random_names(pairs.rng()));
            } while (ast::unordered_shape(ast::parse_mini(other)) == shape);
            cp.code2 = std::move(other);
            cp.label = 0;
        }
        out.pairs.push_back(std::move(cp));
    }
    return out;
}

std::vector<IdentifierSite> identifier_sites(const train::PreparedDoc& doc) {
    std::vector<IdentifierSite> sites;
    const auto& a = doc.ast;
    for (ast::NodeId id = 0; id < a.node_count(); ++id) {
        const auto& n = a.node(id);
        if (n.kind != "identifier" || !n.parent) {
            continue;
        }
        const auto& parent = a.node(*n.parent);
        if (parent.kind != "assign" || parent.children.front() != id) {
            continue;
        }
        IdentifierSite s;
        s.node = id;
        s.name = a.source.substr(n.span.start_byte, n.span.end_byte - n.span.start_byte);
        s.depth = n.position ? n.position->depth : 0;
        for (std::size_t i = 0; i < doc.seq.node.size(); ++i) {
            if (doc.seq.node[i] == static_cast<long>(id)) {
                s.positions.push_back(i);
            }
        }
        if (!s.positions.empty()) {
            sites.push_back(std::move(s));
        }
    }
    return sites;
}

ProbeAccuracy masked_identifier_accuracy(const model::Parameters& params, const model::ModelConfig& config,
                                         const std::vector<train::PreparedDoc>& docs) {
    ProbeAccuracy acc;
    for (const auto& doc : docs) {
        const auto sites = identifier_sites(doc);
        if (sites.empty()) {
            continue;
        }
        tok::AlignedSequence input = doc.seq;
        for (const auto& s : sites) {
            for (std::size_t pos : s.positions) {
                input.ids[pos] = tok::kMask;
            }
        }
        const auto mask = model::build_tree_attention_mask(input, config);
        const Mat h = model::encode(params, config, input, mask, false, 0);
        for (const auto& s : sites) {
            bool ok = true;
            for (std::size_t pos : s.positions) {
                const Mat logits = model::mlm_logits(params, h.row(static_cast<Eigen::Index>(pos)));
                Eigen::Index arg = 0;
                logits.row(0).maxCoeff(&arg);
                ok = ok && static_cast<int>(arg) == doc.seq.ids[pos];
            }
            acc.correct += ok ? 1 : 0;
            acc.total += 1;
        }
    }
    return acc;
}

}  // namespace treepos::analysis
