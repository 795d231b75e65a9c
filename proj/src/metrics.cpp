#include <cstdio>
#include <map>

#include "treepos/train.hpp"

namespace treepos::train {

namespace {

struct ClassCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t support = 0;
};

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

Metrics compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels, Averaging averaging) {
    if (predictions.size() != labels.size()) {
        throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        throw Error("compute_metrics: no predictions");
    }
    Metrics m;
    std::map<int, ClassCounts> counts;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        counts[y].support++;
        if (p == y) {
            ++correct;
            counts[y].tp++;
        } else {
            counts[y].fn++;
            counts[p].fp++;
        }
    }
    m.accuracy = ratio(correct, labels.size());
    if (averaging == Averaging::binary) {
        const auto& c = counts[1];
        m.precision = ratio(c.tp, c.tp + c.fp);
        m.recall = ratio(c.tp, c.tp + c.fn);
        m.f1 = f1_of(m.precision, m.recall);
        return m;
    }
    for (const auto& [cls, c] : counts) {
        if (c.support == 0) {
            continue;
        }
        const double w = ratio(c.support, labels.size());
        const double p = ratio(c.tp, c.tp + c.fp);
        const double r = ratio(c.tp, c.tp + c.fn);
        m.precision += w * p;
        m.recall += w * r;
        m.f1 += w * f1_of(p, r);
    }
    return m;
}

std::string format_metrics_row(const MetricsRow& row) {
    char buf[256];
    const auto& m = row.metrics;
    std::snprintf(buf, sizeof buf, "%s,%lld,%.6f,%.6f,%.6f,%.6f,%.6f", row.split.c_str(),
                  static_cast<long long>(row.step), m.loss, m.accuracy, m.f1, m.precision, m.recall);
    return buf;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = kMetricsHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += format_metrics_row(r);
        out += '\n';
    }
    return out;
}

}  // namespace treepos::train
