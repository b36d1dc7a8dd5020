#include "fird/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>

#include "fird/error.hpp"

namespace fird {

namespace {

double entropy_of(const std::map<std::int64_t, double>& counts, double n) {
    double h = 0.0;
    for (const auto& [_, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
}

struct Ranked {
    std::vector<std::size_t> order;  // by score, descending
    std::size_t positives = 0;
};

Ranked rank_desc(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw DimensionError("labels and scores differ in length");
    Ranked r;
    for (std::size_t k = 0; k < labels.size(); ++k) {
        if (labels[k] != 0 && labels[k] != 1) throw InputError("binary labels must be 0 or 1");
        if (std::isnan(scores[k])) throw InputError("scores must not be NaN");
        r.positives += static_cast<std::size_t>(labels[k]);
    }
    r.order.resize(labels.size());
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return r;
}

void write_curve(const std::filesystem::path& path, const char* header, const std::vector<double>& t,
                 const std::vector<double>& a, const std::vector<double>& b) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write curve: " + path.string());
    out << header << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < t.size(); ++k) out << t[k] << ',' << a[k] << ',' << b[k] << '\n';
}

}  // namespace

ClusteringScore clustering_scores(std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted) {
    if (truth.size() != predicted.size()) throw DimensionError("label arrays differ in length");
    if (truth.empty()) throw InputError("clustering scores need at least one element");
    const double n = static_cast<double>(truth.size());
    std::map<std::int64_t, double> classes, clusters;
    std::map<std::pair<std::int64_t, std::int64_t>, double> joint;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        classes[truth[k]] += 1.0;
        clusters[predicted[k]] += 1.0;
        joint[{truth[k], predicted[k]}] += 1.0;
    }
    const double h_c = entropy_of(classes, n);
    const double h_k = entropy_of(clusters, n);
    double h_c_given_k = 0.0, h_k_given_c = 0.0;
    for (const auto& [key, c] : joint) {
        h_c_given_k -= (c / n) * std::log(c / clusters[key.second]);
        h_k_given_c -= (c / n) * std::log(c / classes[key.first]);
    }
    ClusteringScore s;
    s.homogeneity = h_c > 0.0 ? std::clamp(1.0 - h_c_given_k / h_c, 0.0, 1.0) : 1.0;
    s.completeness = h_k > 0.0 ? std::clamp(1.0 - h_k_given_c / h_k, 0.0, 1.0) : 1.0;
    const double sum = s.homogeneity + s.completeness;
    s.v_score = sum > 0.0 ? 2.0 * s.homogeneity * s.completeness / sum : 0.0;
    return s;
}

double roc_auc(std::span<const int> labels, std::span<const double> scores) {
    const auto r = rank_desc(labels, scores);
    const std::size_t negatives = labels.size() - r.positives;
    if (r.positives == 0 || negatives == 0) throw MetricError("ROC-AUC needs both classes");
    // Midranks in ascending order: walk the descending order and assign from the top.
    double rank_sum = 0.0;
    const std::size_t n = r.order.size();
    for (std::size_t k = 0; k < n;) {
        std::size_t j = k;
        std::size_t pos = 0;
        while (j < n && scores[r.order[j]] == scores[r.order[k]]) pos += static_cast<std::size_t>(labels[r.order[j++]]);
        // descending positions k..j-1 map to ascending ranks n-j+1..n-k
        const double mid = (static_cast<double>(n - j + 1) + static_cast<double>(n - k)) / 2.0;
        rank_sum += mid * static_cast<double>(pos);
        k = j;
    }
    const double p = static_cast<double>(r.positives);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

CurvePoints roc_curve(std::span<const int> labels, std::span<const double> scores) {
    const auto r = rank_desc(labels, scores);
    const std::size_t negatives = labels.size() - r.positives;
    if (r.positives == 0 || negatives == 0) throw MetricError("ROC curve needs both classes");
    CurvePoints c;
    c.threshold.push_back(std::numeric_limits<double>::infinity());
    c.x.push_back(0.0);
    c.y.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < r.order.size();) {
        const double t = scores[r.order[k]];
        while (k < r.order.size() && scores[r.order[k]] == t) (labels[r.order[k++]] ? tp : fp)++;
        c.threshold.push_back(t);
        c.x.push_back(static_cast<double>(fp) / static_cast<double>(negatives));
        c.y.push_back(static_cast<double>(tp) / static_cast<double>(r.positives));
    }
    c.auc = roc_auc(labels, scores);
    return c;
}

CurvePoints pr_curve(std::span<const int> labels, std::span<const double> scores) {
    const auto r = rank_desc(labels, scores);
    if (r.positives == 0) throw MetricError("PR curve needs at least one positive");
    CurvePoints c;
    c.threshold.push_back(std::numeric_limits<double>::infinity());
    c.x.push_back(0.0);
    c.y.push_back(1.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < r.order.size();) {
        const double t = scores[r.order[k]];
        while (k < r.order.size() && scores[r.order[k]] == t) (labels[r.order[k++]] ? tp : fp)++;
        const double recall = static_cast<double>(tp) / static_cast<double>(r.positives);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        c.auc += (recall - c.x.back()) * precision;
        c.threshold.push_back(t);
        c.x.push_back(recall);
        c.y.push_back(precision);
    }
    c.auc = std::clamp(c.auc, 0.0, 1.0);
    return c;
}

void write_pr_csv(const std::filesystem::path& path, const CurvePoints& curve) {
    write_curve(path, "threshold,precision,recall", curve.threshold, curve.y, curve.x);
}

void write_roc_csv(const std::filesystem::path& path, const CurvePoints& curve) {
    write_curve(path, "threshold,tpr,fpr", curve.threshold, curve.y, curve.x);
}

}  // namespace fird
