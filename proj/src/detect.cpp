#include "fird/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "fird/error.hpp"
#include "fird/parallel.hpp"

namespace fird {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_choose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// One feature's contribution -sum_i [log C(top, N_i) - N_i log D] with top = N_g (binomial)
// or D (literal, where terms with N_i > D contribute 0).
double feature_information(std::span<const double> counts, double n_soft, FraudMode mode) {
    const double d = static_cast<double>(counts.size());
    const double log_d = std::log(d);
    double s = 0.0;
    for (double c : counts) {
        if (mode == FraudMode::binomial) {
            const double k = std::clamp(c, 0.0, n_soft);
            s += log_choose(n_soft, k) - k * log_d;
        } else if (c <= d) {
            s += log_choose(d, std::max(c, 0.0)) - c * log_d;
        }
    }
    return -s;
}

}  // namespace

FraudMode parse_fraud_mode(const std::string& text) {
    if (text == "binomial") return FraudMode::binomial;
    if (text == "literal") return FraudMode::literal;
    throw InputError("unknown fraud mode '" + text + "' (expected binomial or literal)");
}

std::string to_string(FraudMode mode) { return mode == FraudMode::binomial ? "binomial" : "literal"; }

DecisionDistribution DecisionDistribution::from_json(const nlohmann::json& doc) {
    const nlohmann::json* values = &doc;
    if (doc.is_object()) {
        if (!doc.contains("p_label_given_group")) throw InputError("decision: missing p_label_given_group");
        values = &doc.at("p_label_given_group");
    }
    if (!values->is_array()) throw InputError("decision: expected an array of probabilities");
    DecisionDistribution out;
    for (const auto& v : *values) {
        if (!v.is_number()) throw InputError("decision: entries must be numbers");
        out.p_label_given_group.push_back(v.get<double>());
    }
    out.validate();
    return out;
}

DecisionDistribution DecisionDistribution::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open decision file: " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw InputError("decision file " + path.string() + ": " + e.what());
    }
}

void DecisionDistribution::validate() const {
    for (double p : p_label_given_group) {
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("decision: entries must lie in [0, 1]");
    }
}

double cluster_entropy(const ModelParams& params, std::size_t g) {
    double h = 0.0;
    for (std::size_t m = 0; m < params.n_features(); ++m) {
        const double u = params.mu_at(g, m);
        const auto alpha = params.alpha_row(g, m);
        const auto beta = params.beta_row(g, m);
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            const double p = u * alpha[i] + (1.0 - u) * beta[i];
            h -= xlogy(p, p);
        }
    }
    return h;
}

double row_information(std::span<const std::int32_t> row, std::size_t g, const ModelParams& params) {
    std::vector<FeatureTerms> terms(params.n_features());
    log_feature_terms(row, g, params, terms);
    double info = 0.0;
    for (const auto& t : terms) info -= log_add_exp(t.log_sync, t.log_random);
    return info;
}

std::vector<double> information_matrix(const EncodedDataset& data, const ModelParams& params,
                                       std::size_t threads) {
    if (data.dims() != params.layout.dims()) throw DimensionError("dataset dims do not match model dims");
    const std::size_t groups = params.groups;
    std::vector<double> out(data.n_rows() * groups, kInf);
    const RowChunks chunks(data.n_rows());
    parallel_for(chunks.count(), threads, [&](std::size_t c) {
        std::vector<FeatureTerms> terms(params.n_features());
        for (std::size_t n = chunks.begin(c); n < chunks.end(c); ++n) {
            for (std::size_t g = 0; g < groups; ++g) {
                if (!params.is_active(g)) continue;
                log_feature_terms(data.row(n), g, params, terms);
                double info = 0.0;
                for (const auto& t : terms) info -= log_add_exp(t.log_sync, t.log_random);
                out[n * groups + g] = info;
            }
        }
    });
    return out;
}

std::vector<std::uint8_t> filter_outliers(std::span<const double> information, const ModelParams& params,
                                          double epsilon) {
    if (!(epsilon >= 0.0)) throw InputError("epsilon must be >= 0");
    const std::size_t groups = params.groups;
    std::vector<double> threshold(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        if (params.is_active(g)) threshold[g] = (1.0 + epsilon) * cluster_entropy(params, g);
    }
    const std::size_t n_rows = groups == 0 ? 0 : information.size() / groups;
    std::vector<std::uint8_t> mask(n_rows, 0);
    for (std::size_t n = 0; n < n_rows; ++n) {
        bool all = params.active_count() > 0;
        for (std::size_t g = 0; g < groups && all; ++g) {
            if (params.is_active(g) && !(information[n * groups + g] > threshold[g])) all = false;
        }
        mask[n] = all ? 1 : 0;
    }
    return mask;
}

std::vector<std::uint8_t> filter_outliers(const EncodedDataset& data, const ModelParams& params, double epsilon,
                                          std::size_t threads) {
    return filter_outliers(information_matrix(data, params, threads), params, epsilon);
}

std::vector<double> infer_labels(const Responsibilities& resp, const DecisionDistribution& decision,
                                 std::span<const std::uint8_t> outliers) {
    if (decision.p_label_given_group.size() != resp.groups) {
        throw DimensionError("decision has " + std::to_string(decision.p_label_given_group.size()) +
                             " entries, model has " + std::to_string(resp.groups) + " groups");
    }
    if (!outliers.empty() && outliers.size() != resp.n_rows) {
        throw DimensionError("outlier mask length does not match responsibilities");
    }
    std::vector<double> out(resp.n_rows, 0.0);
    for (std::size_t n = 0; n < resp.n_rows; ++n) {
        if (!outliers.empty() && outliers[n]) continue;
        double s = 0.0;
        for (std::size_t g = 0; g < resp.groups; ++g) s += decision.p_label_given_group[g] * resp.phi_at(n, g);
        out[n] = s;
    }
    return out;
}

GroupStats group_information(std::span<const double> soft_counts, double n_soft, const FeatureLayout& layout,
                             FraudMode mode) {
    GroupStats s;
    s.n_soft = n_soft;
    if (!(n_soft > 0.0)) return s;
    std::vector<double> expected;
    for (std::size_t m = 0; m < layout.n_features(); ++m) {
        const auto counts = soft_counts.subspan(layout.offset(m), layout.dim(m));
        s.information += feature_information(counts, n_soft, mode);
        expected.assign(layout.dim(m), n_soft / static_cast<double>(layout.dim(m)));
        s.entropy += feature_information(expected, n_soft, mode);
    }
    return s;
}

bool fraud_flag(const GroupStats& stats, double epsilon) {
    if (!(stats.n_soft > 0.0)) return false;
    return stats.information - stats.entropy > epsilon * std::abs(stats.entropy);
}

FraudScores fraud_group_scores(const EncodedDataset& data, const Responsibilities& resp, const ModelParams& params,
                               double epsilon, FraudMode mode) {
    if (!(epsilon >= 0.0)) throw InputError("epsilon must be >= 0");
    if (resp.n_rows != data.n_rows() || resp.groups != params.groups) {
        throw DimensionError("responsibilities do not match dataset/model");
    }
    if (data.dims() != params.layout.dims()) throw DimensionError("dataset dims do not match model dims");
    const std::size_t groups = params.groups;
    const std::size_t total = params.layout.total();
    std::vector<double> counts(groups * total, 0.0);
    std::vector<double> n_soft(groups, 0.0);
    for (std::size_t n = 0; n < data.n_rows(); ++n) {
        const auto row = data.row(n);
        for (std::size_t g = 0; g < groups; ++g) {
            const double phi = resp.phi_at(n, g);
            n_soft[g] += phi;
            if (phi == 0.0) continue;
            for (std::size_t m = 0; m < row.size(); ++m) {
                if (row[m] == kUnknownCode) continue;
                counts[g * total + params.layout.offset(m) + static_cast<std::size_t>(row[m])] += phi;
            }
        }
    }
    FraudScores out;
    out.flags.assign(groups, 0);
    out.stats.resize(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        out.stats[g] = group_information(std::span<const double>(counts).subspan(g * total, total), n_soft[g],
                                         params.layout, mode);
        out.flags[g] = params.is_active(g) && fraud_flag(out.stats[g], epsilon) ? 1 : 0;
    }
    return out;
}

std::vector<double> anomaly_scores(std::span<const double> information, const ModelParams& params) {
    const std::size_t groups = params.groups;
    std::vector<double> entropy(groups, 0.0);
    for (std::size_t g = 0; g < groups; ++g) {
        if (params.is_active(g)) entropy[g] = cluster_entropy(params, g);
    }
    const std::size_t n_rows = groups == 0 ? 0 : information.size() / groups;
    std::vector<double> out(n_rows, kInf);
    for (std::size_t n = 0; n < n_rows; ++n) {
        for (std::size_t g = 0; g < groups; ++g) {
            if (!params.is_active(g)) continue;
            const double info = information[n * groups + g];
            double ratio;
            if (entropy[g] > 0.0) {
                ratio = info / entropy[g];
            } else {
                ratio = info > 0.0 ? kInf : 1.0;
            }
            out[n] = std::min(out[n], ratio);
        }
    }
    return out;
}

std::vector<double> anomaly_scores(const EncodedDataset& data, const ModelParams& params, std::size_t threads) {
    return anomaly_scores(information_matrix(data, params, threads), params);
}

DecisionDistribution auto_decision(const FraudScores& scores) {
    DecisionDistribution d;
    for (auto f : scores.flags) d.p_label_given_group.push_back(f ? 1.0 : 0.0);
    return d;
}

DetectionReport detect(const EncodedDataset& data, const ModelParams& params, const Responsibilities& resp,
                       const DetectOptions& options) {
    DetectionReport report;
    const auto info = information_matrix(data, params, options.threads);
    report.outlier_mask = filter_outliers(info, params, options.epsilon);
    report.anomaly_scores = anomaly_scores(info, params);
    report.hard_assignment = hard_assignment(resp, params);
    auto scores = fraud_group_scores(data, resp, params, options.epsilon, options.mode);
    const DecisionDistribution decision = options.decision ? *options.decision : auto_decision(scores);
    report.label_scores = infer_labels(resp, decision, report.outlier_mask);
    report.group_flags = std::move(scores.flags);
    report.group_stats = std::move(scores.stats);
    return report;
}

void write_row_report(const std::filesystem::path& path, const DetectionReport& report) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write report: " + path.string());
    out << "row,assignment,outlier,label_score,anomaly_score\n" << std::setprecision(17);
    for (std::size_t n = 0; n < report.outlier_mask.size(); ++n) {
        out << n << ',' << report.hard_assignment[n] << ',' << int(report.outlier_mask[n]) << ','
            << report.label_scores[n] << ',' << report.anomaly_scores[n] << '\n';
    }
}

void write_group_report(const std::filesystem::path& path, const DetectionReport& report,
                        const ModelParams& params) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write report: " + path.string());
    out << "group,pi,n_soft,I,H,flagged\n" << std::setprecision(17);
    for (std::size_t g = 0; g < report.group_stats.size(); ++g) {
        const auto& s = report.group_stats[g];
        out << g << ',' << params.pi[g] << ',' << s.n_soft << ',' << s.information << ',' << s.entropy << ','
            << int(report.group_flags[g]) << '\n';
    }
}

}  // namespace fird
