#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fird/data.hpp"
#include "fird/em.hpp"
#include "fird/model.hpp"

namespace fird {

enum class FraudMode { binomial, literal };

FraudMode parse_fraud_mode(const std::string& text);
std::string to_string(FraudMode mode);

/// p(label | group) for every component.
struct DecisionDistribution {
    std::vector<double> p_label_given_group;

    /// Accepts either a bare array or {"p_label_given_group": [...]}.
    static DecisionDistribution from_json(const nlohmann::json& doc);
    static DecisionDistribution load(const std::filesystem::path& path);
    void validate() const;
};

struct GroupStats {
    double information = 0.0;  // I_g
    double entropy = 0.0;      // H_g, the same expression at expected counts
    double n_soft = 0.0;       // N_g
};

struct FraudScores {
    std::vector<std::uint8_t> flags;
    std::vector<GroupStats> stats;
};

struct DetectionReport {
    std::vector<std::uint8_t> outlier_mask;
    std::vector<std::size_t> hard_assignment;
    std::vector<double> label_scores;
    std::vector<double> anomaly_scores;
    std::vector<std::uint8_t> group_flags;
    std::vector<GroupStats> group_stats;
};

/// -sum_m sum_i h(mu alpha + (1 - mu) beta), h(y) = y log y.
double cluster_entropy(const ModelParams& params, std::size_t g);

/// -log p(row | d = g).
double row_information(std::span<const std::int32_t> row, std::size_t g, const ModelParams& params);

/// N x G matrix of row_information; +inf in the columns of frozen components.
std::vector<double> information_matrix(const EncodedDataset& data, const ModelParams& params,
                                       std::size_t threads = 0);

/// A row is an outlier when its information exceeds (1 + epsilon) times the entropy of every active component.
std::vector<std::uint8_t> filter_outliers(const EncodedDataset& data, const ModelParams& params, double epsilon,
                                          std::size_t threads = 0);
std::vector<std::uint8_t> filter_outliers(std::span<const double> information, const ModelParams& params,
                                          double epsilon);

/// l_n = sum_g p(l | g) phi_ng; rows marked in `outliers` (may be empty) score 0.
std::vector<double> infer_labels(const Responsibilities& resp, const DecisionDistribution& decision,
                                 std::span<const std::uint8_t> outliers = {});

/// Random-model group scoring over soft counts N_gmi = sum_n 1(x_nm = i) phi_ng.
FraudScores fraud_group_scores(const EncodedDataset& data, const Responsibilities& resp, const ModelParams& params,
                               double epsilon, FraudMode mode = FraudMode::binomial);

/// I_g and H_g for one group from its soft counts (flat over the layout) and N_g.
GroupStats group_information(std::span<const double> soft_counts, double n_soft, const FeatureLayout& layout,
                             FraudMode mode);

/// The flag rule: I - H > epsilon * |H|.
bool fraud_flag(const GroupStats& stats, double epsilon);

/// min over active g of information / entropy (0/0 = 1, x/0 = +inf).
std::vector<double> anomaly_scores(const EncodedDataset& data, const ModelParams& params, std::size_t threads = 0);
std::vector<double> anomaly_scores(std::span<const double> information, const ModelParams& params);

/// p(l | g) = 1 for flagged groups, 0 otherwise.
DecisionDistribution auto_decision(const FraudScores& scores);

struct DetectOptions {
    double epsilon = 0.05;
    FraudMode mode = FraudMode::binomial;
    /// Empty means derive it from the fraud-group flags.
    std::optional<DecisionDistribution> decision;
    std::size_t threads = 0;
};

/// Runs the full decision layer. `resp` must come from `params` on `data`.
DetectionReport detect(const EncodedDataset& data, const ModelParams& params, const Responsibilities& resp,
                       const DetectOptions& options);

void write_row_report(const std::filesystem::path& path, const DetectionReport& report);
void write_group_report(const std::filesystem::path& path, const DetectionReport& report,
                        const ModelParams& params);

}  // namespace fird
