#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fird {

struct ClusteringScore {
    double homogeneity = 0.0;
    double completeness = 0.0;
    double v_score = 0.0;
};

/// Entropy-based homogeneity/completeness; h = 1 when H(C) = 0 and c = 1 when H(K) = 0.
ClusteringScore clustering_scores(std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted);

/// Mann-Whitney AUC, ties count one half. `labels` are 0/1.
double roc_auc(std::span<const int> labels, std::span<const double> scores);

/// One point per distinct threshold (descending), preceded by the +inf threshold point.
struct CurvePoints {
    std::vector<double> threshold;
    std::vector<double> x;
    std::vector<double> y;
    double auc = 0.0;
};

/// x = false positive rate, y = true positive rate.
CurvePoints roc_curve(std::span<const int> labels, std::span<const double> scores);

/// x = recall, y = precision; auc is average precision, sum (R_k - R_{k-1}) P_k.
CurvePoints pr_curve(std::span<const int> labels, std::span<const double> scores);

void write_pr_csv(const std::filesystem::path& path, const CurvePoints& curve);
void write_roc_csv(const std::filesystem::path& path, const CurvePoints& curve);

}  // namespace fird
