#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fird/model.hpp"

namespace fird {

/// Entry point of the `fird` executable. Returns the process exit code:
/// 0 success, 1 numeric failure, 2 usage or input error.
int run_cli(int argc, const char* const* argv);

std::string version();

/// Published ROC-AUC for one benchmark dataset and the accepted distance from it.
struct OddsTarget {
    std::string name;
    double target = 0.0;
    double band = 0.0;
};

const std::vector<OddsTarget>& odds_targets();

struct OddsResult {
    std::string name;
    bool found = false;
    double target = 0.0;
    double band = 0.0;
    std::vector<int> bins;
    std::vector<double> auc;  // one per entry of bins
    int best_bins = 0;
    double best_auc = 0.0;
    bool within_band = false;
    std::string note;
};

/// Fits on an ODDS-style CSV (numeric columns plus a 0/1 label column named `label`, `y`,
/// or else the last column), scores rows by anomaly_scores and sweeps the bin counts.
OddsResult run_odds_dataset(const std::filesystem::path& csv, const OddsTarget& target, const FitConfig& config,
                            const std::vector<int>& bins);

}  // namespace fird
