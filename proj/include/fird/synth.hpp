#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fird/data.hpp"

namespace fird {

struct GenConfig {
    std::size_t n_rows = 1000;  // structured rows, before the appended random rows
    std::size_t n_features = 10;
    std::size_t groups_true = 5;
    /// One entry per feature, or a single entry broadcast to all features.
    std::vector<std::size_t> dims{20};
    /// mu*[G_true x M]; empty picks mu_high on a random half of features per cluster, mu_low on the rest.
    std::vector<double> mu;
    double mu_high = 0.8;
    double mu_low = 0.2;
    /// alpha* support sizes [G_true x M]; empty uses support_size everywhere (clamped to D_m).
    std::vector<std::size_t> support;
    std::size_t support_size = 2;
    /// pi*; empty means uniform.
    std::vector<double> pi;
    /// Ratio of appended uniform rows to structured rows.
    double nfr = 0.0;
    /// Labels structured rows as fraud and appended rows as normal.
    bool fraud_mix = false;
    std::uint64_t seed = 0;

    std::size_t dim(std::size_t m) const { return dims.size() == 1 ? dims[0] : dims[m]; }
    void validate() const;
};

struct GroundTruth {
    std::vector<int> d;                // cluster per row, -1 for appended random rows
    std::vector<std::uint8_t> f;       // N x M indicator draws, 0 on appended rows
    std::vector<std::uint8_t> fraud;   // all 0 unless fraud_mix
    std::vector<double> mu;            // realized mu*, G_true x M
    /// alpha* support values per (g, m), index g * M + m.
    std::vector<std::vector<std::int32_t>> supports;
};

struct Generated {
    EncodedDataset data;
    GroundTruth truth;
};

/// Feature m is named f<m> with values v0..v<D_m - 1>; codes equal value indices.
Generated generate(const GenConfig& cfg);

struct Preset {
    GenConfig config;
    /// Components to fit with.
    std::size_t fit_groups = 0;
    /// Feature counts swept by the preset; a single entry for non-sweep presets.
    std::vector<std::size_t> m_sweep;
};

/// "dcr", "lambda" or "runtime".
Preset paper_analysis_preset(const std::string& name);

/// Writes <prefix>.csv, <prefix>.schema.json and <prefix>.truth.csv.
void write_generated(const std::filesystem::path& prefix, const Generated& gen);
void write_truth_csv(const std::filesystem::path& path, const GroundTruth& truth);

/// Reads a truth CSV (`row,d,fraud`) back.
GroundTruth read_truth_csv(const std::filesystem::path& path);

}  // namespace fird
