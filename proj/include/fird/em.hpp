#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "fird/data.hpp"
#include "fird/model.hpp"

namespace fird {

/// Posterior cluster weights phi[N x G] and sync posteriors gamma[N x G x M].
struct Responsibilities {
    std::size_t n_rows = 0;
    std::size_t groups = 0;
    std::size_t n_features = 0;
    std::vector<double> phi;
    std::vector<double> gamma;  // empty when not materialized

    double phi_at(std::size_t n, std::size_t g) const { return phi[n * groups + g]; }
    double gamma_at(std::size_t n, std::size_t g, std::size_t m) const {
        return gamma[(n * groups + g) * n_features + m];
    }
};

/// Everything the M-step needs from one E-step pass.
struct SufficientStats {
    std::size_t n_rows = 0;
    double log_likelihood = 0.0;
    std::vector<double> phi_sum;        // [G]      sum_n phi
    std::vector<double> sync_counts;    // [G x D]  sum_n x_nmi * gamma * phi
    std::vector<double> random_counts;  // [G x D]  sum_n x_nmi * (1 - gamma) * phi
};

struct TraceRow {
    std::size_t iter = 0;
    double objective = 0.0;
    std::size_t active_components = 0;
    double seconds = 0.0;
};

struct PruneEvent {
    std::size_t iter = 0;
    std::size_t group = 0;
};

struct FitTrace {
    std::vector<TraceRow> rows;
    std::vector<PruneEvent> pruned;
    bool converged = false;

    std::size_t iterations() const { return rows.size(); }
};

struct InnerSolveReport {
    std::size_t max_sweeps = 0;   // largest sweep count over all fixed-point solves
    std::size_t unconverged = 0;  // solves that hit max_inner_iters
    std::size_t rejected = 0;     // updates discarded because they lowered the expected objective
    std::vector<std::size_t> newly_pruned;
};

struct InnerOptions {
    std::size_t max_iters = 100;
    double tol = 1e-8;
    double prob_floor = 1e-12;
    /// Active components whose pi drops below this are frozen; <= 0 disables pruning.
    double prune_threshold = 0.0;
};

Responsibilities e_step(const EncodedDataset& data, const ModelParams& params, std::size_t threads = 0);

SufficientStats collect_stats(const EncodedDataset& data, const Responsibilities& resp,
                              const FeatureLayout& layout);

/// One fused pass: log-likelihood plus sufficient statistics, optionally materializing
/// the responsibilities as well.
SufficientStats accumulate(const EncodedDataset& data, const ModelParams& params, std::size_t threads,
                           Responsibilities* resp = nullptr);

/// Closed-form mu and beta updates for every component, frozen ones included.
/// Components with no mass get mu = 0.5 and are frozen.
void m_step_closed(const SufficientStats& stats, const RegWeights& reg, ModelParams& params,
                   double prob_floor = 1e-12);
void m_step_closed(const EncodedDataset& data, const Responsibilities& resp, const RegWeights& reg,
                   ModelParams& params, double prob_floor = 1e-12);

/// Fixed-point pi and alpha updates.
InnerSolveReport m_step_fixed_point(const SufficientStats& stats, const RegWeights& reg, ModelParams& params,
                                    const InnerOptions& options = {});
InnerSolveReport m_step_fixed_point(const EncodedDataset& data, const Responsibilities& resp,
                                    const RegWeights& reg, ModelParams& params, const InnerOptions& options = {});

/// Runs the fixed-point map for one probability vector: counts are the data terms,
/// total the normalizer (N for pi, sum of counts for alpha), weights the regularizer.
std::size_t fixed_point_solve(std::span<const double> counts, double total, std::span<const double> weights,
                              std::span<double> row, const InnerOptions& options, std::size_t outer_iter = 0);

/// sum_g lam1 log pi + sum lam2 (log alpha - log beta), i.e. the amount subtracted from the log-likelihood.
double regularizer(const ModelParams& params, const RegWeights& reg);

double log_likelihood(const EncodedDataset& data, const ModelParams& params, std::size_t threads = 0);

/// Regularized log-likelihood.
double objective(const EncodedDataset& data, const ModelParams& params, const RegWeights& reg,
                 std::size_t threads = 0);

/// Expected complete-data objective (including the regularizer) of `params` under
/// the posterior summarized by `stats`.
double expected_objective(const SufficientStats& stats, const RegWeights& reg, const ModelParams& params);

struct FitResult {
    ModelParams params;
    RegWeights reg;
    Responsibilities resp;
    FitTrace trace;
};

FitResult fit(const EncodedDataset& data, const FitConfig& config);
/// Starts from `initial` instead of a seeded random draw.
FitResult fit(const EncodedDataset& data, const FitConfig& config, ModelParams initial);

/// argmax_g phi over active components; lowest index wins ties.
std::vector<std::size_t> hard_assignment(const Responsibilities& resp, const ModelParams& params);

void write_trace_csv(const std::filesystem::path& path, const FitTrace& trace);

}  // namespace fird
