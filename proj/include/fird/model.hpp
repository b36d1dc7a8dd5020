#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fird {

/// Offsets of the per-feature blocks inside a flattened ragged [M][D_m] tensor.
class FeatureLayout {
public:
    FeatureLayout() = default;
    explicit FeatureLayout(std::vector<std::size_t> dims);

    std::size_t n_features() const { return dims_.size(); }
    std::size_t dim(std::size_t m) const { return dims_[m]; }
    std::size_t offset(std::size_t m) const { return offsets_[m]; }
    /// Sum of D_m.
    std::size_t total() const { return total_; }
    const std::vector<std::size_t>& dims() const { return dims_; }

    friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<std::size_t> offsets_;
    std::size_t total_ = 0;
};

/// Mixture weights pi[G], balances mu[G x M], and the adversarial pair
/// alpha (synchronization) / beta (randomness), each G x M x D_m.
struct ModelParams {
    std::size_t groups = 0;
    FeatureLayout layout;
    std::vector<double> pi;
    std::vector<double> mu;
    std::vector<double> alpha;
    std::vector<double> beta;
    /// 0 for components frozen out by pruning.
    std::vector<std::uint8_t> active;

    std::size_t n_features() const { return layout.n_features(); }
    std::size_t block(std::size_t g, std::size_t m) const { return g * layout.total() + layout.offset(m); }

    double& mu_at(std::size_t g, std::size_t m) { return mu[g * n_features() + m]; }
    double mu_at(std::size_t g, std::size_t m) const { return mu[g * n_features() + m]; }

    std::span<double> alpha_row(std::size_t g, std::size_t m) { return {alpha.data() + block(g, m), layout.dim(m)}; }
    std::span<const double> alpha_row(std::size_t g, std::size_t m) const {
        return {alpha.data() + block(g, m), layout.dim(m)};
    }
    std::span<double> beta_row(std::size_t g, std::size_t m) { return {beta.data() + block(g, m), layout.dim(m)}; }
    std::span<const double> beta_row(std::size_t g, std::size_t m) const {
        return {beta.data() + block(g, m), layout.dim(m)};
    }

    bool is_active(std::size_t g) const { return active[g] != 0; }
    std::size_t active_count() const;

    /// Throws InputError naming the first violated simplex/bound invariant.
    void validate(double prob_floor = 0.0, double tol = 1e-9) const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Denormalized regularizer weights: lam1[G] on -log pi, lam2[G x M x D_m] on log alpha - log beta.
struct RegWeights {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::vector<double> lam1;
    std::vector<double> lam2;  // same flat layout as ModelParams::alpha
};

struct FitConfig {
    std::size_t groups = 0;
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double tol = 1e-6;
    std::size_t max_outer_iters = 500;
    std::size_t max_inner_iters = 100;
    double inner_tol = 1e-8;
    double prob_floor = 1e-12;
    /// Components with pi below this are frozen; 0 means 1/(10 N).
    double prune_threshold = 0.0;
    std::uint64_t seed = 0;
    /// 0 uses every hardware thread.
    std::size_t threads = 0;
    bool keep_responsibilities = true;

    void validate() const;
};

ModelParams init_params(std::size_t groups, std::span<const std::size_t> dims, std::uint64_t seed,
                        double prob_floor = 1e-12);

RegWeights normalize_lambda(double lambda1, double lambda2, std::size_t n_rows, std::size_t groups,
                            std::span<const std::size_t> dims);

struct FeatureTerms {
    double log_sync;    // log mu + log alpha[x]
    double log_random;  // log(1 - mu) + log beta[x]
};

/// Per-feature pair of log joint terms for `row` under component g. Unknown codes
/// contribute log(1/D_m) in place of both log alpha and log beta.
void log_feature_terms(std::span<const std::int32_t> row, std::size_t g, const ModelParams& params,
                       std::span<FeatureTerms> out);

double log_add_exp(double a, double b);
double log_sum_exp(std::span<const double> values);
/// x * log(y) with 0 * log(0) = 0.
double xlogy(double x, double y);

/// Rescales `row` onto the simplex keeping every entry >= floor. Entries that fall
/// below the floor are pinned to it and the rest share the remaining mass proportionally.
void project_to_floored_simplex(std::span<double> row, double floor);

struct ModelFile {
    ModelParams params;
    std::vector<std::vector<std::string>> vocab;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::uint64_t seed = 0;
};

nlohmann::json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& doc);
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace fird
