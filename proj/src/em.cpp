#include "fird/em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "fird/error.hpp"
#include "fird/parallel.hpp"

namespace fird {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// Per-(g, m, value) lookup tables for one parameter snapshot. The per-row work of the
// E-step then reduces to table lookups and additions.
struct LogTables {
    std::size_t groups = 0;
    std::size_t n_features = 0;
    std::size_t total = 0;
    std::vector<double> log_pi;
    std::vector<double> log_p;      // [G x D] log(mu alpha + (1 - mu) beta)
    std::vector<double> sync_post;  // [G x D] mu alpha / (mu alpha + (1 - mu) beta)
    std::vector<double> unk_log_p;  // [G x M] log(1 / D_m)
    std::vector<double> unk_post;   // [G x M] mu

    explicit LogTables(const ModelParams& p)
        : groups(p.groups), n_features(p.n_features()), total(p.layout.total()) {
        log_pi.resize(groups);
        log_p.resize(groups * total);
        sync_post.resize(groups * total);
        unk_log_p.resize(groups * n_features);
        unk_post.resize(groups * n_features);
        std::vector<FeatureTerms> terms(1);
        for (std::size_t g = 0; g < groups; ++g) {
            log_pi[g] = safe_log(p.pi[g]);
            for (std::size_t m = 0; m < n_features; ++m) {
                const double log_mu = safe_log(p.mu_at(g, m));
                const double log_not_mu = safe_log(1.0 - p.mu_at(g, m));
                const double log_uniform = -std::log(static_cast<double>(p.layout.dim(m)));
                set(g * n_features + m, log_mu + log_uniform, log_not_mu + log_uniform, unk_log_p, unk_post);
                const std::size_t base = p.block(g, m);
                for (std::size_t i = 0; i < p.layout.dim(m); ++i) {
                    set(base + i, log_mu + std::log(p.alpha[base + i]), log_not_mu + std::log(p.beta[base + i]),
                        log_p, sync_post);
                }
            }
        }
    }

    static void set(std::size_t k, double lt, double lb, std::vector<double>& lp, std::vector<double>& post) {
        lp[k] = log_add_exp(lt, lb);
        post[k] = lt == kNegInf ? 0.0 : std::exp(lt - lp[k]);
    }
};

void check_compatible(const EncodedDataset& data, const ModelParams& params) {
    if (data.dims() != params.layout.dims()) {
        throw DimensionError("dataset dims do not match model dims");
    }
}

// Entries with value <= floor (up to rounding) count as collapsed.
bool all_at_floor(std::span<const double> row, double floor) {
    return std::all_of(row.begin(), row.end(), [&](double v) { return v <= floor * (1.0 + 1e-9); });
}

// sum_i (c_i - w_i) log row_i: the part of the expected objective that depends on one
// fixed-point-updated vector.
double fixed_point_objective(std::span<const double> counts, std::span<const double> weights,
                             std::span<const double> row) {
    double q = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) q += xlogy(counts[i] - weights[i], row[i]);
    return q;
}

// Maps converged (unnormalized) fixed-point iterates onto the floored simplex. When every
// entry collapsed, the mass goes to the entry with the largest count - weight.
void finish_row(std::span<const double> counts, std::span<const double> weights, std::span<double> row,
                double floor) {
    if (all_at_floor(row, floor)) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < row.size(); ++i) {
            if (counts[i] - weights[i] > counts[best] - weights[best]) best = i;
        }
        row[best] = 1.0;
    } else {
        // Entries with non-positive net count belong exactly at the floor.
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (counts[i] - weights[i] <= 0.0 || row[i] <= floor * (1.0 + 1e-9)) row[i] = 0.0;
        }
    }
    project_to_floored_simplex(row, floor);
}

}  // namespace

// ---------------------------------------------------------------------------
// E-step

SufficientStats accumulate(const EncodedDataset& data, const ModelParams& params, std::size_t threads,
                           Responsibilities* resp) {
    check_compatible(data, params);
    const LogTables tables(params);
    const std::size_t n_rows = data.n_rows();
    const std::size_t groups = params.groups;
    const std::size_t m_count = params.n_features();
    const std::size_t total = params.layout.total();
    std::vector<std::size_t> offsets(m_count);
    for (std::size_t m = 0; m < m_count; ++m) offsets[m] = params.layout.offset(m);

    if (resp) {
        resp->n_rows = n_rows;
        resp->groups = groups;
        resp->n_features = m_count;
        resp->phi.assign(n_rows * groups, 0.0);
        resp->gamma.assign(n_rows * groups * m_count, 0.0);
    }

    // gamma depends only on (g, m, value), so the per-row statistic is just the
    // phi-weighted value count W; sync/random counts are W times the table posterior.
    const RowChunks chunks(n_rows);
    struct Partial {
        double log_likelihood = 0.0;
        std::vector<double> phi_sum, weighted;
    };
    std::vector<Partial> partials(chunks.count());

    parallel_for(chunks.count(), threads, [&](std::size_t c) {
        Partial& part = partials[c];
        part.phi_sum.assign(groups, 0.0);
        part.weighted.assign(groups * total, 0.0);
        std::vector<double> row_ll(groups);
        std::vector<std::size_t> cols(m_count);
        std::vector<std::uint8_t> unknown(m_count);
        for (std::size_t n = chunks.begin(c); n < chunks.end(c); ++n) {
            const auto row = data.row(n);
            bool any_unknown = false;
            for (std::size_t m = 0; m < m_count; ++m) {
                unknown[m] = row[m] == kUnknownCode;
                any_unknown |= unknown[m] != 0;
                cols[m] = unknown[m] ? 0 : offsets[m] + static_cast<std::size_t>(row[m]);
            }
            for (std::size_t g = 0; g < groups; ++g) {
                const double* lp = tables.log_p.data() + g * total;
                double acc = tables.log_pi[g];
                if (!any_unknown) {
                    for (std::size_t m = 0; m < m_count; ++m) acc += lp[cols[m]];
                } else {
                    for (std::size_t m = 0; m < m_count; ++m) {
                        acc += unknown[m] ? tables.unk_log_p[g * m_count + m] : lp[cols[m]];
                    }
                }
                row_ll[g] = acc;
            }
            const double ll = log_sum_exp(row_ll);
            part.log_likelihood += ll;
            for (std::size_t g = 0; g < groups; ++g) {
                const double phi = std::exp(row_ll[g] - ll);
                part.phi_sum[g] += phi;
                double* w = part.weighted.data() + g * total;
                for (std::size_t m = 0; m < m_count; ++m) {
                    if (!unknown[m]) w[cols[m]] += phi;
                }
                if (resp) {
                    resp->phi[n * groups + g] = phi;
                    double* out = resp->gamma.data() + (n * groups + g) * m_count;
                    for (std::size_t m = 0; m < m_count; ++m) {
                        out[m] = unknown[m] ? tables.unk_post[g * m_count + m]
                                            : tables.sync_post[g * total + cols[m]];
                    }
                }
            }
        }
    });

    SufficientStats stats;
    stats.n_rows = n_rows;
    stats.phi_sum.assign(groups, 0.0);
    stats.sync_counts.assign(groups * total, 0.0);
    stats.random_counts.assign(groups * total, 0.0);
    std::vector<double> weighted(groups * total, 0.0);
    for (const auto& part : partials) {
        stats.log_likelihood += part.log_likelihood;
        for (std::size_t g = 0; g < groups; ++g) stats.phi_sum[g] += part.phi_sum[g];
        for (std::size_t k = 0; k < groups * total; ++k) weighted[k] += part.weighted[k];
    }
    for (std::size_t k = 0; k < groups * total; ++k) {
        stats.sync_counts[k] = weighted[k] * tables.sync_post[k];
        stats.random_counts[k] = weighted[k] - stats.sync_counts[k];
    }
    return stats;
}

Responsibilities e_step(const EncodedDataset& data, const ModelParams& params, std::size_t threads) {
    Responsibilities resp;
    accumulate(data, params, threads, &resp);
    return resp;
}

SufficientStats collect_stats(const EncodedDataset& data, const Responsibilities& resp,
                              const FeatureLayout& layout) {
    if (resp.n_rows != data.n_rows() || resp.n_features != data.n_features() || resp.gamma.empty()) {
        throw DimensionError("responsibilities do not match dataset");
    }
    if (data.dims() != layout.dims()) throw DimensionError("dataset dims do not match model dims");
    const std::size_t groups = resp.groups;
    const std::size_t total = layout.total();
    SufficientStats stats;
    stats.n_rows = data.n_rows();
    stats.log_likelihood = std::numeric_limits<double>::quiet_NaN();
    stats.phi_sum.assign(groups, 0.0);
    stats.sync_counts.assign(groups * total, 0.0);
    stats.random_counts.assign(groups * total, 0.0);
    for (std::size_t n = 0; n < data.n_rows(); ++n) {
        for (std::size_t g = 0; g < groups; ++g) {
            const double phi = resp.phi_at(n, g);
            stats.phi_sum[g] += phi;
            for (std::size_t m = 0; m < data.n_features(); ++m) {
                const auto code = data.code(n, m);
                if (code == kUnknownCode) continue;
                const std::size_t idx = g * total + layout.offset(m) + static_cast<std::size_t>(code);
                const double y = resp.gamma_at(n, g, m);
                stats.sync_counts[idx] += phi * y;
                stats.random_counts[idx] += phi * (1.0 - y);
            }
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// M-step

void m_step_closed(const SufficientStats& stats, const RegWeights& reg, ModelParams& params, double prob_floor) {
    const std::size_t m_count = params.n_features();
    for (std::size_t g = 0; g < params.groups; ++g) {
        if (!(stats.phi_sum[g] > 0.0)) {
            for (std::size_t m = 0; m < m_count; ++m) params.mu_at(g, m) = 0.5;
            params.active[g] = 0;
        }
        for (std::size_t m = 0; m < m_count; ++m) {
            const std::size_t base = params.block(g, m);
            const std::size_t d = params.layout.dim(m);
            double sync_mass = 0.0, random_mass = 0.0, weight_mass = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                sync_mass += stats.sync_counts[base + i];
                random_mass += stats.random_counts[base + i];
                weight_mass += reg.lam2[base + i];
            }
            if (stats.phi_sum[g] > 0.0) params.mu_at(g, m) = std::clamp(sync_mass / stats.phi_sum[g], 0.0, 1.0);
            auto beta = params.beta_row(g, m);
            const double denom = weight_mass + random_mass;
            if (denom > 0.0) {
                for (std::size_t i = 0; i < d; ++i) {
                    beta[i] = (reg.lam2[base + i] + stats.random_counts[base + i]) / denom;
                }
            } else {
                std::fill(beta.begin(), beta.end(), 1.0 / static_cast<double>(d));
            }
            project_to_floored_simplex(beta, prob_floor);
        }
    }
}

void m_step_closed(const EncodedDataset& data, const Responsibilities& resp, const RegWeights& reg,
                   ModelParams& params, double prob_floor) {
    m_step_closed(collect_stats(data, resp, params.layout), reg, params, prob_floor);
}

std::size_t fixed_point_solve(std::span<const double> counts, double total, std::span<const double> weights,
                              std::span<double> row, const InnerOptions& options, std::size_t outer_iter) {
    for (std::size_t sweep = 1; sweep <= options.max_iters; ++sweep) {
        double max_change = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) {
            const double a = row[i];
            const double denom = total + weights[i] / a;
            if (denom <= 0.0) continue;  // no data and no prior: nothing to update
            double next = (counts[i] + weights[i] * a) / denom;
            if (!std::isfinite(next)) {
                throw NumericError("fixed-point update produced a non-finite value at sweep " + std::to_string(sweep),
                                   outer_iter);
            }
            next = std::max(next, options.prob_floor);
            max_change = std::max(max_change, std::abs(next - a));
            row[i] = next;
        }
        if (max_change < options.tol) return sweep;
    }
    return options.max_iters + 1;
}

InnerSolveReport m_step_fixed_point(const SufficientStats& stats, const RegWeights& reg, ModelParams& params,
                                    const InnerOptions& options) {
    InnerSolveReport report;
    const double floor = options.prob_floor;
    auto note = [&](std::size_t sweeps) {
        if (sweeps > options.max_iters) {
            ++report.unconverged;
            sweeps = options.max_iters;
        }
        report.max_sweeps = std::max(report.max_sweeps, sweeps);
    };

    // Mixture weights over the active components; frozen ones stay pinned at the floor.
    {
        const std::size_t groups = params.groups;
        std::vector<std::size_t> idx;
        for (std::size_t g = 0; g < groups; ++g) {
            if (params.is_active(g)) idx.push_back(g);
        }
        std::vector<double> counts, weights, row;
        for (auto g : idx) {
            counts.push_back(stats.phi_sum[g]);
            weights.push_back(reg.lam1[g]);
            row.push_back(std::max(params.pi[g], floor));
        }
        std::vector<double> old_pi = params.pi;
        note(fixed_point_solve(counts, static_cast<double>(stats.n_rows), weights, row, options));

        std::vector<double> next(groups, floor);
        std::vector<std::uint8_t> pinned(groups, 1);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            next[idx[k]] = row[k];
            pinned[idx[k]] = 0;
        }
        // Normalize the active block: collapsed components are pinned, the rest share 1 - pinned mass.
        std::vector<std::size_t> pruned;
        auto normalize = [&] {
            std::vector<double> block, block_counts, block_weights;
            std::vector<std::size_t> owners;
            for (std::size_t g = 0; g < groups; ++g) {
                if (pinned[g]) continue;
                owners.push_back(g);
                block.push_back(next[g]);
                block_counts.push_back(stats.phi_sum[g]);
                block_weights.push_back(reg.lam1[g]);
            }
            const double pinned_mass = floor * static_cast<double>(groups - owners.size());
            if (owners.empty()) return;
            finish_row(block_counts, block_weights, block, floor / (1.0 - pinned_mass));
            for (std::size_t k = 0; k < owners.size(); ++k) next[owners[k]] = block[k] * (1.0 - pinned_mass);
        };
        normalize();
        if (options.prune_threshold > 0.0) {
            // Keep at least one component alive.
            std::size_t best = idx.empty() ? 0 : idx.front();
            for (auto g : idx) {
                if (next[g] > next[best]) best = g;
            }
            for (auto g : idx) {
                if (g != best && next[g] < options.prune_threshold) {
                    pruned.push_back(g);
                    pinned[g] = 1;
                    next[g] = floor;
                }
            }
            if (!pruned.empty()) normalize();
        }

        const double q_old = fixed_point_objective(stats.phi_sum, reg.lam1, old_pi);
        const double q_new = fixed_point_objective(stats.phi_sum, reg.lam1, next);
        if (q_new >= q_old) {
            params.pi = next;
            for (auto g : pruned) {
                params.active[g] = 0;
                params.pi[g] = floor;
            }
            report.newly_pruned = pruned;
        } else {
            ++report.rejected;
        }
    }

    // Synchronization multinomials, frozen components included.
    const std::size_t m_count = params.n_features();
    std::vector<double> row;
    for (std::size_t g = 0; g < params.groups; ++g) {
        for (std::size_t m = 0; m < m_count; ++m) {
            const std::size_t base = params.block(g, m);
            const std::size_t d = params.layout.dim(m);
            std::span<const double> counts(stats.sync_counts.data() + base, d);
            std::span<const double> weights(reg.lam2.data() + base, d);
            double total = 0.0;
            for (double c : counts) total += c;
            auto alpha = params.alpha_row(g, m);
            row.assign(alpha.begin(), alpha.end());
            note(fixed_point_solve(counts, total, weights, row, options));
            finish_row(counts, weights, row, floor);
            if (fixed_point_objective(counts, weights, row) >= fixed_point_objective(counts, weights, alpha)) {
                std::copy(row.begin(), row.end(), alpha.begin());
            } else {
                ++report.rejected;
            }
        }
    }
    return report;
}

InnerSolveReport m_step_fixed_point(const EncodedDataset& data, const Responsibilities& resp,
                                    const RegWeights& reg, ModelParams& params, const InnerOptions& options) {
    return m_step_fixed_point(collect_stats(data, resp, params.layout), reg, params, options);
}

// ---------------------------------------------------------------------------
// Objective

double regularizer(const ModelParams& params, const RegWeights& reg) {
    double r = 0.0;
    for (std::size_t g = 0; g < params.groups; ++g) r += xlogy(reg.lam1[g], params.pi[g]);
    for (std::size_t k = 0; k < params.alpha.size(); ++k) {
        r += xlogy(reg.lam2[k], params.alpha[k]) - xlogy(reg.lam2[k], params.beta[k]);
    }
    return r;
}

double log_likelihood(const EncodedDataset& data, const ModelParams& params, std::size_t threads) {
    return accumulate(data, params, threads).log_likelihood;
}

double objective(const EncodedDataset& data, const ModelParams& params, const RegWeights& reg,
                 std::size_t threads) {
    return log_likelihood(data, params, threads) - regularizer(params, reg);
}

double expected_objective(const SufficientStats& stats, const RegWeights& reg, const ModelParams& params) {
    double q = 0.0;
    for (std::size_t g = 0; g < params.groups; ++g) q += xlogy(stats.phi_sum[g], params.pi[g]);
    for (std::size_t g = 0; g < params.groups; ++g) {
        for (std::size_t m = 0; m < params.n_features(); ++m) {
            const std::size_t base = params.block(g, m);
            double sync_mass = 0.0, random_mass = 0.0;
            for (std::size_t i = 0; i < params.layout.dim(m); ++i) {
                sync_mass += stats.sync_counts[base + i];
                random_mass += stats.random_counts[base + i];
                q += xlogy(stats.sync_counts[base + i], params.alpha[base + i]);
                q += xlogy(stats.random_counts[base + i], params.beta[base + i]);
            }
            q += xlogy(sync_mass, params.mu_at(g, m)) + xlogy(random_mass, 1.0 - params.mu_at(g, m));
        }
    }
    return q - regularizer(params, reg);
}

// ---------------------------------------------------------------------------
// Driver

FitResult fit(const EncodedDataset& data, const FitConfig& config) {
    config.validate();
    return fit(data, config, init_params(config.groups, data.dims(), config.seed, config.prob_floor));
}

FitResult fit(const EncodedDataset& data, const FitConfig& config, ModelParams initial) {
    config.validate();
    if (data.n_rows() == 0) throw InputError("fit: dataset is empty");
    if (data.n_features() == 0) throw InputError("fit: dataset has no features");
    if (data.has_unknown()) throw InputError("fit: dataset contains codes outside the vocabulary");

    using clock = std::chrono::steady_clock;
    const std::size_t n_rows = data.n_rows();
    FitResult result;
    if (initial.groups != config.groups || initial.layout.dims() != data.dims()) {
        throw DimensionError("fit: initial parameters do not match the dataset and config");
    }
    result.params = std::move(initial);
    result.reg = normalize_lambda(config.lambda1, config.lambda2, n_rows, config.groups, data.dims());
    auto& params = result.params;
    auto& trace = result.trace;

    InnerOptions inner;
    inner.max_iters = config.max_inner_iters;
    inner.tol = config.inner_tol;
    inner.prob_floor = config.prob_floor;
    inner.prune_threshold =
        config.prune_threshold > 0.0 ? config.prune_threshold : 1.0 / (10.0 * static_cast<double>(n_rows));

    double previous = kNegInf;
    for (std::size_t it = 0; it < config.max_outer_iters; ++it) {
        const auto start = clock::now();
        const auto stats = accumulate(data, params, config.threads);
        const double current = stats.log_likelihood - regularizer(params, result.reg);
        if (!std::isfinite(current)) throw NumericError("objective is not finite", it);

        TraceRow row{it, current, params.active_count(), 0.0};
        const bool converged = it > 0 && current - previous < config.tol * std::max(1.0, std::abs(previous));
        const bool last = it + 1 == config.max_outer_iters;
        if (!converged && !last) {
            const auto before = params.active;
            m_step_closed(stats, result.reg, params, config.prob_floor);
            m_step_fixed_point(stats, result.reg, params, inner);
            for (std::size_t g = 0; g < params.groups; ++g) {
                if (before[g] && !params.active[g]) trace.pruned.push_back({it, g});
            }
        }
        row.seconds = std::chrono::duration<double>(clock::now() - start).count();
        trace.rows.push_back(row);
        if (converged) {
            trace.converged = true;
            break;
        }
        previous = current;
    }
    if (config.keep_responsibilities) result.resp = e_step(data, params, config.threads);
    return result;
}

std::vector<std::size_t> hard_assignment(const Responsibilities& resp, const ModelParams& params) {
    std::vector<std::size_t> out(resp.n_rows, 0);
    for (std::size_t n = 0; n < resp.n_rows; ++n) {
        std::size_t best = resp.groups;
        for (std::size_t g = 0; g < resp.groups; ++g) {
            if (!params.is_active(g)) continue;
            if (best == resp.groups || resp.phi_at(n, g) > resp.phi_at(n, best)) best = g;
        }
        out[n] = best == resp.groups ? 0 : best;
    }
    return out;
}

void write_trace_csv(const std::filesystem::path& path, const FitTrace& trace) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write trace file: " + path.string());
    out << "iter,objective,active_components,seconds\n" << std::setprecision(17);
    for (const auto& r : trace.rows) {
        out << r.iter << ',' << r.objective << ',' << r.active_components << ',' << r.seconds << '\n';
    }
}

}  // namespace fird
