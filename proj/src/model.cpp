#include "fird/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "fird/data.hpp"
#include "fird/error.hpp"
#include "fird/rng.hpp"

namespace fird {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

}  // namespace

FeatureLayout::FeatureLayout(std::vector<std::size_t> dims) : dims_(std::move(dims)), offsets_(dims_.size()) {
    for (std::size_t m = 0; m < dims_.size(); ++m) {
        offsets_[m] = total_;
        total_ += dims_[m];
    }
}

std::size_t ModelParams::active_count() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

void ModelParams::validate(double prob_floor, double tol) const {
    const std::size_t m_count = n_features();
    if (pi.size() != groups || mu.size() != groups * m_count || alpha.size() != groups * layout.total() ||
        beta.size() != groups * layout.total() || active.size() != groups) {
        throw DimensionError("model: parameter arrays do not match G and dims");
    }
    auto check_row = [&](std::span<const double> row, const char* what, std::size_t g, std::size_t m) {
        double sum = 0.0;
        for (double v : row) {
            if (!(v >= prob_floor * (1.0 - 1e-9)) || !std::isfinite(v)) {
                throw InputError(std::string("model: ") + what + " entry below floor at g=" + std::to_string(g) +
                                 " m=" + std::to_string(m));
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol) {
            throw InputError(std::string("model: ") + what + " row does not sum to 1 at g=" + std::to_string(g) +
                             " m=" + std::to_string(m));
        }
    };
    double pi_sum = 0.0;
    for (double p : pi) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw InputError("model: negative or non-finite pi");
        pi_sum += p;
    }
    if (std::abs(pi_sum - 1.0) > tol) throw InputError("model: pi does not sum to 1");
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t m = 0; m < m_count; ++m) {
            double u = mu_at(g, m);
            if (!(u >= 0.0 && u <= 1.0)) throw InputError("model: mu outside [0,1]");
            check_row(alpha_row(g, m), "alpha", g, m);
            check_row(beta_row(g, m), "beta", g, m);
        }
    }
}

void FitConfig::validate() const {
    if (groups < 1) throw InputError("fit: groups must be >= 1");
    if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) throw InputError("fit: lambda1 must lie in [0, 1]");
    if (!(lambda2 >= 0.0 && lambda2 <= 1.0)) throw InputError("fit: lambda2 must lie in [0, 1]");
    if (!(tol >= 0.0)) throw InputError("fit: tol must be >= 0");
    if (!(inner_tol > 0.0)) throw InputError("fit: inner_tol must be positive");
    if (!(prob_floor > 0.0 && prob_floor < 1e-3)) throw InputError("fit: prob_floor must lie in (0, 1e-3)");
    if (max_outer_iters < 1 || max_inner_iters < 1) throw InputError("fit: iteration limits must be >= 1");
    if (prune_threshold < 0.0) throw InputError("fit: prune_threshold must be >= 0");
}

ModelParams init_params(std::size_t groups, std::span<const std::size_t> dims, std::uint64_t seed,
                        double prob_floor) {
    if (groups < 1) throw InputError("init_params: groups must be >= 1");
    for (auto d : dims) {
        if (d < 1) throw InputError("init_params: every vocabulary needs at least one value");
    }
    ModelParams p;
    p.groups = groups;
    p.layout = FeatureLayout(std::vector<std::size_t>(dims.begin(), dims.end()));
    p.pi.assign(groups, 1.0 / static_cast<double>(groups));
    p.mu.assign(groups * dims.size(), 0.5);
    p.alpha.resize(groups * p.layout.total());
    p.beta.resize(groups * p.layout.total());
    p.active.assign(groups, 1);

    Rng rng(seed);
    auto fill = [&](std::span<double> row) {
        double sum = 0.0;
        for (auto& v : row) {
            v = rng.uniform();
            sum += v;
        }
        if (sum <= 0.0) {
            std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(row.size()));
        } else {
            for (auto& v : row) v /= sum;
        }
        project_to_floored_simplex(row, prob_floor);
    };
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t m = 0; m < dims.size(); ++m) {
            fill(p.alpha_row(g, m));
            fill(p.beta_row(g, m));
        }
    }
    return p;
}

RegWeights normalize_lambda(double lambda1, double lambda2, std::size_t n_rows, std::size_t groups,
                            std::span<const std::size_t> dims) {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw InputError("normalize_lambda: weights must be >= 0");
    if (groups < 1) throw InputError("normalize_lambda: groups must be >= 1");
    RegWeights reg;
    reg.lambda1 = lambda1;
    reg.lambda2 = lambda2;
    const double n = static_cast<double>(n_rows);
    const double g = static_cast<double>(groups);
    reg.lam1.assign(groups, lambda1 * n / g);
    std::size_t total = std::accumulate(dims.begin(), dims.end(), std::size_t{0});
    reg.lam2.resize(groups * total);
    for (std::size_t k = 0; k < groups; ++k) {
        std::size_t pos = k * total;
        for (auto d : dims) {
            double w = lambda2 * n / (2.0 * g * static_cast<double>(d));
            std::fill_n(reg.lam2.begin() + static_cast<std::ptrdiff_t>(pos), d, w);
            pos += d;
        }
    }
    return reg;
}

double log_add_exp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

double log_sum_exp(std::span<const double> values) {
    double hi = kNegInf;
    for (double v : values) hi = std::max(hi, v);
    if (hi == kNegInf || !std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (double v : values) sum += std::exp(v - hi);
    return hi + std::log(sum);
}

double xlogy(double x, double y) {
    if (x == 0.0) return 0.0;
    return x * safe_log(y);
}

void log_feature_terms(std::span<const std::int32_t> row, std::size_t g, const ModelParams& params,
                       std::span<FeatureTerms> out) {
    const std::size_t m_count = params.n_features();
    for (std::size_t m = 0; m < m_count; ++m) {
        const double u = params.mu_at(g, m);
        const double log_mu = safe_log(u);
        const double log_not_mu = safe_log(1.0 - u);
        const auto code = row[m];
        if (code == kUnknownCode) {
            const double uniform = -std::log(static_cast<double>(params.layout.dim(m)));
            out[m] = {log_mu + uniform, log_not_mu + uniform};
        } else {
            const std::size_t idx = params.block(g, m) + static_cast<std::size_t>(code);
            out[m] = {log_mu + std::log(params.alpha[idx]), log_not_mu + std::log(params.beta[idx])};
        }
    }
}

void project_to_floored_simplex(std::span<double> row, double floor) {
    const std::size_t d = row.size();
    if (d == 0) return;
    if (floor * static_cast<double>(d) >= 1.0) {
        std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(d));
        return;
    }
    for (auto& v : row) {
        if (!(v > 0.0)) v = 0.0;
    }
    // Pin entries that would fall under the floor after rescaling; repeat until stable.
    std::vector<std::uint8_t> pinned(d, 0);
    std::size_t n_pinned = 0;
    for (;;) {
        double free_mass = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (!pinned[i]) free_mass += row[i];
        }
        const double budget = 1.0 - floor * static_cast<double>(n_pinned);
        if (free_mass <= 0.0) {
            // Nothing left to scale: spread the budget evenly over unpinned entries.
            const std::size_t n_free = d - n_pinned;
            for (std::size_t i = 0; i < d; ++i) row[i] = pinned[i] ? floor : budget / static_cast<double>(n_free);
            return;
        }
        const double scale = budget / free_mass;
        bool changed = false;
        for (std::size_t i = 0; i < d; ++i) {
            if (!pinned[i] && row[i] * scale < floor) {
                pinned[i] = 1;
                ++n_pinned;
                changed = true;
            }
        }
        if (!changed) {
            for (std::size_t i = 0; i < d; ++i) row[i] = pinned[i] ? floor : row[i] * scale;
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// Persistence

nlohmann::json model_to_json(const ModelFile& model) {
    const auto& p = model.params;
    const std::size_t m_count = p.n_features();
    nlohmann::json mu = nlohmann::json::array();
    nlohmann::json alpha = nlohmann::json::array();
    nlohmann::json beta = nlohmann::json::array();
    for (std::size_t g = 0; g < p.groups; ++g) {
        nlohmann::json mu_g = nlohmann::json::array();
        nlohmann::json a_g = nlohmann::json::array();
        nlohmann::json b_g = nlohmann::json::array();
        for (std::size_t m = 0; m < m_count; ++m) {
            mu_g.push_back(p.mu_at(g, m));
            auto a = p.alpha_row(g, m);
            auto b = p.beta_row(g, m);
            a_g.push_back(std::vector<double>(a.begin(), a.end()));
            b_g.push_back(std::vector<double>(b.begin(), b.end()));
        }
        mu.push_back(std::move(mu_g));
        alpha.push_back(std::move(a_g));
        beta.push_back(std::move(b_g));
    }
    std::vector<bool> active(p.active.begin(), p.active.end());
    return nlohmann::json{{"version", 1},
                          {"G", p.groups},
                          {"dims", p.layout.dims()},
                          {"vocab", model.vocab},
                          {"pi", p.pi},
                          {"mu", std::move(mu)},
                          {"alpha", std::move(alpha)},
                          {"beta", std::move(beta)},
                          {"active", active},
                          {"reg", {{"lambda1", model.lambda1}, {"lambda2", model.lambda2}}},
                          {"seed", model.seed}};
}

ModelFile model_from_json(const nlohmann::json& doc) {
    ModelFile file;
    try {
        if (doc.at("version").get<int>() != 1) throw InputError("model: unsupported version");
        auto& p = file.params;
        p.groups = doc.at("G").get<std::size_t>();
        p.layout = FeatureLayout(doc.at("dims").get<std::vector<std::size_t>>());
        file.vocab = doc.at("vocab").get<std::vector<std::vector<std::string>>>();
        p.pi = doc.at("pi").get<std::vector<double>>();
        const std::size_t m_count = p.n_features();
        if (file.vocab.size() != m_count) throw DimensionError("model: vocab does not match dims");
        for (std::size_t m = 0; m < m_count; ++m) {
            if (file.vocab[m].size() != p.layout.dim(m)) throw DimensionError("model: vocab size != dims");
        }
        const auto& mu = doc.at("mu");
        const auto& alpha = doc.at("alpha");
        const auto& beta = doc.at("beta");
        if (mu.size() != p.groups || alpha.size() != p.groups || beta.size() != p.groups) {
            throw DimensionError("model: parameter arrays do not match G");
        }
        p.mu.reserve(p.groups * m_count);
        p.alpha.reserve(p.groups * p.layout.total());
        p.beta.reserve(p.groups * p.layout.total());
        for (std::size_t g = 0; g < p.groups; ++g) {
            if (mu[g].size() != m_count || alpha[g].size() != m_count || beta[g].size() != m_count) {
                throw DimensionError("model: parameter arrays do not match M");
            }
            for (std::size_t m = 0; m < m_count; ++m) {
                p.mu.push_back(mu[g][m].get<double>());
                auto a = alpha[g][m].get<std::vector<double>>();
                auto b = beta[g][m].get<std::vector<double>>();
                if (a.size() != p.layout.dim(m) || b.size() != p.layout.dim(m)) {
                    throw DimensionError("model: alpha/beta row does not match dims");
                }
                p.alpha.insert(p.alpha.end(), a.begin(), a.end());
                p.beta.insert(p.beta.end(), b.begin(), b.end());
            }
        }
        if (doc.contains("active")) {
            for (bool a : doc.at("active").get<std::vector<bool>>()) p.active.push_back(a ? 1 : 0);
        } else {
            p.active.assign(p.groups, 1);
        }
        file.lambda1 = doc.at("reg").at("lambda1").get<double>();
        file.lambda2 = doc.at("reg").at("lambda2").get<double>();
        file.seed = doc.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model: ") + e.what());
    }
    file.params.validate();
    return file;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write model file: " + path.string());
    out << model_to_json(model).dump() << '\n';
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open model file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("model " + path.string() + ": " + e.what());
    }
    return model_from_json(doc);
}

}  // namespace fird
