#include "fird/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fird/error.hpp"
#include "fird/rng.hpp"

namespace fird {

void GenConfig::validate() const {
    if (n_features == 0) throw InputError("generate: M must be >= 1");
    if (groups_true == 0) throw InputError("generate: G_true must be >= 1");
    if (dims.size() != 1 && dims.size() != n_features) {
        throw InputError("generate: dims must have 1 or M entries");
    }
    for (auto d : dims) {
        if (d == 0) throw InputError("generate: D_m must be >= 1");
    }
    if (!mu.empty()) {
        if (mu.size() != groups_true * n_features) throw InputError("generate: mu must have G_true x M entries");
        for (double v : mu) {
            if (!(v >= 0.0 && v <= 1.0)) throw InputError("generate: mu entries must lie in [0, 1]");
        }
    }
    if (!(mu_high >= 0.0 && mu_high <= 1.0 && mu_low >= 0.0 && mu_low <= 1.0)) {
        throw InputError("generate: mu_high/mu_low must lie in [0, 1]");
    }
    if (!support.empty()) {
        if (support.size() != groups_true * n_features) {
            throw InputError("generate: support must have G_true x M entries");
        }
        for (std::size_t k = 0; k < support.size(); ++k) {
            if (support[k] < 1 || support[k] > dim(k % n_features)) {
                throw InputError("generate: support sizes must lie in [1, D_m]");
            }
        }
    }
    if (support_size < 1) throw InputError("generate: support_size must be >= 1");
    if (!pi.empty()) {
        if (pi.size() != groups_true) throw InputError("generate: pi must have G_true entries");
        double s = 0.0;
        for (double v : pi) {
            if (!(v >= 0.0)) throw InputError("generate: pi entries must be >= 0");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw InputError("generate: pi must sum to 1");
    }
    if (!(nfr >= 0.0) || !std::isfinite(nfr)) throw InputError("generate: nfr must be >= 0");
}

Generated generate(const GenConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t groups = cfg.groups_true;
    const std::size_t m_count = cfg.n_features;

    GroundTruth truth;
    truth.mu = cfg.mu;
    if (truth.mu.empty()) {
        truth.mu.resize(groups * m_count);
        std::vector<std::size_t> order(m_count);
        for (std::size_t g = 0; g < groups; ++g) {
            std::iota(order.begin(), order.end(), 0);
            // Fisher-Yates with our own draws so the result is platform independent.
            for (std::size_t k = m_count; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
            for (std::size_t k = 0; k < m_count; ++k) {
                truth.mu[g * m_count + order[k]] = k < m_count / 2 ? cfg.mu_high : cfg.mu_low;
            }
        }
    }

    truth.supports.resize(groups * m_count);
    std::vector<std::int32_t> pool;
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t m = 0; m < m_count; ++m) {
            const std::size_t d = cfg.dim(m);
            const std::size_t size =
                cfg.support.empty() ? std::min(cfg.support_size, d) : cfg.support[g * m_count + m];
            pool.resize(d);
            std::iota(pool.begin(), pool.end(), 0);
            for (std::size_t k = 0; k < size; ++k) std::swap(pool[k], pool[k + rng.below(d - k)]);
            truth.supports[g * m_count + m].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(size));
        }
    }

    const std::vector<double> pi = cfg.pi.empty() ? std::vector<double>(groups, 1.0 / static_cast<double>(groups))
                                                  : cfg.pi;
    const auto n_random = static_cast<std::size_t>(std::floor(static_cast<double>(cfg.n_rows) * cfg.nfr));
    const std::size_t n_total = cfg.n_rows + n_random;
    std::vector<std::int32_t> codes(n_total * m_count);
    truth.d.assign(n_total, -1);
    truth.f.assign(n_total * m_count, 0);
    truth.fraud.assign(n_total, 0);

    for (std::size_t n = 0; n < cfg.n_rows; ++n) {
        const std::size_t g = rng.categorical(pi);
        truth.d[n] = static_cast<int>(g);
        truth.fraud[n] = cfg.fraud_mix ? 1 : 0;
        for (std::size_t m = 0; m < m_count; ++m) {
            const bool sync = rng.bernoulli(truth.mu[g * m_count + m]);
            truth.f[n * m_count + m] = sync ? 1 : 0;
            if (sync) {
                const auto& s = truth.supports[g * m_count + m];
                codes[n * m_count + m] = s[rng.below(s.size())];
            } else {
                codes[n * m_count + m] = static_cast<std::int32_t>(rng.below(cfg.dim(m)));
            }
        }
    }
    for (std::size_t n = cfg.n_rows; n < n_total; ++n) {
        for (std::size_t m = 0; m < m_count; ++m) {
            codes[n * m_count + m] = static_cast<std::int32_t>(rng.below(cfg.dim(m)));
        }
    }

    std::vector<std::string> names(m_count);
    std::vector<std::vector<std::string>> vocab(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        names[m] = "f" + std::to_string(m);
        vocab[m].resize(cfg.dim(m));
        for (std::size_t i = 0; i < cfg.dim(m); ++i) vocab[m][i] = "v" + std::to_string(i);
    }
    return {EncodedDataset(std::move(names), std::move(vocab), std::move(codes)), std::move(truth)};
}

Preset paper_analysis_preset(const std::string& name) {
    Preset p;
    p.config.n_rows = 20000;
    p.config.groups_true = 10;
    if (name == "dcr" || name == "lambda") {
        p.config.n_features = 20;
        p.config.dims = {200};
        p.fit_groups = 20;
        p.m_sweep = {20};
    } else if (name == "runtime") {
        p.config.n_features = 10;
        p.config.dims = {30};
        p.fit_groups = 10;
        for (std::size_t m = 10; m <= 100; m += 10) p.m_sweep.push_back(m);
    } else {
        throw InputError("unknown preset '" + name + "' (expected dcr, lambda or runtime)");
    }
    return p;
}

void write_truth_csv(const std::filesystem::path& path, const GroundTruth& truth) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write ground truth: " + path.string());
    out << "row,d,fraud\n";
    for (std::size_t n = 0; n < truth.d.size(); ++n) {
        out << n << ',' << truth.d[n] << ',' << int(truth.fraud[n]) << '\n';
    }
}

GroundTruth read_truth_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open ground truth: " + path.string());
    std::string line;
    if (!std::getline(in, line) || split_csv_record(line) != std::vector<std::string>{"row", "d", "fraud"}) {
        throw InputError(path.string() + ": expected header row,d,fraud");
    }
    GroundTruth truth;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_record(line);
        if (fields.size() != 3) {
            throw InputError(path.string() + ": line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected 3");
        }
        try {
            truth.d.push_back(std::stoi(fields[1]));
            truth.fraud.push_back(static_cast<std::uint8_t>(std::stoi(fields[2]) != 0));
        } catch (const std::exception&) {
            throw InputError(path.string() + ": line " + std::to_string(line_no) + " is not numeric");
        }
    }
    return truth;
}

void write_generated(const std::filesystem::path& prefix, const Generated& gen) {
    auto with = [&](const std::string& suffix) {
        auto p = prefix;
        p += suffix;
        return p;
    };
    write_csv(with(".csv"), gen.data);
    categorical_schema(gen.data.names()).save(with(".schema.json"));
    write_truth_csv(with(".truth.csv"), gen.truth);
}

}  // namespace fird
