#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "fird/detect.hpp"
#include "fird/em.hpp"
#include "fird/error.hpp"
#include "fird/metrics.hpp"
#include "fird/synth.hpp"
#include "oracles.hpp"

using namespace fird;

namespace {

ModelParams uniform_params(std::size_t groups, std::vector<std::size_t> dims) {
    auto p = init_params(groups, dims, 0);
    std::fill(p.alpha.begin(), p.alpha.end(), 0.0);
    std::fill(p.beta.begin(), p.beta.end(), 0.0);
    for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t m = 0; m < dims.size(); ++m) {
            for (auto& v : p.alpha_row(g, m)) v = 1.0 / static_cast<double>(dims[m]);
            for (auto& v : p.beta_row(g, m)) v = 1.0 / static_cast<double>(dims[m]);
        }
    }
    return p;
}

EncodedDataset all_rows(std::vector<std::size_t> dims, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> names;
    std::vector<std::vector<std::string>> vocab;
    for (std::size_t m = 0; m < dims.size(); ++m) {
        names.push_back("f" + std::to_string(m));
        vocab.emplace_back();
        for (std::size_t i = 0; i < dims[m]; ++i) vocab.back().push_back(std::to_string(i));
    }
    std::vector<std::int32_t> codes;
    for (std::size_t r = 0; r < n; ++r) {
        for (auto d : dims) codes.push_back(static_cast<std::int32_t>(rng() % d));
    }
    return EncodedDataset(names, vocab, codes);
}

// Synthetic fit plus rows whose every value avoids all planted supports.
struct Planted {
    EncodedDataset data;
    std::vector<int> is_planted;
    FitResult fit;
};

Planted planted_anomalies(std::uint64_t seed) {
    GenConfig cfg;
    cfg.n_rows = 1500;
    cfg.n_features = 10;
    cfg.groups_true = 3;
    cfg.dims = {20};
    cfg.seed = seed;
    auto gen = generate(cfg);
    const std::size_t m_count = cfg.n_features;
    std::mt19937_64 rng(seed + 99);
    std::vector<std::int32_t> codes = gen.data.codes();
    const std::size_t extra = 30;
    for (std::size_t r = 0; r < extra; ++r) {
        for (std::size_t m = 0; m < m_count; ++m) {
            std::set<std::int32_t> used;
            for (std::size_t g = 0; g < cfg.groups_true; ++g) {
                for (auto v : gen.truth.supports[g * m_count + m]) used.insert(v);
            }
            std::int32_t v;
            do {
                v = static_cast<std::int32_t>(rng() % 20);
            } while (used.count(v));
            codes.push_back(v);
        }
    }
    Planted out{EncodedDataset(gen.data.names(), gen.data.vocabularies(), codes), {}, {}};
    out.is_planted.assign(cfg.n_rows, 0);
    out.is_planted.resize(cfg.n_rows + extra, 1);
    FitConfig fc;
    fc.groups = 6;
    fc.seed = seed;
    out.fit = fit(out.data, fc);
    return out;
}

std::vector<double> soft_counts_of(const std::vector<std::int32_t>& rows, std::size_t m_count,
                                   const FeatureLayout& layout) {
    std::vector<double> counts(layout.total(), 0.0);
    for (std::size_t k = 0; k < rows.size(); ++k) counts[layout.offset(k % m_count) + rows[k]] += 1.0;
    return counts;
}

}  // namespace

TEST_CASE("cluster_entropy: uniform, point mass, direct summation") {
    auto p = uniform_params(2, {3, 4, 1});
    CHECK(cluster_entropy(p, 1) == doctest::Approx(std::log(3.0) + std::log(4.0)).epsilon(1e-14));

    auto q = init_params(1, std::vector<std::size_t>{3}, 0);
    std::vector<double> point{1.0, 0.0, 0.0};
    std::copy(point.begin(), point.end(), q.alpha_row(0, 0).begin());
    std::copy(point.begin(), point.end(), q.beta_row(0, 0).begin());
    CHECK(cluster_entropy(q, 0) == 0.0);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto t = oracle::tiny_instance(seed);
        for (std::size_t g = 0; g < t.params.groups; ++g) {
            double h = 0.0;
            for (std::size_t m = 0; m < t.params.n_features(); ++m) {
                for (std::size_t i = 0; i < t.params.layout.dim(m); ++i) {
                    const double u = t.params.mu_at(g, m);
                    const double y = u * t.params.alpha_row(g, m)[i] + (1 - u) * t.params.beta_row(g, m)[i];
                    h -= y * std::log(y);
                }
            }
            CHECK(std::fabs(cluster_entropy(t.params, g) - h) <= 1e-12);
        }
    }
}

TEST_CASE("row_information: uniform equality and enumeration oracle") {
    auto p = uniform_params(1, {3, 5});
    std::vector<std::int32_t> row{2, 4};
    CHECK(row_information(row, 0, p) == doctest::Approx(cluster_entropy(p, 0)).epsilon(1e-14));

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto t = oracle::tiny_instance(seed);
        auto single = t.params;
        for (std::size_t g = 0; g < t.params.groups; ++g) {
            single.pi.assign(single.groups, 0.0);
            single.pi[g] = 1.0;
            // With pi one-hot the evidence of a single row is p(x_n | d = g).
            for (std::size_t n = 0; n < t.data.n_rows(); ++n) {
                auto one = t.data.select_rows(std::vector<std::size_t>{n});
                const double expected = -oracle::enumerate(one, single).log_likelihood;
                CHECK(std::fabs(row_information(t.data.row(n), g, t.params) - expected) <= 1e-10);
            }
        }
    }
}

TEST_CASE("filter_outliers: vacuous thresholds and epsilon monotonicity") {
    auto p = uniform_params(2, {4, 4});
    auto data = all_rows({4, 4}, 30, 1);
    for (double eps : {0.01, 0.5, 3.0}) {
        auto mask = filter_outliers(data, p, eps);
        CHECK(std::count(mask.begin(), mask.end(), 1) == 0);
    }

    auto planted = planted_anomalies(2);
    const auto& params = planted.fit.params;
    const auto none = filter_outliers(planted.data, params, 1e9);
    CHECK(std::count(none.begin(), none.end(), 1) == 0);
    std::vector<std::uint8_t> previous;
    for (double eps : {0.0, 0.05, 0.1, 0.3, 1.0}) {
        auto mask = filter_outliers(planted.data, params, eps);
        if (!previous.empty()) {
            for (std::size_t n = 0; n < mask.size(); ++n) {
                if (mask[n]) CHECK(previous[n]);
            }
        }
        previous = mask;
    }
    CHECK_THROWS_AS(filter_outliers(planted.data, params, -1.0), InputError);
}

TEST_CASE("planted off-support rows are flagged as outliers and score high") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto planted = planted_anomalies(seed);
        auto mask = filter_outliers(planted.data, planted.fit.params, 0.05);
        for (std::size_t n = 0; n < mask.size(); ++n) {
            if (planted.is_planted[n]) CHECK(mask[n] == 1);
        }
        auto scores = anomaly_scores(planted.data, planted.fit.params);
        CHECK(roc_auc(planted.is_planted, scores) >= 0.95);
    }
}

TEST_CASE("infer_labels: total probability, selector, linearity, outliers") {
    auto gen = planted_anomalies(4);
    const auto& resp = gen.fit.resp;
    const std::size_t g = resp.groups;
    auto ones = infer_labels(resp, {std::vector<double>(g, 1.0)});
    for (double l : ones) CHECK(l == doctest::Approx(1.0).epsilon(1e-12));
    auto zeros = infer_labels(resp, {std::vector<double>(g, 0.0)});
    for (double l : zeros) CHECK(l == 0.0);
    std::vector<double> sel(g, 0.0);
    sel[3] = 1.0;
    auto pick = infer_labels(resp, {sel});
    for (std::size_t n = 0; n < resp.n_rows; ++n) CHECK(pick[n] == resp.phi_at(n, 3));

    std::mt19937_64 rng(1);
    std::vector<double> p1(g), p2(g), p12(g);
    for (std::size_t k = 0; k < g; ++k) {
        p1[k] = static_cast<double>(rng() % 50) / 100.0;
        p2[k] = static_cast<double>(rng() % 50) / 100.0;
        p12[k] = p1[k] + p2[k];
    }
    auto mask = filter_outliers(gen.data, gen.fit.params, 0.05);
    auto a = infer_labels(resp, {p1}, mask);
    auto b = infer_labels(resp, {p2}, mask);
    auto c = infer_labels(resp, {p12}, mask);
    for (std::size_t n = 0; n < resp.n_rows; ++n) {
        CHECK(c[n] == doctest::Approx(a[n] + b[n]).epsilon(1e-12));
        if (mask[n]) CHECK(c[n] == 0.0);
    }
    CHECK_THROWS_AS(infer_labels(resp, {std::vector<double>(g + 1, 0.5)}), DimensionError);
    CHECK_THROWS_AS(DecisionDistribution::from_json(nlohmann::json::array({0.5, 1.5})), InputError);
    CHECK(DecisionDistribution::from_json(nlohmann::json::parse(R"({"p_label_given_group":[0.1,0.2]})"))
              .p_label_given_group.size() == 2);
}

TEST_CASE("group information at expected counts equals the threshold") {
    FeatureLayout layout({4, 5});
    const double n_g = 20.0;
    std::vector<double> counts;
    for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t i = 0; i < layout.dim(m); ++i) counts.push_back(n_g / static_cast<double>(layout.dim(m)));
    }
    for (auto mode : {FraudMode::binomial, FraudMode::literal}) {
        auto s = group_information(counts, n_g, layout, mode);
        CHECK(std::fabs(s.information - s.entropy) <= 1e-6);
        for (double eps : {1e-6, 0.05, 1.0}) CHECK_FALSE(fraud_flag(s, eps));
    }
    auto empty = group_information(std::vector<double>(9, 0.0), 0.0, layout, FraudMode::binomial);
    CHECK(empty.information == 0.0);
    CHECK(empty.entropy == 0.0);
    CHECK_FALSE(fraud_flag(empty, 0.05));
}

TEST_CASE("binomial information on D = 2 matches the closed form") {
    FeatureLayout layout({2});
    for (double n : {2.0, 3.0, 10.0, 41.0}) {
        auto s = group_information(std::vector<double>{n, 0.0}, n, layout, FraudMode::binomial);
        const double log_half_choose = std::lgamma(n + 1) - 2 * std::lgamma(n / 2 + 1);
        CHECK(s.information == doctest::Approx(n * std::log(2.0)).epsilon(1e-12));
        CHECK(s.entropy == doctest::Approx(n * std::log(2.0) - 2 * log_half_choose).epsilon(1e-12));
        CHECK(s.information > s.entropy);
        CHECK(fraud_flag(s, 0.05));
    }
}

TEST_CASE("concentrated groups are flagged; the random model rarely produces them") {
    // Monte Carlo over groups drawn from the uniform random model.
    const std::size_t m_count = 3, n_g = 40;
    FeatureLayout layout({5, 5, 5});
    std::mt19937_64 rng(17);
    std::vector<double> sampled;
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::int32_t> rows;
        for (std::size_t k = 0; k < n_g * m_count; ++k) rows.push_back(static_cast<std::int32_t>(rng() % 5));
        sampled.push_back(group_information(soft_counts_of(rows, m_count, layout), n_g, layout, FraudMode::binomial)
                              .information);
    }
    std::sort(sampled.begin(), sampled.end());
    const double q999 = sampled[static_cast<std::size_t>(0.999 * static_cast<double>(sampled.size()))];

    std::vector<std::int32_t> concentrated(n_g * m_count, 2);
    auto s = group_information(soft_counts_of(concentrated, m_count, layout), n_g, layout, FraudMode::binomial);
    CHECK(s.information > q999);
    CHECK(fraud_flag(s, 0.05));
}

TEST_CASE("fraud group flags are invariant under row permutation") {
    auto planted = planted_anomalies(5);
    auto base = fraud_group_scores(planted.data, planted.fit.resp, planted.fit.params, 0.05);
    std::vector<std::size_t> order(planted.data.n_rows());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(3);
    std::shuffle(order.begin(), order.end(), rng);
    auto data = planted.data.select_rows(order);
    Responsibilities resp = planted.fit.resp;
    for (std::size_t k = 0; k < order.size(); ++k) {
        for (std::size_t g = 0; g < resp.groups; ++g) {
            resp.phi[k * resp.groups + g] = planted.fit.resp.phi_at(order[k], g);
        }
    }
    auto permuted = fraud_group_scores(data, resp, planted.fit.params, 0.05);
    CHECK(permuted.flags == base.flags);
    for (std::size_t g = 0; g < resp.groups; ++g) {
        CHECK(permuted.stats[g].information == doctest::Approx(base.stats[g].information).epsilon(1e-10));
    }
    for (std::size_t g = 0; g < resp.groups; ++g) {
        if (!planted.fit.params.is_active(g)) CHECK(base.flags[g] == 0);
    }
}

TEST_CASE("anomaly scores: uniform params, point-mass rule, relabeling invariance") {
    auto p = uniform_params(3, {3, 3});
    auto data = all_rows({3, 3}, 20, 2);
    for (double s : anomaly_scores(data, p)) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

    auto q = init_params(1, std::vector<std::size_t>{3}, 0);
    std::vector<double> point{1.0, 0.0, 0.0};
    std::copy(point.begin(), point.end(), q.alpha_row(0, 0).begin());
    std::copy(point.begin(), point.end(), q.beta_row(0, 0).begin());
    EncodedDataset rows({"f"}, {{"a", "b", "c"}}, {0, 1});
    auto s = anomaly_scores(rows, q);
    CHECK(s[0] == 1.0);
    CHECK(std::isinf(s[1]));

    auto planted = planted_anomalies(6);
    const auto& fp = planted.fit.params;
    std::vector<std::size_t> perm(fp.groups);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    ModelParams relabeled = fp;
    const std::size_t tot = fp.layout.total(), m_count = fp.n_features();
    for (std::size_t g = 0; g < fp.groups; ++g) {
        const std::size_t src = perm[g];
        relabeled.pi[g] = fp.pi[src];
        relabeled.active[g] = fp.active[src];
        std::copy_n(fp.mu.begin() + static_cast<std::ptrdiff_t>(src * m_count), m_count,
                    relabeled.mu.begin() + static_cast<std::ptrdiff_t>(g * m_count));
        std::copy_n(fp.alpha.begin() + static_cast<std::ptrdiff_t>(src * tot), tot,
                    relabeled.alpha.begin() + static_cast<std::ptrdiff_t>(g * tot));
        std::copy_n(fp.beta.begin() + static_cast<std::ptrdiff_t>(src * tot), tot,
                    relabeled.beta.begin() + static_cast<std::ptrdiff_t>(g * tot));
    }
    CHECK(anomaly_scores(planted.data, relabeled) == anomaly_scores(planted.data, fp));
}

TEST_CASE("detect assembles a consistent report and writes both CSVs") {
    auto planted = planted_anomalies(7);
    DetectOptions opt;
    auto report = detect(planted.data, planted.fit.params, planted.fit.resp, opt);
    const std::size_t n = planted.data.n_rows();
    CHECK(report.outlier_mask.size() == n);
    CHECK(report.label_scores.size() == n);
    CHECK(report.anomaly_scores.size() == n);
    CHECK(report.group_flags.size() == planted.fit.params.groups);
    for (std::size_t k = 0; k < n; ++k) {
        CHECK(planted.fit.params.is_active(report.hard_assignment[k]));
        CHECK(report.label_scores[k] >= 0.0);
        CHECK(report.label_scores[k] <= 1.0 + 1e-12);
        if (report.outlier_mask[k]) CHECK(report.label_scores[k] == 0.0);
    }

    const auto dir = std::filesystem::temp_directory_path();
    write_row_report(dir / "fird_rows.csv", report);
    write_group_report(dir / "fird_groups.csv", report, planted.fit.params);
    std::string header;
    std::getline(std::ifstream(dir / "fird_rows.csv") >> std::ws, header);
    CHECK(header == "row,assignment,outlier,label_score,anomaly_score");
    std::getline(std::ifstream(dir / "fird_groups.csv") >> std::ws, header);
    CHECK(header == "group,pi,n_soft,I,H,flagged");
    std::filesystem::remove(dir / "fird_rows.csv");
    std::filesystem::remove(dir / "fird_groups.csv");

    CHECK(parse_fraud_mode("literal") == FraudMode::literal);
    CHECK_THROWS_AS(parse_fraud_mode("other"), InputError);
}
