#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "fird/data.hpp"
#include "fird/error.hpp"
#include "fird/synth.hpp"

using namespace fird;

namespace {

// Upper 0.999 quantile of chi-square via the Wilson-Hilferty approximation.
double chi_square_q999(double dof) {
    const double z = 3.090232306167813;
    const double a = 2.0 / (9.0 * dof);
    return dof * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

}  // namespace

TEST_CASE("identical config and seed give identical output") {
    GenConfig cfg;
    cfg.nfr = 0.5;
    cfg.fraud_mix = true;
    cfg.seed = 12;
    auto a = generate(cfg);
    auto b = generate(cfg);
    CHECK(a.data == b.data);
    CHECK(a.truth.d == b.truth.d);
    CHECK(a.truth.f == b.truth.f);
    CHECK(a.truth.mu == b.truth.mu);
    CHECK(a.truth.supports == b.truth.supports);
    cfg.seed = 13;
    CHECK_FALSE(generate(cfg).data == a.data);
}

TEST_CASE("point-mass supports with mu = 1 emit one value per cluster and feature") {
    GenConfig cfg;
    cfg.n_rows = 500;
    cfg.n_features = 4;
    cfg.groups_true = 3;
    cfg.dims = {6};
    cfg.mu.assign(12, 1.0);
    cfg.support_size = 1;
    auto gen = generate(cfg);
    for (std::size_t n = 0; n < gen.data.n_rows(); ++n) {
        const int g = gen.truth.d[n];
        for (std::size_t m = 0; m < 4; ++m) {
            CHECK(gen.data.code(n, m) == gen.truth.supports[static_cast<std::size_t>(g) * 4 + m][0]);
        }
    }
}

TEST_CASE("mu = 0 gives near-uniform marginals") {
    GenConfig cfg;
    cfg.n_rows = 10000;
    cfg.n_features = 3;
    cfg.groups_true = 2;
    cfg.dims = {8};
    cfg.mu.assign(6, 0.0);
    auto gen = generate(cfg);
    for (std::size_t m = 0; m < 3; ++m) {
        std::vector<double> freq(8, 0.0);
        for (std::size_t n = 0; n < gen.data.n_rows(); ++n) freq[gen.data.code(n, m)] += 1.0 / 10000.0;
        double tv = 0.0;
        for (double f : freq) tv += 0.5 * std::fabs(f - 1.0 / 8.0);
        CHECK(tv <= 0.05);
    }
}

TEST_CASE("sync indicator frequency converges to mu") {
    GenConfig cfg;
    cfg.n_rows = 10000;
    cfg.n_features = 6;
    cfg.groups_true = 1;
    cfg.dims = {10};
    cfg.seed = 4;
    auto gen = generate(cfg);
    for (std::size_t m = 0; m < 6; ++m) {
        double freq = 0.0;
        for (std::size_t n = 0; n < 10000; ++n) freq += gen.truth.f[n * 6 + m];
        CHECK(std::fabs(freq / 10000.0 - gen.truth.mu[m]) <= 0.02);
    }
}

TEST_CASE("default mu pattern puts mu_high on half the features of each cluster") {
    GenConfig cfg;
    cfg.n_features = 10;
    cfg.groups_true = 4;
    auto gen = generate(cfg);
    for (std::size_t g = 0; g < 4; ++g) {
        auto begin = gen.truth.mu.begin() + static_cast<std::ptrdiff_t>(g * 10);
        CHECK(std::count(begin, begin + 10, 0.8) == 5);
        CHECK(std::count(begin, begin + 10, 0.2) == 5);
    }
}

TEST_CASE("supports are distinct values of the requested size") {
    GenConfig cfg;
    cfg.n_features = 3;
    cfg.groups_true = 2;
    cfg.dims = {5, 2, 9};
    cfg.support_size = 3;
    auto gen = generate(cfg);
    for (std::size_t g = 0; g < 2; ++g) {
        for (std::size_t m = 0; m < 3; ++m) {
            const auto& s = gen.truth.supports[g * 3 + m];
            CHECK(s.size() == std::min<std::size_t>(3, cfg.dim(m)));
            CHECK(std::set<std::int32_t>(s.begin(), s.end()).size() == s.size());
            for (auto v : s) CHECK(static_cast<std::size_t>(v) < cfg.dim(m));
        }
    }
}

TEST_CASE("NFR rows are appended, labeled, and uniform") {
    GenConfig cfg;
    cfg.n_rows = 1000;
    cfg.nfr = 4.0;
    cfg.fraud_mix = true;
    auto gen = generate(cfg);
    CHECK(gen.data.n_rows() == 5000);
    CHECK(std::count(gen.truth.d.begin(), gen.truth.d.end(), -1) == 4000);
    CHECK(std::count(gen.truth.fraud.begin(), gen.truth.fraud.end(), 1) == 1000);
    for (std::size_t n = 0; n < 1000; ++n) CHECK(gen.truth.fraud[n] == 1);

    GenConfig noise;
    noise.n_rows = 10;
    noise.nfr = 1000.0;
    noise.n_features = 4;
    noise.dims = {12};
    auto big = generate(noise);
    for (std::size_t m = 0; m < 4; ++m) {
        std::vector<double> counts(12, 0.0);
        for (std::size_t n = 10; n < big.data.n_rows(); ++n) counts[big.data.code(n, m)] += 1.0;
        const double expected = 10000.0 / 12.0;
        double chi2 = 0.0;
        for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
        CHECK(chi2 < chi_square_q999(11.0));
    }
}

TEST_CASE("invalid configs are rejected") {
    GenConfig cfg;
    cfg.dims = {5, 5};
    CHECK_THROWS_AS(generate(cfg), InputError);
    cfg = GenConfig{};
    cfg.pi = {0.5, 0.6, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(generate(cfg), InputError);
    cfg = GenConfig{};
    cfg.nfr = -1.0;
    CHECK_THROWS_AS(generate(cfg), InputError);
    cfg = GenConfig{};
    cfg.support.assign(cfg.groups_true * cfg.n_features, 21);
    CHECK_THROWS_AS(generate(cfg), InputError);
}

TEST_CASE("presets") {
    auto runtime = paper_analysis_preset("runtime");
    CHECK(runtime.m_sweep == std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
    CHECK(runtime.config.n_rows == 20000);
    CHECK(runtime.config.dims == std::vector<std::size_t>{30});
    CHECK(runtime.fit_groups == 10);
    auto dcr = paper_analysis_preset("dcr");
    CHECK(dcr.config.groups_true == 10);
    auto lambda = paper_analysis_preset("lambda");
    CHECK(lambda.config.n_rows == 20000);
    CHECK(lambda.config.n_features == 20);
    CHECK(lambda.config.dims == std::vector<std::size_t>{200});
    CHECK_THROWS_AS(paper_analysis_preset("other"), InputError);
}

TEST_CASE("generated files read back through the data module") {
    GenConfig cfg;
    cfg.n_rows = 50;
    cfg.nfr = 1.0;
    cfg.fraud_mix = true;
    auto gen = generate(cfg);
    const auto prefix = std::filesystem::temp_directory_path() / "fird_synth_files";
    write_generated(prefix, gen);
    auto schema = FeatureSchema::load(prefix.string() + ".schema.json");
    auto data = encode(load_csv(prefix.string() + ".csv", schema), schema);
    auto truth = read_truth_csv(prefix.string() + ".truth.csv");
    CHECK(decode(data) == decode(gen.data));
    CHECK(truth.d == gen.truth.d);
    CHECK(truth.fraud == gen.truth.fraud);
    for (const char* ext : {".csv", ".schema.json", ".truth.csv"}) std::filesystem::remove(prefix.string() + ext);
}
