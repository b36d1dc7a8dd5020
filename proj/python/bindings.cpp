#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fird/cli.hpp"
#include "fird/data.hpp"
#include "fird/detect.hpp"
#include "fird/em.hpp"
#include "fird/error.hpp"
#include "fird/metrics.hpp"
#include "fird/model.hpp"
#include "fird/synth.hpp"

namespace py = pybind11;
using namespace fird;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
    py::array_t<T> out(shape);
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v) {
    return to_array(v, {static_cast<py::ssize_t>(v.size())});
}

template <typename T, typename A>
std::vector<T> to_vector(const A& a) {
    return std::vector<T>(a.data(), a.data() + a.size());
}

EncodedDataset dataset_from_rows(const std::vector<std::vector<std::string>>& rows,
                                 const std::vector<std::string>& names) {
    RawTable table;
    table.n_rows = rows.size();
    for (const auto& name : names) table.columns.push_back(Column{name, FeatureKind::categorical, {}, {}});
    for (std::size_t n = 0; n < rows.size(); ++n) {
        if (rows[n].size() != names.size()) {
            throw DimensionError("row " + std::to_string(n) + " has " + std::to_string(rows[n].size()) +
                                 " cells, expected " + std::to_string(names.size()));
        }
        for (std::size_t m = 0; m < names.size(); ++m) table.columns[m].text.push_back(rows[n][m]);
    }
    return encode(table, categorical_schema(names));
}

EncodedDataset dataset_from_codes(const py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>& codes,
                                  std::vector<std::string> names, std::vector<std::vector<std::string>> vocab) {
    if (codes.ndim() != 2) throw DimensionError("codes must be a 2-d array");
    const auto m_count = static_cast<std::size_t>(codes.shape(1));
    if (names.empty()) {
        for (std::size_t m = 0; m < m_count; ++m) names.push_back("f" + std::to_string(m));
    }
    if (vocab.empty()) {
        const auto* p = codes.data();
        vocab.resize(m_count);
        for (std::size_t m = 0; m < m_count; ++m) {
            std::int32_t top = -1;
            for (py::ssize_t n = 0; n < codes.shape(0); ++n) top = std::max(top, p[n * codes.shape(1) + m]);
            for (std::int32_t v = 0; v <= top; ++v) vocab[m].push_back(std::to_string(v));
        }
    }
    return EncodedDataset(std::move(names), std::move(vocab), to_vector<std::int32_t>(codes));
}

py::dict report_dict(const DetectionReport& r) {
    py::dict d;
    d["outlier"] = to_array(r.outlier_mask);
    std::vector<std::int64_t> hard(r.hard_assignment.begin(), r.hard_assignment.end());
    d["assignment"] = to_array(hard);
    d["label_score"] = to_array(r.label_scores);
    d["anomaly_score"] = to_array(r.anomaly_scores);
    d["group_flag"] = to_array(r.group_flags);
    std::vector<double> info, entropy, n_soft;
    for (const auto& s : r.group_stats) {
        info.push_back(s.information);
        entropy.push_back(s.entropy);
        n_soft.push_back(s.n_soft);
    }
    d["group_information"] = to_array(info);
    d["group_entropy"] = to_array(entropy);
    d["group_size"] = to_array(n_soft);
    return d;
}

std::vector<int> int_labels(const IntArray& labels) {
    return std::vector<int>(labels.data(), labels.data() + labels.size());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mixture model with adversarial multinomial pairs for fraud-group detection";
    m.attr("__version__") = version();

    auto base = py::register_exception<Error>(m, "FirdError", PyExc_RuntimeError);
    auto input = py::register_exception<InputError>(m, "InputError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", input.ptr());
    py::register_exception<MetricError>(m, "MetricError", input.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<EncodedDataset>(m, "Dataset")
        .def_static("from_rows", &dataset_from_rows, py::arg("rows"), py::arg("names"),
                    "Encode string rows; codes follow first appearance per column.")
        .def_static("from_codes", &dataset_from_codes, py::arg("codes"), py::arg("names") = std::vector<std::string>{},
                    py::arg("vocab") = std::vector<std::vector<std::string>>{})
        .def_static(
            "load_csv",
            [](const std::filesystem::path& csv, const std::filesystem::path& schema) {
                const auto s = FeatureSchema::load(schema);
                return encode(load_csv(csv, s), s);
            },
            py::arg("csv"), py::arg("schema"))
        .def_property_readonly("n_rows", &EncodedDataset::n_rows)
        .def_property_readonly("n_features", &EncodedDataset::n_features)
        .def_property_readonly("dims", &EncodedDataset::dims)
        .def_property_readonly("names", &EncodedDataset::names)
        .def_property_readonly("vocab", &EncodedDataset::vocabularies)
        .def_property_readonly("codes",
                               [](const EncodedDataset& d) {
                                   return to_array(d.codes(), {static_cast<py::ssize_t>(d.n_rows()),
                                                               static_cast<py::ssize_t>(d.n_features())});
                               })
        .def("decode", &decode)
        .def("__len__", &EncodedDataset::n_rows);

    py::class_<ModelParams>(m, "ModelParams")
        .def_readonly("groups", &ModelParams::groups)
        .def_property_readonly("dims", [](const ModelParams& p) { return p.layout.dims(); })
        .def_property_readonly("pi", [](const ModelParams& p) { return to_array(p.pi); })
        .def_property_readonly("mu",
                               [](const ModelParams& p) {
                                   return to_array(p.mu, {static_cast<py::ssize_t>(p.groups),
                                                          static_cast<py::ssize_t>(p.n_features())});
                               })
        .def_property_readonly("active", [](const ModelParams& p) { return to_array(p.active); })
        .def(
            "alpha",
            [](const ModelParams& p, std::size_t g, std::size_t f) {
                const auto row = p.alpha_row(g, f);
                return to_array(std::vector<double>(row.begin(), row.end()));
            },
            py::arg("group"), py::arg("feature"))
        .def(
            "beta",
            [](const ModelParams& p, std::size_t g, std::size_t f) {
                const auto row = p.beta_row(g, f);
                return to_array(std::vector<double>(row.begin(), row.end()));
            },
            py::arg("group"), py::arg("feature"))
        .def("active_count", &ModelParams::active_count)
        .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

    m.def(
        "init_params",
        [](std::size_t groups, const std::vector<std::size_t>& dims, std::uint64_t seed) {
            return init_params(groups, dims, seed);
        },
        py::arg("groups"), py::arg("dims"), py::arg("seed") = 0);

    py::class_<FitConfig>(m, "FitConfig")
        .def(py::init<>())
        .def_readwrite("groups", &FitConfig::groups)
        .def_readwrite("lambda1", &FitConfig::lambda1)
        .def_readwrite("lambda2", &FitConfig::lambda2)
        .def_readwrite("tol", &FitConfig::tol)
        .def_readwrite("max_outer_iters", &FitConfig::max_outer_iters)
        .def_readwrite("max_inner_iters", &FitConfig::max_inner_iters)
        .def_readwrite("inner_tol", &FitConfig::inner_tol)
        .def_readwrite("prob_floor", &FitConfig::prob_floor)
        .def_readwrite("prune_threshold", &FitConfig::prune_threshold)
        .def_readwrite("seed", &FitConfig::seed)
        .def_readwrite("threads", &FitConfig::threads);

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("params", &FitResult::params)
        .def_property_readonly("phi",
                               [](const FitResult& r) {
                                   return to_array(r.resp.phi, {static_cast<py::ssize_t>(r.resp.n_rows),
                                                                static_cast<py::ssize_t>(r.resp.groups)});
                               })
        .def_property_readonly("objective_trace",
                               [](const FitResult& r) {
                                   std::vector<double> v;
                                   for (const auto& row : r.trace.rows) v.push_back(row.objective);
                                   return to_array(v);
                               })
        .def_property_readonly("converged", [](const FitResult& r) { return r.trace.converged; })
        .def_property_readonly("iterations", [](const FitResult& r) { return r.trace.iterations(); })
        .def_property_readonly("assignment", [](const FitResult& r) {
            const auto hard = hard_assignment(r.resp, r.params);
            return to_array(std::vector<std::int64_t>(hard.begin(), hard.end()));
        });

    m.def(
        "fit",
        [](const EncodedDataset& data, const FitConfig& config, std::optional<ModelParams> initial) {
            py::gil_scoped_release release;
            return initial ? fit(data, config, std::move(*initial)) : fit(data, config);
        },
        py::arg("data"), py::arg("config"), py::arg("initial") = py::none());

    m.def(
        "e_step",
        [](const EncodedDataset& data, const ModelParams& params, std::size_t threads) {
            Responsibilities r;
            {
                py::gil_scoped_release release;
                r = e_step(data, params, threads);
            }
            const auto n = static_cast<py::ssize_t>(r.n_rows);
            const auto g = static_cast<py::ssize_t>(r.groups);
            return py::make_tuple(to_array(r.phi, {n, g}),
                                  to_array(r.gamma, {n, g, static_cast<py::ssize_t>(r.n_features)}));
        },
        py::arg("data"), py::arg("params"), py::arg("threads") = 0,
        "Posterior group weights phi [N, G] and sync probabilities gamma [N, G, M].");

    m.def("log_likelihood", &log_likelihood, py::arg("data"), py::arg("params"), py::arg("threads") = 0);
    m.def(
        "objective",
        [](const EncodedDataset& data, const ModelParams& params, double lambda1, double lambda2) {
            const auto reg = normalize_lambda(lambda1, lambda2, data.n_rows(), params.groups, params.layout.dims());
            return objective(data, params, reg);
        },
        py::arg("data"), py::arg("params"), py::arg("lambda1") = 0.5, py::arg("lambda2") = 0.5);

    m.def(
        "detect",
        [](const EncodedDataset& data, const ModelParams& params, double epsilon, const std::string& mode,
           std::optional<std::vector<double>> decision, std::size_t threads) {
            DetectOptions options;
            options.epsilon = epsilon;
            options.mode = parse_fraud_mode(mode);
            options.threads = threads;
            if (decision) options.decision = DecisionDistribution{*decision};
            DetectionReport report;
            {
                py::gil_scoped_release release;
                report = detect(data, params, e_step(data, params, threads), options);
            }
            return report_dict(report);
        },
        py::arg("data"), py::arg("params"), py::arg("epsilon") = 0.05, py::arg("mode") = "binomial",
        py::arg("decision") = py::none(), py::arg("threads") = 0);

    py::class_<ModelFile>(m, "ModelFile")
        .def_readonly("params", &ModelFile::params)
        .def_readonly("vocab", &ModelFile::vocab)
        .def_readonly("lambda1", &ModelFile::lambda1)
        .def_readonly("lambda2", &ModelFile::lambda2)
        .def_readonly("seed", &ModelFile::seed);
    m.def("load_model", &load_model, py::arg("path"));
    m.def(
        "save_model",
        [](const std::filesystem::path& path, const ModelParams& params, const EncodedDataset& data, double lambda1,
           double lambda2, std::uint64_t seed) {
            save_model(path, ModelFile{params, data.vocabularies(), lambda1, lambda2, seed});
        },
        py::arg("path"), py::arg("params"), py::arg("data"), py::arg("lambda1") = 0.5, py::arg("lambda2") = 0.5,
        py::arg("seed") = 0);

    py::class_<GenConfig>(m, "GenConfig")
        .def(py::init<>())
        .def_readwrite("n_rows", &GenConfig::n_rows)
        .def_readwrite("n_features", &GenConfig::n_features)
        .def_readwrite("groups_true", &GenConfig::groups_true)
        .def_readwrite("dims", &GenConfig::dims)
        .def_readwrite("mu", &GenConfig::mu)
        .def_readwrite("mu_high", &GenConfig::mu_high)
        .def_readwrite("mu_low", &GenConfig::mu_low)
        .def_readwrite("support", &GenConfig::support)
        .def_readwrite("support_size", &GenConfig::support_size)
        .def_readwrite("pi", &GenConfig::pi)
        .def_readwrite("nfr", &GenConfig::nfr)
        .def_readwrite("fraud_mix", &GenConfig::fraud_mix)
        .def_readwrite("seed", &GenConfig::seed);

    m.def(
        "generate",
        [](const GenConfig& cfg) {
            auto gen = generate(cfg);
            py::dict truth;
            truth["cluster"] = to_array(std::vector<std::int64_t>(gen.truth.d.begin(), gen.truth.d.end()));
            truth["fraud"] = to_array(gen.truth.fraud);
            truth["mu"] = to_array(gen.truth.mu);
            truth["supports"] = gen.truth.supports;
            return py::make_tuple(std::move(gen.data), truth);
        },
        py::arg("config"), "Returns (Dataset, truth dict).");

    m.def(
        "clustering_scores",
        [](const IntArray& truth, const IntArray& predicted) {
            const auto s = clustering_scores(to_vector<std::int64_t>(truth), to_vector<std::int64_t>(predicted));
            return py::dict(py::arg("homogeneity") = s.homogeneity, py::arg("completeness") = s.completeness,
                            py::arg("v_score") = s.v_score);
        },
        py::arg("truth"), py::arg("predicted"));
    m.def(
        "roc_auc", [](const IntArray& y, const DoubleArray& s) { return roc_auc(int_labels(y), to_vector<double>(s)); },
        py::arg("labels"), py::arg("scores"));
    m.def(
        "pr_auc",
        [](const IntArray& y, const DoubleArray& s) { return pr_curve(int_labels(y), to_vector<double>(s)).auc; },
        py::arg("labels"), py::arg("scores"));
}
