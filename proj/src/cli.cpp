#include "fird/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "fird/data.hpp"
#include "fird/detect.hpp"
#include "fird/em.hpp"
#include "fird/error.hpp"
#include "fird/metrics.hpp"
#include "fird/parallel.hpp"
#include "fird/synth.hpp"

#ifndef FIRD_VERSION
#define FIRD_VERSION "0.0.0"
#endif

namespace fird {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string version() { return FIRD_VERSION; }

const std::vector<OddsTarget>& odds_targets() {
    static const std::vector<OddsTarget> targets{
        {"musk", 1.000, 0.05},   {"satimage-2", 0.998, 0.05}, {"shuttle", 0.990, 0.05},
        {"cardio", 0.949, 0.10}, {"satellite", 0.900, 0.10},
    };
    return targets;
}

namespace {

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
    fs::path out = p;
    out += suffix;
    return out;
}

fs::path strip_ext(const fs::path& p) {
    fs::path out = p;
    return out.replace_extension();
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path.string());
    out << doc.dump(2) << '\n';
}

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// Records what a command did, next to its main output.
struct Manifest {
    std::string command;
    json config = json::object();
    json inputs = json::object();
    json outputs = json::object();
    std::vector<std::string> argv;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write(const fs::path& main_output, std::uint64_t seed) const {
        json doc;
        doc["command"] = command;
        doc["argv"] = argv;
        doc["config"] = config;
        doc["seed"] = seed;
        doc["inputs"] = inputs;
        doc["outputs"] = outputs;
        doc["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        doc["version"] = version();
        write_json(with_suffix(main_output, ".manifest.json"), doc);
    }
};

EncodedDataset load_encoded(const fs::path& input, const fs::path& schema_path) {
    const auto schema = FeatureSchema::load(schema_path);
    return encode(load_csv(input, schema), schema);
}

std::vector<int> parse_binary(const std::vector<std::string>& text, const std::string& what) {
    std::vector<int> out;
    out.reserve(text.size());
    for (const auto& t : text) {
        double v;
        try {
            std::size_t used = 0;
            v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
        } catch (const std::exception&) {
            throw InputError(what + ": label '" + t + "' is not numeric");
        }
        if (v != 0.0 && v != 1.0) throw InputError(what + ": labels must be 0 or 1");
        out.push_back(v == 1.0 ? 1 : 0);
    }
    return out;
}

// Options shared by fit-like commands.
struct FitFlags {
    std::size_t groups = 0;
    double lambda1 = 0.5;
    double lambda2 = 0.5;
    double tol = 1e-6;
    std::size_t max_iter = 500;
    std::size_t max_inner_iter = 100;
    double inner_tol = 1e-8;
    double prune_threshold = 0.0;

    void add(CLI::App& cmd, bool groups_required) {
        auto* g = cmd.add_option("--groups,-G", groups, "Number of mixture components");
        if (groups_required) g->required();
        cmd.add_option("--lambda1", lambda1, "Weight of the mixture-weight regularizer")->capture_default_str();
        cmd.add_option("--lambda2", lambda2, "Weight of the alpha/beta regularizer")->capture_default_str();
        cmd.add_option("--tol", tol, "Relative objective improvement to stop at")->capture_default_str();
        cmd.add_option("--max-iter", max_iter, "Maximum outer EM iterations")->capture_default_str();
        cmd.add_option("--max-inner-iter", max_inner_iter, "Maximum fixed-point sweeps")->capture_default_str();
        cmd.add_option("--inner-tol", inner_tol, "Fixed-point max-entry change to stop at")->capture_default_str();
        cmd.add_option("--prune-threshold", prune_threshold, "Freeze components with pi below this (0: 1/(10N))")
            ->capture_default_str();
    }

    FitConfig config(std::uint64_t seed, std::size_t threads) const {
        FitConfig c;
        c.groups = groups;
        c.lambda1 = lambda1;
        c.lambda2 = lambda2;
        c.tol = tol;
        c.max_outer_iters = max_iter;
        c.max_inner_iters = max_inner_iter;
        c.inner_tol = inner_tol;
        c.prune_threshold = prune_threshold;
        c.seed = seed;
        c.threads = threads;
        return c;
    }

    json to_json() const {
        return {{"groups", groups},         {"lambda1", lambda1},   {"lambda2", lambda2},
                {"tol", tol},               {"max_iter", max_iter}, {"max_inner_iter", max_inner_iter},
                {"inner_tol", inner_tol},   {"prune_threshold", prune_threshold}};
    }
};

int cmd_fit(const fs::path& input, const fs::path& schema_path, const fs::path& output, fs::path trace_path,
            const FitFlags& flags, std::uint64_t seed, std::size_t threads, Manifest manifest) {
    const auto schema = FeatureSchema::load(schema_path);
    const auto data = encode(load_csv(input, schema), schema);
    auto config = flags.config(seed, threads);
    config.keep_responsibilities = false;
    const auto result = fit(data, config);

    ensure_parent(output);
    if (trace_path.empty()) trace_path = with_suffix(strip_ext(output), ".trace.csv");
    ModelFile model{result.params, data.vocabularies(), config.lambda1, config.lambda2, seed};
    save_model(output, model);
    write_trace_csv(trace_path, result.trace);

    manifest.config = flags.to_json();
    manifest.config["threads"] = threads;
    manifest.inputs = {{"input", input.string()}, {"schema", schema_path.string()}};
    manifest.outputs = {{"model", output.string()}, {"trace", trace_path.string()}};
    manifest.config["result"] = {{"iterations", result.trace.iterations()},
                                 {"converged", result.trace.converged},
                                 {"active_components", result.params.active_count()},
                                 {"objective", result.trace.rows.back().objective}};
    manifest.write(output, seed);
    std::cout << "fit: " << result.trace.iterations() << " iterations, "
              << (result.trace.converged ? "converged" : "not converged") << ", "
              << result.params.active_count() << "/" << config.groups << " active components\n";
    return 0;
}

int cmd_detect(const fs::path& input, const fs::path& schema_path, const fs::path& model_path,
               const fs::path& output, fs::path groups_output, double epsilon, const std::string& mode_text,
               const std::string& decision_arg, std::size_t threads, Manifest manifest) {
    const auto schema = FeatureSchema::load(schema_path);
    const auto model = load_model(model_path);
    const auto data = encode_with_vocab(load_csv(input, schema), schema, model.vocab);
    DetectOptions options;
    options.epsilon = epsilon;
    options.mode = parse_fraud_mode(mode_text);
    options.threads = threads;
    if (decision_arg != "auto") options.decision = DecisionDistribution::load(decision_arg);
    const auto resp = e_step(data, model.params, threads);
    const auto report = detect(data, model.params, resp, options);

    ensure_parent(output);
    if (groups_output.empty()) groups_output = with_suffix(strip_ext(output), ".groups.csv");
    write_row_report(output, report);
    write_group_report(groups_output, report, model.params);

    const auto outliers = std::accumulate(report.outlier_mask.begin(), report.outlier_mask.end(), std::size_t{0});
    const auto flagged = std::accumulate(report.group_flags.begin(), report.group_flags.end(), std::size_t{0});
    manifest.config = {{"epsilon", epsilon}, {"fraud_mode", mode_text}, {"decision", decision_arg},
                       {"threads", threads}};
    manifest.inputs = {{"input", input.string()}, {"schema", schema_path.string()}, {"model", model_path.string()}};
    manifest.outputs = {{"rows", output.string()}, {"groups", groups_output.string()}};
    manifest.write(output, model.seed);
    std::cout << "detect: " << data.n_rows() << " rows, " << outliers << " outliers, " << flagged
              << " flagged groups\n";
    return 0;
}

struct GenFlags {
    std::size_t rows = 1000;
    std::size_t features = 10;
    std::size_t groups_true = 5;
    std::size_t dims = 20;
    std::size_t support_size = 2;
    double mu_high = 0.8;
    double mu_low = 0.2;
    double nfr = 0.0;
    bool fraud_mix = false;
    std::string preset;
};

int cmd_generate(const CLI::App& cmd, const GenFlags& flags, const fs::path& output, std::uint64_t seed,
                 Manifest manifest) {
    GenConfig base;
    std::vector<std::size_t> sweep{flags.features};
    std::size_t fit_groups = 0;
    if (!flags.preset.empty()) {
        const auto preset = paper_analysis_preset(flags.preset);
        base = preset.config;
        sweep = preset.m_sweep;
        fit_groups = preset.fit_groups;
    }
    auto given = [&](const char* name) { return cmd.count(name) > 0; };
    if (flags.preset.empty() || given("--rows")) base.n_rows = flags.rows;
    if (flags.preset.empty() || given("--groups-true")) base.groups_true = flags.groups_true;
    if (flags.preset.empty() || given("--dims")) base.dims = {flags.dims};
    if (given("--features")) sweep = {flags.features};
    base.support_size = flags.support_size;
    base.mu_high = flags.mu_high;
    base.mu_low = flags.mu_low;
    base.nfr = flags.nfr;
    base.fraud_mix = flags.fraud_mix;
    base.seed = seed;

    ensure_parent(output);
    json files = json::array();
    for (auto m : sweep) {
        GenConfig cfg = base;
        cfg.n_features = m;
        fs::path prefix = sweep.size() > 1 ? with_suffix(output, "_M" + std::to_string(m)) : output;
        const auto gen = generate(cfg);
        write_generated(prefix, gen);
        files.push_back({{"M", m},
                         {"rows", gen.data.n_rows()},
                         {"data", with_suffix(prefix, ".csv").string()},
                         {"schema", with_suffix(prefix, ".schema.json").string()},
                         {"truth", with_suffix(prefix, ".truth.csv").string()}});
        std::cout << "generate: " << with_suffix(prefix, ".csv").string() << " (" << gen.data.n_rows()
                  << " rows, M=" << m << ")\n";
    }
    manifest.config = {{"rows", base.n_rows},         {"groups_true", base.groups_true},
                       {"dims", base.dims},           {"m_sweep", sweep},
                       {"support_size", base.support_size}, {"mu_high", base.mu_high},
                       {"mu_low", base.mu_low},       {"nfr", base.nfr},
                       {"fraud_mix", base.fraud_mix}, {"preset", flags.preset}};
    if (fit_groups) manifest.config["fit_groups"] = fit_groups;
    manifest.outputs = {{"datasets", files}};
    manifest.write(output, seed);
    return 0;
}

struct EvalFlags {
    fs::path truth;
    fs::path report;
    std::string score;
    fs::path pr_curve;
    fs::path roc_curve;
    fs::path odds_dir;
    std::vector<int> bins{5, 10, 20};
    std::vector<std::string> datasets;
};

// Reads one numeric column of the detect row report.
std::vector<std::string> read_report_column(const fs::path& path, const std::string& column, std::size_t& rows) {
    FeatureSchema schema = categorical_schema({column});
    const auto table = load_csv(path, schema);
    rows = table.n_rows;
    return table.column(column).text;
}

json evaluate_report(const EvalFlags& flags) {
    const auto truth = read_truth_csv(flags.truth);
    std::size_t rows = 0;
    const auto assignment_text = read_report_column(flags.report, "assignment", rows);
    if (rows != truth.d.size()) {
        throw DimensionError("report has " + std::to_string(rows) + " rows, ground truth has " +
                             std::to_string(truth.d.size()));
    }
    std::vector<std::int64_t> predicted, actual(truth.d.begin(), truth.d.end());
    for (const auto& t : assignment_text) predicted.push_back(std::stoll(t));
    const auto cs = clustering_scores(actual, predicted);
    json doc;
    doc["rows"] = rows;
    doc["clustering"] = {{"homogeneity", cs.homogeneity}, {"completeness", cs.completeness}, {"v_score", cs.v_score}};

    const std::size_t positives = std::accumulate(truth.fraud.begin(), truth.fraud.end(), std::size_t{0});
    const bool both = positives > 0 && positives < truth.fraud.size();
    if (!flags.score.empty() && !both) throw MetricError("ground truth fraud labels contain a single class");
    if (both) {
        std::vector<int> labels(truth.fraud.begin(), truth.fraud.end());
        const std::vector<std::string> columns =
            flags.score.empty() ? std::vector<std::string>{"label_score", "anomaly_score"}
                                : std::vector<std::string>{flags.score};
        for (const auto& column : columns) {
            const auto text = read_report_column(flags.report, column, rows);
            std::vector<double> scores;
            for (const auto& t : text) scores.push_back(std::stod(t));
            const auto pr = pr_curve(labels, scores);
            const auto roc = roc_curve(labels, scores);
            doc[column] = {{"roc_auc", roc.auc}, {"pr_auc", pr.auc}};
            if (column == columns.front()) {
                if (!flags.pr_curve.empty()) write_pr_csv(flags.pr_curve, pr);
                if (!flags.roc_curve.empty()) write_roc_csv(flags.roc_curve, roc);
            }
        }
    }
    return doc;
}

json evaluate_odds(const EvalFlags& flags, const FitConfig& config) {
    json doc;
    doc["datasets"] = json::array();
    std::size_t met = 0, present = 0;
    for (const auto& target : odds_targets()) {
        if (!flags.datasets.empty() &&
            std::find(flags.datasets.begin(), flags.datasets.end(), target.name) == flags.datasets.end()) {
            continue;
        }
        const auto r = run_odds_dataset(flags.odds_dir / (target.name + ".csv"), target, config, flags.bins);
        json entry = {{"name", r.name},     {"found", r.found}, {"target", r.target},
                      {"band", r.band},     {"bins", r.bins},   {"roc_auc", r.auc},
                      {"best_bins", r.best_bins}, {"best_roc_auc", r.best_auc},
                      {"within_band", r.within_band}, {"note", r.note}};
        if (r.found) {
            entry["gap"] = r.target - r.best_auc;
            ++present;
            met += r.within_band ? 1 : 0;
        }
        doc["datasets"].push_back(entry);
        std::cout << "odds " << r.name << ": " << (r.found ? "" : "missing ") << r.note << '\n';
    }
    doc["present"] = present;
    doc["within_band"] = met;
    return doc;
}

int cmd_bench(const fs::path& output, const fs::path& input_prefix, bool generate_data, std::size_t repeat,
              const FitFlags& flags, std::size_t iterations, std::uint64_t seed, std::size_t threads,
              Manifest manifest) {
    const auto preset = paper_analysis_preset("runtime");
    if (!generate_data && input_prefix.empty()) {
        throw InputError("bench: pass --generate or --input-prefix pointing at generated runtime datasets");
    }
    ensure_parent(output);
    std::ofstream out(output);
    if (!out) throw InputError("cannot write file: " + output.string());
    out << "M,seconds\n" << std::setprecision(9);
    for (auto m : preset.m_sweep) {
        EncodedDataset data;
        if (generate_data) {
            GenConfig cfg = preset.config;
            cfg.n_features = m;
            cfg.seed = seed;
            data = generate(cfg).data;
        } else {
            const auto prefix = with_suffix(input_prefix, "_M" + std::to_string(m));
            data = load_encoded(with_suffix(prefix, ".csv"), with_suffix(prefix, ".schema.json"));
        }
        auto config = flags.config(seed, threads);
        if (config.groups == 0) config.groups = preset.fit_groups;
        config.max_outer_iters = iterations;
        config.tol = 0.0;
        config.keep_responsibilities = false;
        for (std::size_t r = 0; r < repeat; ++r) {
            const auto result = fit(data, config);
            // The final row is an E-step only; time full iterations when there are any.
            const auto& rows = result.trace.rows;
            const std::size_t full = rows.size() > 1 ? rows.size() - 1 : rows.size();
            double total = 0.0;
            for (std::size_t k = 0; k < full; ++k) total += rows[k].seconds;
            const double per_iter = total / static_cast<double>(full);
            out << m << ',' << per_iter << '\n';
            std::cout << "bench: M=" << m << " " << per_iter << " s/iter\n";
        }
    }
    manifest.config = flags.to_json();
    manifest.config["repeat"] = repeat;
    manifest.config["iterations"] = iterations;
    manifest.config["generate"] = generate_data;
    manifest.config["threads"] = threads;
    manifest.config["m_sweep"] = preset.m_sweep;
    if (!input_prefix.empty()) manifest.inputs = {{"input_prefix", input_prefix.string()}};
    manifest.outputs = {{"timings", output.string()}};
    manifest.write(output, seed);
    return 0;
}

int cmd_export(const fs::path& model_path, const fs::path& prefix, Manifest manifest) {
    const auto model = load_model(model_path);
    const auto& p = model.params;
    ensure_parent(prefix);
    {
        std::ofstream out(with_suffix(prefix, ".pi.csv"));
        out << "group,active,pi\n" << std::setprecision(17);
        for (std::size_t g = 0; g < p.groups; ++g) out << g << ',' << int(p.active[g]) << ',' << p.pi[g] << '\n';
    }
    {
        std::ofstream out(with_suffix(prefix, ".mu.csv"));
        out << "group";
        for (std::size_t m = 0; m < p.n_features(); ++m) out << ',' << m;
        out << '\n' << std::setprecision(17);
        for (std::size_t g = 0; g < p.groups; ++g) {
            out << g;
            for (std::size_t m = 0; m < p.n_features(); ++m) out << ',' << p.mu_at(g, m);
            out << '\n';
        }
    }
    {
        std::ofstream out(with_suffix(prefix, ".alpha_beta.csv"));
        out << "group,feature,value,alpha,beta\n" << std::setprecision(17);
        for (std::size_t g = 0; g < p.groups; ++g) {
            for (std::size_t m = 0; m < p.n_features(); ++m) {
                const auto a = p.alpha_row(g, m);
                const auto b = p.beta_row(g, m);
                for (std::size_t i = 0; i < a.size(); ++i) {
                    const std::string value = m < model.vocab.size() && i < model.vocab[m].size()
                                                  ? model.vocab[m][i]
                                                  : std::to_string(i);
                    out << g << ',' << m << ',' << csv_escape(value) << ',' << a[i] << ',' << b[i] << '\n';
                }
            }
        }
    }
    manifest.inputs = {{"model", model_path.string()}};
    manifest.outputs = {{"pi", with_suffix(prefix, ".pi.csv").string()},
                        {"mu", with_suffix(prefix, ".mu.csv").string()},
                        {"alpha_beta", with_suffix(prefix, ".alpha_beta.csv").string()}};
    manifest.write(prefix, model.seed);
    return 0;
}

}  // namespace

OddsResult run_odds_dataset(const fs::path& csv, const OddsTarget& target, const FitConfig& config,
                            const std::vector<int>& bins) {
    OddsResult r;
    r.name = target.name;
    r.target = target.target;
    r.band = target.band;
    if (!fs::exists(csv)) {
        r.note = "dataset not found at " + csv.string();
        return r;
    }
    r.found = true;
    std::vector<std::string> header;
    {
        std::ifstream in(csv);
        std::string line;
        if (!std::getline(in, line)) throw InputError(csv.string() + ": missing header row");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        header = split_csv_record(line);
    }
    if (header.size() < 2) throw InputError(csv.string() + ": need at least one feature and a label column");
    std::string label = header.back();
    for (const auto& h : header) {
        if (h == "label" || h == "y") label = h;
    }
    std::vector<int> labels;
    r.best_auc = -1.0;
    for (int b : bins) {
        FeatureSchema schema;
        for (const auto& h : header) {
            if (h != label) schema.features.push_back({h, FeatureKind::continuous, b, std::nullopt});
        }
        schema.label = label;
        const auto table = load_csv(csv, schema);
        if (labels.empty()) labels = parse_binary(table.column(label).text, csv.string());
        const auto data = encode(table, schema);
        auto cfg = config;
        cfg.keep_responsibilities = false;
        const auto result = fit(data, cfg);
        const double auc = roc_auc(labels, anomaly_scores(data, result.params, cfg.threads));
        r.bins.push_back(b);
        r.auc.push_back(auc);
        if (auc > r.best_auc) {
            r.best_auc = auc;
            r.best_bins = b;
        }
    }
    r.within_band = std::abs(r.best_auc - r.target) <= r.band;
    std::ostringstream note;
    note << std::setprecision(4) << "best ROC-AUC " << r.best_auc << " at " << r.best_bins << " bins, target "
         << r.target << " +/- " << r.band << (r.within_band ? " (within band)" : " (gap reported)");
    r.note = note.str();
    return r;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"FIRD: mixture of synchronization/randomness multinomial pairs for categorical data"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::size_t threads = 0;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
        cmd->add_option("--threads", threads, "Worker threads (0: FIRD_THREADS or all cores)")->capture_default_str();
    };

    Manifest manifest;
    for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a CSV dataset");
    fs::path fit_input, fit_schema, fit_output, fit_trace;
    FitFlags fit_flags;
    fit_cmd->add_option("--input,-i", fit_input, "Input CSV")->required();
    fit_cmd->add_option("--schema,-s", fit_schema, "Schema JSON")->required();
    fit_cmd->add_option("--output,-o", fit_output, "Model JSON to write")->required();
    fit_cmd->add_option("--trace", fit_trace, "Trace CSV (default: <output stem>.trace.csv)");
    fit_flags.add(*fit_cmd, true);
    add_common(fit_cmd);

    // detect
    auto* det_cmd = app.add_subcommand("detect", "Score rows and groups with a fitted model");
    fs::path det_input, det_schema, det_model, det_output, det_groups;
    double epsilon = 0.05;
    std::string fraud_mode = "binomial", decision = "auto";
    det_cmd->add_option("--input,-i", det_input, "Input CSV")->required();
    det_cmd->add_option("--schema,-s", det_schema, "Schema JSON")->required();
    det_cmd->add_option("--model,-m", det_model, "Model JSON")->required();
    det_cmd->add_option("--output,-o", det_output, "Row report CSV")->required();
    det_cmd->add_option("--groups-output", det_groups, "Group report CSV (default: <output stem>.groups.csv)");
    det_cmd->add_option("--epsilon", epsilon, "Tolerance of the outlier filter and fraud threshold")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    det_cmd->add_option("--fraud-mode", fraud_mode, "binomial or literal")
        ->capture_default_str()
        ->check(CLI::IsMember({"binomial", "literal"}));
    det_cmd->add_option("--decision", decision, "p(label|group) JSON file, or auto")->capture_default_str();
    add_common(det_cmd);

    // generate
    auto* gen_cmd = app.add_subcommand("generate", "Generate a labeled synthetic dataset");
    GenFlags gen_flags;
    fs::path gen_output;
    gen_cmd->add_option("--output,-o", gen_output, "Output prefix")->required();
    gen_cmd->add_option("--rows,-N", gen_flags.rows, "Structured rows")->capture_default_str();
    gen_cmd->add_option("--features,-M", gen_flags.features, "Features")->capture_default_str();
    gen_cmd->add_option("--groups-true", gen_flags.groups_true, "Generating clusters")->capture_default_str();
    gen_cmd->add_option("--dims,-D", gen_flags.dims, "Values per feature")->capture_default_str();
    gen_cmd->add_option("--support-size", gen_flags.support_size, "Values carrying alpha mass")
        ->capture_default_str();
    gen_cmd->add_option("--mu-high", gen_flags.mu_high, "mu on synchronized features")->capture_default_str();
    gen_cmd->add_option("--mu-low", gen_flags.mu_low, "mu on the other features")->capture_default_str();
    gen_cmd->add_option("--nfr", gen_flags.nfr, "Uniform rows appended per structured row")->capture_default_str();
    gen_cmd->add_flag("--fraud-mix", gen_flags.fraud_mix, "Label structured rows as fraud");
    gen_cmd->add_option("--preset", gen_flags.preset, "dcr, lambda or runtime")
        ->check(CLI::IsMember({"dcr", "lambda", "runtime"}));
    add_common(gen_cmd);

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a detection report or run the ODDS benchmark");
    EvalFlags eval_flags;
    FitFlags odds_flags;
    odds_flags.groups = 10;
    fs::path eval_output;
    eval_cmd->add_option("--output,-o", eval_output, "Metrics JSON")->required();
    auto* truth_opt = eval_cmd->add_option("--truth", eval_flags.truth, "Ground truth CSV (row,d,fraud)");
    auto* report_opt = eval_cmd->add_option("--report", eval_flags.report, "Row report CSV from detect");
    eval_cmd->add_option("--score", eval_flags.score, "Report column to rank by")
        ->check(CLI::IsMember({"label_score", "anomaly_score"}));
    eval_cmd->add_option("--pr-curve", eval_flags.pr_curve, "PR curve CSV");
    eval_cmd->add_option("--roc-curve", eval_flags.roc_curve, "ROC curve CSV");
    auto* odds_opt = eval_cmd->add_option("--odds-dir", eval_flags.odds_dir, "Directory with <dataset>.csv files");
    eval_cmd->add_option("--bins", eval_flags.bins, "Bin counts to sweep")->capture_default_str();
    eval_cmd->add_option("--datasets", eval_flags.datasets, "Subset of benchmark datasets");
    odds_flags.add(*eval_cmd, false);
    truth_opt->needs(report_opt);
    report_opt->needs(truth_opt);
    odds_opt->excludes(truth_opt);
    add_common(eval_cmd);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time EM iterations over the runtime preset");
    fs::path bench_output, bench_prefix;
    bool bench_generate = false;
    std::size_t repeat = 1, bench_iters = 10;
    FitFlags bench_flags;
    bench_cmd->add_option("--output,-o", bench_output, "Timing CSV")->required();
    bench_cmd->add_flag("--generate", bench_generate, "Generate the preset datasets in memory");
    bench_cmd->add_option("--input-prefix", bench_prefix, "Prefix used by `generate --preset runtime`");
    bench_cmd->add_option("--repeat", repeat, "Timing rows per M")->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--iterations", bench_iters, "EM iterations per timed fit")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    bench_flags.add(*bench_cmd, false);
    add_common(bench_cmd);

    // export
    auto* exp_cmd = app.add_subcommand("export", "Write pi, mu, alpha and beta as CSV matrices");
    fs::path exp_model, exp_prefix;
    exp_cmd->add_option("--model,-m", exp_model, "Model JSON")->required();
    exp_cmd->add_option("--output,-o", exp_prefix, "Output prefix")->required();
    add_common(exp_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*fit_cmd) {
            manifest.command = "fit";
            return cmd_fit(fit_input, fit_schema, fit_output, fit_trace, fit_flags, seed, threads, manifest);
        }
        if (*det_cmd) {
            manifest.command = "detect";
            return cmd_detect(det_input, det_schema, det_model, det_output, det_groups, epsilon, fraud_mode,
                              decision, threads, manifest);
        }
        if (*gen_cmd) {
            manifest.command = "generate";
            return cmd_generate(*gen_cmd, gen_flags, gen_output, seed, manifest);
        }
        if (*eval_cmd) {
            manifest.command = "evaluate";
            json doc;
            if (!eval_flags.odds_dir.empty()) {
                doc = evaluate_odds(eval_flags, odds_flags.config(seed, threads));
                manifest.config = odds_flags.to_json();
                manifest.config["bins"] = eval_flags.bins;
                manifest.inputs = {{"odds_dir", eval_flags.odds_dir.string()}};
            } else if (!eval_flags.truth.empty()) {
                doc = evaluate_report(eval_flags);
                manifest.config = {{"score", eval_flags.score}};
                manifest.inputs = {{"truth", eval_flags.truth.string()}, {"report", eval_flags.report.string()}};
            } else {
                throw InputError("evaluate: pass --truth with --report, or --odds-dir");
            }
            ensure_parent(eval_output);
            write_json(eval_output, doc);
            manifest.outputs = {{"metrics", eval_output.string()}};
            manifest.write(eval_output, seed);
            std::cout << doc.dump(2) << '\n';
            return 0;
        }
        if (*bench_cmd) {
            manifest.command = "bench";
            return cmd_bench(bench_output, bench_prefix, bench_generate, repeat, bench_flags, bench_iters, seed,
                             threads, manifest);
        }
        if (*exp_cmd) {
            manifest.command = "export";
            return cmd_export(exp_model, exp_prefix, manifest);
        }
    } catch (const NumericError& e) {
        std::cerr << "fird: numeric failure: " << e.what() << '\n';
        return 1;
    } catch (const InputError& e) {
        std::cerr << "fird: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "fird: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "fird: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace fird
