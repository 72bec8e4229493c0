#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "dosebound/benchmark.hpp"
#include "dosebound/csv.hpp"
#include "dosebound/errors.hpp"
#include "dosebound/estimator.hpp"
#include "dosebound/models.hpp"
#include "dosebound/oracles.hpp"
#include "dosebound/sensitivity.hpp"

namespace dosebound::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t env_threads() {
    const char* raw = std::getenv("DOSEBOUND_THREADS");
    if (raw == nullptr || *raw == '\0') return 1;
    std::size_t value = 0;
    const char* end = raw + std::char_traits<char>::length(raw);
    const auto res = std::from_chars(raw, end, value);
    if (res.ec != std::errc{} || res.ptr != end || value == 0) {
        throw UsageError("DOSEBOUND_THREADS must be a positive integer");
    }
    return value;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw UsageError("cannot create output directory " + dir.string());
}

std::vector<std::string> split_list(const std::string& list) {
    std::vector<std::string> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---------------------------------------------------------------- dgp

struct DgpOptions {
    std::size_t rows = 5000;
    std::size_t cols = 16;
    std::uint64_t seed = 0;
    std::string out = ".";
    std::string from_csv;
    bool trial = false;
    std::size_t confounders = 10;
    std::string form = "quadratic";
    std::size_t n_train = 750;
    std::size_t n_test = 250;
    std::size_t grid = 100;
};

csv::Table split_table(const TrainingSet& set) {
    csv::Table table;
    for (std::size_t c = 0; c < set.x.cols; ++c) table.header.push_back("x" + std::to_string(c));
    table.header.push_back("t");
    table.header.push_back("y");
    table.values = Matrix(set.size(), set.x.cols + 2);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t c = 0; c < set.x.cols; ++c) table.values(i, c) = set.x(i, c);
        table.values(i, set.x.cols) = set.t[i];
        table.values(i, set.x.cols + 1) = set.y[i];
    }
    return table;
}

int cmd_dgp(const DgpOptions& o, std::ostream& out) {
    const fs::path dir(o.out);
    ensure_dir(dir);
    if (!o.trial) {
        if (!o.from_csv.empty()) throw UsageError("--from-csv only makes sense with --trial");
        const Matrix raw = synthetic_raw_data(o.rows, o.cols, o.seed);
        csv::Table table;
        for (std::size_t c = 0; c < raw.cols; ++c) table.header.push_back("c" + std::to_string(c));
        table.values = raw;
        csv::write_atomic(dir / "raw.csv", csv::to_string(table));
        out << "wrote " << (dir / "raw.csv").string() << " (" << raw.rows << " x " << raw.cols << ")\n";
        return 0;
    }

    TrialConfig config;
    config.n_confounders = o.confounders;
    config.form = parse_form(o.form);
    config.n_train = o.n_train;
    config.n_test = o.n_test;
    config.t_grid_size = o.grid;
    config.seed = o.seed;
    config.validate();
    RawSpec spec;
    spec.rows = std::max(o.rows, o.n_train + o.n_test);
    spec.cols = o.cols;
    spec.seed = o.seed;
    spec.csv = o.from_csv;
    const Matrix raw = load_raw(spec);
    const TrialData trial = generate_trial(raw, config);

    csv::write_atomic(dir / "train.csv", csv::to_string(split_table(trial.train_set())));
    csv::write_atomic(dir / "test.csv", csv::to_string(split_table(trial.test_set())));
    const auto grid = config.t_grid();
    const auto apo = true_apo(trial, grid);
    csv::Table truth;
    truth.header = {"t", "apo"};
    truth.values = Matrix(grid.size(), 2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        truth.values(i, 0) = grid[i];
        truth.values(i, 1) = apo[i];
    }
    csv::write_atomic(dir / "truth.csv", csv::to_string(truth));
    out << "wrote train.csv (" << config.n_train << " rows), test.csv (" << config.n_test
        << " rows), truth.csv (" << grid.size() << " rows) to " << dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- bounds

struct BoundsOptions {
    std::string data;
    std::string eval;
    std::string model = "deltamsm";
    std::string scheme = "balanced-beta";
    double gamma = 1.0;
    std::string target = "apo";
    std::optional<std::size_t> instance;
    std::optional<double> precision;
    double threshold = 0.5;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::size_t grid = 100;
};

TrainingSet load_training_set(const std::string& path) {
    const csv::Table table = csv::read(path);
    const std::size_t t_col = table.column_index("t");
    const std::size_t y_col = table.column_index("y");
    std::vector<std::size_t> covariates;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c != t_col && c != y_col) covariates.push_back(c);
    }
    TrainingSet set;
    set.x = Matrix(table.values.rows, covariates.size());
    set.t.resize(table.values.rows);
    set.y.resize(table.values.rows);
    for (std::size_t i = 0; i < table.values.rows; ++i) {
        for (std::size_t c = 0; c < covariates.size(); ++c) set.x(i, c) = table.values(i, covariates[c]);
        set.t[i] = table.values(i, t_col);
        set.y[i] = table.values(i, y_col);
        if (set.y[i] != 0.0 && set.y[i] != 1.0) throw UsageError(path + ": y must be 0 or 1");
    }
    set.validate();
    return set;
}

DeltaScheme parse_scheme(const std::string& name) {
    if (name == "beta") return DeltaScheme::Beta;
    if (name == "balanced-beta") return DeltaScheme::BalancedBeta;
    if (name == "gamma") return DeltaScheme::Gamma;
    if (name == "gaussian") return DeltaScheme::Gaussian;
    throw UsageError("unknown scheme '" + name + "' (expected beta, balanced-beta, gamma or gaussian)");
}

SensitivityModel parse_model(const BoundsOptions& o) {
    if (o.model == "deltamsm") return DeltaMSM{parse_scheme(o.scheme), o.precision};
    if (o.model == "cmsm") return CMSM{};
    if (o.model == "uniform") return UniformModel{};
    if (o.model == "binarymsm") return BinaryMSM{o.threshold};
    throw UsageError("unknown model '" + o.model + "' (expected deltamsm, cmsm, uniform or binarymsm)");
}

/// The fitted propensity is Beta; Gamma and Gaussian schemes see its
/// moment-matched counterpart.
Predictors adapt_propensity(Predictors predictors, Family family) {
    if (family == Family::Beta) return predictors;
    auto beta = predictors.propensity;
    predictors.propensity = [beta, family](std::span<const double> x) -> PropensityParams {
        const PropensityParams p = beta(x);
        const double m = mean(p);
        const double v = variance(p);
        if (family == Family::Gamma) return GammaDist{m * m / v, m / v};
        return GaussianDist{m, std::sqrt(v)};
    };
    return predictors;
}

int cmd_bounds(const BoundsOptions& o, std::ostream& out) {
    if (!(o.gamma >= 1.0) || !std::isfinite(o.gamma)) throw UsageError("--gamma must be finite and >= 1");
    if (o.target != "apo" && o.target != "capo") throw UsageError("--target must be apo or capo");
    if (o.target == "capo" && !o.instance) throw UsageError("--target capo requires --instance");
    if (o.precision && !(*o.precision > 0.0)) throw UsageError("--precision must be positive");
    if (o.grid < 2) throw UsageError("--grid must be at least 2");
    const SensitivityModel model = parse_model(o);

    const TrainingSet train = load_training_set(o.data);
    const TrainingSet eval = o.eval.empty() ? train : load_training_set(o.eval);
    if (eval.x.cols != train.x.cols) throw UsageError("--eval must have the same covariates as --data");
    if (o.instance && *o.instance >= eval.size()) {
        throw UsageError("--instance " + std::to_string(*o.instance) + " is out of range (" +
                         std::to_string(eval.size()) + " rows)");
    }

    TrainConfig train_config;
    train_config.seed = o.seed;
    const OutcomeFit outcome = fit_outcome(train, train_config);
    const PropensityFit propensity = fit_propensity(train, train_config);
    Family family = Family::Beta;
    if (const auto* d = std::get_if<DeltaMSM>(&model)) family = scheme_family(d->scheme);
    const Predictors predictors =
        adapt_propensity(make_predictors(outcome.model, propensity.model), family);

    std::vector<double> grid(o.grid);
    for (std::size_t i = 0; i < o.grid; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(o.grid - 1);
    EstimatorOptions options;
    options.threads = env_threads();
    const IntervalCurve curve =
        o.target == "apo" ? apo_interval(predictors, model, eval.x, grid, o.gamma, options)
                          : capo_interval(predictors, model, eval.x.row(*o.instance), grid, o.gamma, options);

    const fs::path dir(o.out);
    ensure_dir(dir);
    csv::Table table;
    table.header = {"t", "lo", "hi", "undefined_flag"};
    table.values = Matrix(grid.size(), 4);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        table.values(i, 0) = grid[i];
        table.values(i, 1) = curve.lo[i];
        table.values(i, 2) = curve.hi[i];
        table.values(i, 3) = curve.undefined_mask[i] ? 1.0 : 0.0;
    }
    csv::write_atomic(dir / "bounds.csv", csv::to_string(table));

    json models = {{"format_version", kModelFormatVersion},
                   {"outcome", to_json(outcome.model)},
                   {"propensity", to_json(propensity.model)},
                   {"train", to_json(train_config)},
                   {"sensitivity",
                    {{"model", o.model},
                     {"scheme", o.model == "deltamsm" ? json(o.scheme) : json(nullptr)},
                     {"gamma", o.gamma},
                     {"precision", o.precision ? json(*o.precision) : json(nullptr)},
                     {"target", o.target},
                     {"instance", o.instance ? json(*o.instance) : json(nullptr)}}},
                   {"fit",
                    {{"outcome_final_loss", outcome.report.final_loss},
                     {"propensity_final_loss", propensity.report.final_loss},
                     {"degenerate_outcome", outcome.report.degenerate_outcome},
                     {"clamped_treatments", propensity.report.clamped_treatments}}}};
    csv::write_atomic(dir / "models.json", models.dump(2) + "\n");

    std::size_t flagged = 0;
    for (bool f : curve.undefined_mask) flagged += f ? 1 : 0;
    out << "wrote bounds.csv (" << grid.size() << " points, " << flagged
        << " flagged) and models.json to " << dir.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkOptions {
    std::string config;
    std::optional<std::size_t> trials;
    std::string methods;
    std::string out;
};

int cmd_benchmark(const BenchmarkOptions& o, std::ostream& out, std::ostream& err) {
    json doc = json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw UsageError("cannot open config " + o.config);
        try {
            doc = json::parse(in);
        } catch (const json::parse_error& e) {
            throw UsageError("config " + o.config + " is not valid JSON: " + e.what());
        }
    }
    const bool threads_in_config = doc.is_object() && doc.contains("threads");
    BenchmarkConfig config = benchmark_config_from_json(doc);
    if (!threads_in_config) config.threads = env_threads();
    if (o.trials) config.trials = *o.trials;
    if (!o.methods.empty()) config.methods = split_list(o.methods);
    if (!o.out.empty()) config.out_dir = o.out;
    if (config.out_dir.empty()) config.out_dir = ".";
    config.validate();

    const fs::path dir(config.out_dir);
    ensure_dir(dir);
    const Matrix raw = load_raw(config.raw);
    const BenchmarkResult result = run_benchmark(raw, config);
    csv::write_atomic(dir / "trials.csv", trials_csv(result));
    csv::write_atomic(dir / "summary.json", summary_json(result, config).dump(2) + "\n");

    for (const auto& t : result.trials) {
        if (!t.error.empty()) err << "trial " << t.trial_id << " failed: " << t.error << "\n";
    }
    out << std::left << std::setw(16) << "method" << std::right << std::setw(12) << "cost_x1000"
        << std::setw(10) << "std" << std::setw(10) << "% best" << std::setw(10) << "ratio"
        << std::setw(8) << "uncal" << "\n";
    out << std::fixed;
    for (const auto& s : result.summary) {
        out << std::left << std::setw(16) << s.method << std::right << std::setprecision(2)
            << std::setw(12) << s.cost_mean << std::setw(10) << s.cost_std << std::setprecision(1)
            << std::setw(10) << s.pct_best << std::setprecision(3) << std::setw(10) << s.ratio_mean
            << std::setw(8) << s.uncalibrated << "\n";
    }
    out.unsetf(std::ios::floatfield);
    out << result.trials.size() - result.failed_trials << "/" << result.trials.size()
        << " trials succeeded; wrote trials.csv and summary.json to " << dir.string() << "\n";
    return result.failed_trials == result.trials.size() ? 1 : 0;
}

// ---------------------------------------------------------------- check

struct CheckOptions {
    std::string suite = "all";
    std::size_t samples = 200;
    std::size_t n = 12;
    std::size_t instances = 1000;
    std::size_t points = 100;
    std::uint64_t seed = 1;
};

int cmd_check(const CheckOptions& o, std::ostream& out, std::ostream& err) {
    const bool all = o.suite == "all";
    if (!all && o.suite != "table1" && o.suite != "alg1" && o.suite != "gradients") {
        throw UsageError("--suite must be table1, alg1, gradients or all");
    }
    std::vector<oracles::OracleReport> reports;
    if (all || o.suite == "table1") {
        const double gammas[] = {1.1, 1.5, 2.5};
        for (const auto scheme : {DeltaScheme::Beta, DeltaScheme::BalancedBeta, DeltaScheme::Gamma,
                                  DeltaScheme::Gaussian}) {
            reports.push_back(oracles::check_lambda_bounds(scheme, o.samples, o.seed, gammas));
        }
    }
    if (all || o.suite == "alg1") reports.push_back(oracles::check_extremize(o.instances, o.n, o.seed));
    if (all || o.suite == "gradients") {
        reports.push_back(oracles::check_outcome_gradient(o.points, o.seed));
        reports.push_back(oracles::check_propensity_gradient(o.points, o.seed));
    }

    bool ok = true;
    out << std::left << std::setw(26) << "suite" << std::right << std::setw(8) << "cases"
        << std::setw(10) << "failures" << std::setw(14) << "max error" << std::setw(12) << "tolerance"
        << "  result\n";
    for (const auto& r : reports) {
        out << std::left << std::setw(26) << r.suite << std::right << std::setw(8) << r.cases
            << std::setw(10) << r.failures << std::setw(14) << std::setprecision(3) << std::scientific
            << r.max_error << std::setw(12) << r.tolerance << std::defaultfloat << "  "
            << (r.passed() ? "PASS" : "FAIL") << "\n";
        for (const auto& f : r.failed_inputs) err << r.suite << ": " << f << "\n";
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Causal sensitivity bounds on continuous-treatment dose-response curves", "dosebound"};
    app.require_subcommand(1);

    DgpOptions dgp;
    auto* dgp_cmd = app.add_subcommand("dgp", "Generate synthetic raw data or a benchmark trial");
    dgp_cmd->add_option("--rows", dgp.rows, "Rows of synthetic raw data")->check(CLI::PositiveNumber);
    dgp_cmd->add_option("--cols", dgp.cols, "Columns of synthetic raw data")->check(CLI::PositiveNumber);
    dgp_cmd->add_option("--seed", dgp.seed, "Root seed");
    dgp_cmd->add_option("--out", dgp.out, "Output directory");
    dgp_cmd->add_option("--from-csv", dgp.from_csv, "Raw data CSV to project instead of synthetic data");
    dgp_cmd->add_flag("--trial", dgp.trial, "Write train.csv, test.csv and truth.csv");
    dgp_cmd->add_option("--confounders", dgp.confounders, "Number of confounders (even)");
    dgp_cmd->add_option("--form", dgp.form, "linear or quadratic");
    dgp_cmd->add_option("--n-train", dgp.n_train, "Training rows");
    dgp_cmd->add_option("--n-test", dgp.n_test, "Test rows");
    dgp_cmd->add_option("--grid", dgp.grid, "Treatment grid size for truth.csv");

    BoundsOptions bounds;
    auto* bounds_cmd = app.add_subcommand("bounds", "Fit models and write ignorance intervals");
    bounds_cmd->add_option("--data", bounds.data, "Training CSV with covariates, t and y")->required();
    bounds_cmd->add_option("--eval", bounds.eval, "Instances to bound (defaults to --data)");
    bounds_cmd->add_option("--model", bounds.model, "deltamsm, cmsm, uniform or binarymsm");
    bounds_cmd->add_option("--scheme", bounds.scheme, "beta, balanced-beta, gamma or gaussian");
    bounds_cmd->add_option("--gamma", bounds.gamma, "Violation factor (>= 1)")->required();
    bounds_cmd->add_option("--target", bounds.target, "apo or capo");
    bounds_cmd->add_option("--instance", bounds.instance, "Row of the instance for --target capo");
    bounds_cmd->add_option("--precision", bounds.precision, "Trust precision override");
    bounds_cmd->add_option("--threshold", bounds.threshold, "Dichotomization threshold for binarymsm");
    bounds_cmd->add_option("--out", bounds.out, "Output directory");
    bounds_cmd->add_option("--seed", bounds.seed, "Training seed");
    bounds_cmd->add_option("--grid", bounds.grid, "Treatment grid size");

    BenchmarkOptions bench;
    auto* bench_cmd = app.add_subcommand("benchmark", "Run the semi-synthetic benchmark");
    bench_cmd->add_option("--config", bench.config, "Benchmark config JSON")->check(CLI::ExistingFile);
    bench_cmd->add_option("--trials", bench.trials, "Override the number of trials");
    bench_cmd->add_option("--methods", bench.methods, "Comma-separated method list");
    bench_cmd->add_option("--out", bench.out, "Output directory");

    CheckOptions check;
    auto* check_cmd = app.add_subcommand("check", "Run the oracle self-checks");
    check_cmd->add_option("--suite", check.suite, "table1, alg1, gradients or all");
    check_cmd->add_option("--samples", check.samples, "Closed-form draws per scheme");
    check_cmd->add_option("--n", check.n, "Largest extremization instance size");
    check_cmd->add_option("--instances", check.instances, "Extremization instances");
    check_cmd->add_option("--points", check.points, "Gradient check points per model");
    check_cmd->add_option("--seed", check.seed, "Oracle seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (dgp_cmd->parsed()) return cmd_dgp(dgp, out);
        if (bounds_cmd->parsed()) return cmd_bounds(bounds, out);
        if (bench_cmd->parsed()) return cmd_benchmark(bench, out, err);
        if (check_cmd->parsed()) return cmd_check(check, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace dosebound::cli
