#include "dosebound/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "dosebound/csv.hpp"
#include "dosebound/errors.hpp"
#include "dosebound/parallel.hpp"
#include "dosebound/rng.hpp"
#include "dosebound/specfun.hpp"

namespace dosebound {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = i + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    return out;
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

const char* form_name(Form form) { return form == Form::Linear ? "linear" : "quadratic"; }

Form parse_form(const std::string& name) {
    if (name == "linear") return Form::Linear;
    if (name == "quadratic") return Form::Quadratic;
    throw UsageError("unknown form '" + name + "' (expected linear or quadratic)");
}

void TrialConfig::validate() const {
    if (n_confounders == 0 || n_confounders % 2 != 0) {
        throw UsageError("n_confounders must be a positive even number");
    }
    if (n_train == 0 || n_test == 0) throw UsageError("n_train and n_test must be positive");
    if (t_grid_size < 2 || gamma_grid_size < 2) throw UsageError("grid sizes must be at least 2");
    if (!(gamma_min >= 1.0) || !(gamma_max > gamma_min) || !std::isfinite(gamma_max)) {
        throw UsageError("gamma grid must satisfy 1 <= gamma_min < gamma_max");
    }
    if (!(target_coverage >= 0.0 && target_coverage <= 1.0)) {
        throw UsageError("target_coverage must lie in [0, 1]");
    }
}

std::vector<double> TrialConfig::t_grid() const { return linspace(0.0, 1.0, t_grid_size); }

std::vector<double> TrialConfig::gamma_grid() const {
    return linspace(gamma_min, gamma_max, gamma_grid_size);
}

std::vector<double> quantile_normalize(std::span<const double> column) {
    const std::size_t n = column.size();
    if (n < 2) throw UsageError("quantile_normalize: at least two values are required");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return column[a] < column[b]; });
    std::vector<double> out(n);
    const double denom = static_cast<double>(n + 1);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && column[order[j + 1]] == column[order[i]]) ++j;
        // ranks are 1-based; the tied block [i, j] shares their average
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t r = i; r <= j; ++r) out[order[r]] = rank / denom;
        i = j + 1;
    }
    return out;
}

Matrix synthetic_raw_data(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    if (rows == 0 || cols == 0) throw UsageError("synthetic_raw_data: rows and cols must be positive");
    std::mt19937_64 rng = make_stream(seed, "raw-data");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t rank = std::max<std::size_t>(1, cols / 4);
    Matrix loading(cols, rank);
    for (double& v : loading.data) v = normal(rng);
    std::vector<double> noise_sd(cols);
    std::vector<double> marginal_scale(cols);
    std::vector<int> marginal_kind(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        noise_sd[j] = std::sqrt(0.1 + 0.9 * unit(rng));
        marginal_scale[j] = std::exp(normal(rng));
        marginal_kind[j] = static_cast<int>(j % 4);
    }
    std::vector<double> marginal_sd(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double var = noise_sd[j] * noise_sd[j];
        for (std::size_t r = 0; r < rank; ++r) var += loading(j, r) * loading(j, r);
        marginal_sd[j] = std::sqrt(var);
    }

    Matrix out(rows, cols);
    std::vector<double> latent(rank);
    for (std::size_t i = 0; i < rows; ++i) {
        for (double& g : latent) g = normal(rng);
        for (std::size_t j = 0; j < cols; ++j) {
            double z = noise_sd[j] * normal(rng);
            for (std::size_t r = 0; r < rank; ++r) z += loading(j, r) * latent[r];
            z /= marginal_sd[j];
            const double u = specfun::normal_cdf(z);
            double value = 0.0;
            switch (marginal_kind[j]) {
                case 0: value = z; break;
                case 1: value = -std::log1p(-std::min(u, 1.0 - 1e-16)); break;
                case 2: value = std::exp(z); break;
                default: value = u; break;
            }
            out(i, j) = marginal_scale[j] * value;
        }
    }
    return out;
}

double TrialData::pre_activation(std::span<const double> v_row) const {
    const std::size_t k = config.k();
    const std::size_t treat = config.treatment_index();
    const double up = static_cast<double>(k - 1);
    auto coord = [&](std::size_t i) { return i == treat ? up * v_row[i] : v_row[i]; };
    double u = 0.0;
    if (config.form == Form::Linear) {
        for (std::size_t i = 0; i < k; ++i) u += mixing[i] * coord(i);
        return u;
    }
    for (std::size_t i = 0; i < k; ++i) {
        const double vi = coord(i);
        double inner = 0.0;
        for (std::size_t j = 0; j < k; ++j) inner += mixing[i * k + j] * coord(j);
        u += vi * inner;
    }
    return u;
}

double TrialData::success_probability(std::span<const double> v_row) const {
    return specfun::normal_cdf((pre_activation(v_row) - location) / scale);
}

double TrialData::success_probability_at(std::span<const double> v_row, double t) const {
    std::vector<double> copy(v_row.begin(), v_row.end());
    copy[config.treatment_index()] = t;
    return success_probability(copy);
}

namespace {

TrainingSet split(const TrialData& trial, std::size_t begin, std::size_t end) {
    const std::size_t visible = trial.config.n_visible();
    const std::size_t treat = trial.config.treatment_index();
    TrainingSet set;
    set.x = Matrix(end - begin, visible);
    set.t.resize(end - begin);
    set.y.resize(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t c = 0; c < visible; ++c) set.x(i - begin, c) = trial.v(i, c);
        set.t[i - begin] = trial.v(i, treat);
        set.y[i - begin] = trial.y[i];
    }
    return set;
}

}  // namespace

TrainingSet TrialData::train_set() const { return split(*this, 0, n_train); }
TrainingSet TrialData::test_set() const { return split(*this, n_train, v.rows); }

TrialData generate_trial(const Matrix& raw, const TrialConfig& config) {
    config.validate();
    const std::size_t n = config.n_train + config.n_test;
    if (raw.rows < n) {
        throw UsageError("generate_trial: raw data has " + std::to_string(raw.rows) +
                         " rows but " + std::to_string(n) + " are required");
    }
    if (raw.cols == 0) throw UsageError("generate_trial: raw data has no columns");
    const std::size_t d = raw.cols;
    const std::size_t k = config.k();

    std::vector<std::size_t> rows(raw.rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::mt19937_64 row_rng = make_stream(config.seed, "row-sample");
    std::shuffle(rows.begin(), rows.end(), row_rng);
    rows.resize(n);

    // Raw columns are standardized so that no single unit of measurement
    // dominates the projections.
    std::vector<double> col_mean(d, 0.0);
    std::vector<double> col_sd(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r : rows) col_mean[c] += raw(r, c);
        col_mean[c] /= static_cast<double>(n);
        for (std::size_t r : rows) col_sd[c] += (raw(r, c) - col_mean[c]) * (raw(r, c) - col_mean[c]);
        col_sd[c] = std::sqrt(col_sd[c] / static_cast<double>(n));
        if (!(col_sd[c] > 0.0)) col_sd[c] = 1.0;
    }

    std::mt19937_64 proj_rng = make_stream(config.seed, "projection");
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix projection(d, k);
    for (double& w : projection.data) w = normal(proj_rng);

    TrialData trial;
    trial.config = config;
    trial.n_train = config.n_train;
    trial.v = Matrix(n, k);
    std::vector<double> column(n);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                s += projection(j, c) * (raw(rows[i], j) - col_mean[j]) / col_sd[j];
            }
            column[i] = s;
        }
        const auto normalized = quantile_normalize(column);
        for (std::size_t i = 0; i < n; ++i) trial.v(i, c) = normalized[i];
    }

    std::mt19937_64 mix_rng = make_stream(config.seed, "mixing");
    trial.mixing.resize(config.form == Form::Linear ? k : k * k);
    for (double& m : trial.mixing) m = normal(mix_rng);

    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = trial.pre_activation(trial.v.row(i));
    trial.location = median(u);
    double mad = 0.0;
    for (double ui : u) mad += std::abs(ui - trial.location);
    mad /= static_cast<double>(n);
    if (!(mad > 0.0)) throw DegenerateError("generate_trial: pre-activation has zero spread");
    trial.scale = mad;

    std::mt19937_64 noise_rng = make_stream(config.seed, "outcome-noise");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    trial.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = specfun::normal_cdf((u[i] - trial.location) / trial.scale);
        trial.y[i] = unit(noise_rng) < p ? 1.0 : 0.0;
    }
    return trial;
}

std::vector<double> true_apo(const TrialData& trial, std::span<const double> t_grid) {
    std::vector<double> out(t_grid.size(), 0.0);
    const std::size_t n_test = trial.v.rows - trial.n_train;
    if (n_test == 0) throw UsageError("true_apo: the trial has no test rows");
    std::vector<double> row(trial.v.cols);
    for (std::size_t g = 0; g < t_grid.size(); ++g) {
        double sum = 0.0;
        for (std::size_t i = trial.n_train; i < trial.v.rows; ++i) {
            const auto src = trial.v.row(i);
            std::copy(src.begin(), src.end(), row.begin());
            row[trial.config.treatment_index()] = t_grid[g];
            sum += trial.success_probability(row);
        }
        out[g] = sum / static_cast<double>(n_test);
    }
    return out;
}

namespace {

void check_lengths(std::span<const double> p_true, const IntervalCurve& curve) {
    if (p_true.size() != curve.lo.size() || p_true.size() != curve.hi.size() || p_true.empty()) {
        throw UsageError("p_true and the interval curve must have the same nonzero length");
    }
}

bool flagged(const IntervalCurve& curve, std::size_t i) {
    return !curve.undefined_mask.empty() && curve.undefined_mask[i];
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

/// Mean of ln q over [a, b] with 0 < a ≤ b, stable as b − a → 0.
double mean_log(double a, double b) {
    const double x = (b - a) / a;
    const double g = x < 1e-8 ? 1.0 - 0.5 * x : std::log1p(x) / x;
    return std::log(b) + g - 1.0;
}

}  // namespace

double divergence_cost(std::span<const double> p_true, const IntervalCurve& curve) {
    check_lengths(p_true, curve);
    const double lo_clamp = kProbabilityClamp;
    const double hi_clamp = 1.0 - kProbabilityClamp;
    double total = 0.0;
    for (std::size_t i = 0; i < p_true.size(); ++i) {
        double lo = lo_clamp;
        double hi = hi_clamp;
        if (!flagged(curve, i)) {
            lo = std::clamp(std::min(curve.lo[i], curve.hi[i]), lo_clamp, hi_clamp);
            hi = std::clamp(std::max(curve.lo[i], curve.hi[i]), lo_clamp, hi_clamp);
        }
        const double p = p_true[i];
        const double kl = xlogx(p) + xlogx(1.0 - p) - p * mean_log(lo, hi) -
                          (1.0 - p) * mean_log(1.0 - hi, 1.0 - lo);
        total += std::max(0.0, kl);
    }
    return total / static_cast<double>(p_true.size());
}

double coverage(std::span<const double> p_true, const IntervalCurve& curve) {
    check_lengths(p_true, curve);
    std::size_t covered = 0;
    for (std::size_t i = 0; i < p_true.size(); ++i) {
        if (flagged(curve, i) || (curve.lo[i] <= p_true[i] && p_true[i] <= curve.hi[i])) ++covered;
    }
    return static_cast<double>(covered) / static_cast<double>(p_true.size());
}

Calibration calibrate_gamma(const SensitivityModel& model, const Predictors& predictors,
                            const Matrix& instances, std::span<const double> p_true,
                            std::span<const double> t_grid, std::span<const double> gamma_grid,
                            double target_coverage, std::size_t threads) {
    if (gamma_grid.empty()) throw UsageError("calibrate_gamma: empty gamma grid");
    EstimatorOptions options;
    options.threads = threads;
    Calibration out;
    std::vector<double> cov_cache(gamma_grid.size(), kNaN);
    std::vector<double> cost_cache(gamma_grid.size(), kNaN);
    auto evaluate = [&](std::size_t g) {
        if (std::isnan(cov_cache[g])) {
            const IntervalCurve curve = apo_interval(predictors, model, instances, t_grid,
                                                     gamma_grid[g], options);
            cov_cache[g] = coverage(p_true, curve);
            cost_cache[g] = divergence_cost(p_true, curve);
            ++out.evaluations;
        }
        return cov_cache[g];
    };

    const std::size_t last = gamma_grid.size() - 1;
    std::size_t index = last;
    if (evaluate(last) >= target_coverage) {
        out.calibrated = true;
        // first index whose coverage reaches the target, within [lo, hi]
        std::size_t lo = 0;
        std::size_t hi = last;
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (evaluate(mid) >= target_coverage) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        index = lo;
        evaluate(index);
    }
    out.gamma_index = index;
    out.gamma_star = gamma_grid[index];
    out.coverage = cov_cache[index];
    out.cost = cost_cache[index];
    return out;
}

Method parse_method(const std::string& name, std::optional<double> precision) {
    if (name == "deltamsm") return {name, DeltaMSM{DeltaScheme::BalancedBeta, precision}};
    if (name == "deltamsm-beta") return {name, DeltaMSM{DeltaScheme::Beta, precision}};
    if (name == "cmsm") return {name, CMSM{}};
    if (name == "uniform") return {name, UniformModel{}};
    if (name == "binarymsm") return {name, BinaryMSM{}};
    throw UsageError("unknown method '" + name +
                     "' (expected deltamsm, deltamsm-beta, cmsm, uniform or binarymsm)");
}

void BenchmarkConfig::validate() const {
    trial.validate();
    train.validate();
    if (trials == 0) throw UsageError("trials must be positive");
    if (methods.empty()) throw UsageError("at least one method is required");
    std::set<std::string> seen;
    for (const auto& m : methods) {
        parse_method(m);
        if (!seen.insert(m).second) throw UsageError("method '" + m + "' is listed twice");
    }
    if (precision && !(*precision > 0.0 && std::isfinite(*precision))) {
        throw UsageError("precision must be positive and finite");
    }
    if (raw.csv.empty() && (raw.rows == 0 || raw.cols == 0)) {
        throw UsageError("raw rows and cols must be positive");
    }
    if (raw.csv.empty() && raw.rows < trial.n_train + trial.n_test) {
        throw UsageError("raw rows must cover n_train + n_test");
    }
    if (threads == 0) throw UsageError("threads must be positive");
}

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw UsageError(where + " must be a JSON object");
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* key : allowed) ok = ok || item.key() == key;
        if (!ok) throw UsageError("unknown key '" + item.key() + "' in " + where);
    }
}

template <class T>
void read_key(const json& obj, const char* key, const std::string& where, T& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    const std::string name = where + "." + key;
    if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw UsageError(name + " must be a number");
        out = v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw UsageError(name + " must be a string");
        out = v.get<std::string>();
    } else {
        if (!v.is_number_unsigned()) throw UsageError(name + " must be a non-negative integer");
        out = v.get<T>();
    }
}

}  // namespace

BenchmarkConfig benchmark_config_from_json(const json& doc) {
    reject_unknown(doc, "config",
                   {"seed", "trials", "methods", "precision", "threads", "out_dir", "trial",
                    "train", "raw"});
    BenchmarkConfig c;
    read_key(doc, "seed", "config", c.seed);
    read_key(doc, "trials", "config", c.trials);
    read_key(doc, "threads", "config", c.threads);
    read_key(doc, "out_dir", "config", c.out_dir);
    if (doc.contains("methods")) {
        const json& m = doc.at("methods");
        if (!m.is_array()) throw UsageError("config.methods must be an array of strings");
        c.methods.clear();
        for (const auto& e : m) {
            if (!e.is_string()) throw UsageError("config.methods must be an array of strings");
            c.methods.push_back(e.get<std::string>());
        }
    }
    if (doc.contains("precision") && !doc.at("precision").is_null()) {
        double r = 0.0;
        read_key(doc, "precision", "config", r);
        c.precision = r;
    }
    if (doc.contains("trial")) {
        const json& t = doc.at("trial");
        reject_unknown(t, "config.trial",
                       {"n_confounders", "form", "n_train", "n_test", "t_grid_size",
                        "gamma_grid_size", "gamma_min", "gamma_max", "target_coverage"});
        read_key(t, "n_confounders", "config.trial", c.trial.n_confounders);
        std::string form = form_name(c.trial.form);
        read_key(t, "form", "config.trial", form);
        c.trial.form = parse_form(form);
        read_key(t, "n_train", "config.trial", c.trial.n_train);
        read_key(t, "n_test", "config.trial", c.trial.n_test);
        read_key(t, "t_grid_size", "config.trial", c.trial.t_grid_size);
        read_key(t, "gamma_grid_size", "config.trial", c.trial.gamma_grid_size);
        read_key(t, "gamma_min", "config.trial", c.trial.gamma_min);
        read_key(t, "gamma_max", "config.trial", c.trial.gamma_max);
        read_key(t, "target_coverage", "config.trial", c.trial.target_coverage);
    }
    if (doc.contains("train")) {
        const json& t = doc.at("train");
        reject_unknown(t, "config.train",
                       {"learning_rate", "batches", "epochs", "beta1", "beta2", "epsilon",
                        "stretch", "cap"});
        read_key(t, "learning_rate", "config.train", c.train.learning_rate);
        read_key(t, "batches", "config.train", c.train.batches);
        read_key(t, "epochs", "config.train", c.train.epochs);
        read_key(t, "beta1", "config.train", c.train.beta1);
        read_key(t, "beta2", "config.train", c.train.beta2);
        read_key(t, "epsilon", "config.train", c.train.epsilon);
        read_key(t, "stretch", "config.train", c.train.stretch);
        read_key(t, "cap", "config.train", c.train.cap);
    }
    if (doc.contains("raw")) {
        const json& r = doc.at("raw");
        reject_unknown(r, "config.raw", {"rows", "cols", "seed", "csv"});
        read_key(r, "rows", "config.raw", c.raw.rows);
        read_key(r, "cols", "config.raw", c.raw.cols);
        read_key(r, "seed", "config.raw", c.raw.seed);
        read_key(r, "csv", "config.raw", c.raw.csv);
    }
    c.validate();
    return c;
}

TrialReport run_trial(const Matrix& raw, const BenchmarkConfig& config, std::size_t trial_id,
                      std::size_t threads) {
    TrialReport report;
    report.trial_id = trial_id;
    report.seed = derive_seed(config.seed, "trial", trial_id);

    TrialConfig tc = config.trial;
    tc.seed = report.seed;
    const TrialData trial = generate_trial(raw, tc);

    TrainConfig train = config.train;
    train.seed = derive_seed(report.seed, "train");
    const TrainingSet train_set = trial.train_set();
    const OutcomeFit outcome = fit_outcome(train_set, train);
    const PropensityFit propensity = fit_propensity(train_set, train);
    report.degenerate_outcome = outcome.report.degenerate_outcome;
    const Predictors predictors = make_predictors(outcome.model, propensity.model);

    const TrainingSet test_set = trial.test_set();
    const auto t_grid = tc.t_grid();
    const auto gamma_grid = tc.gamma_grid();
    const auto p_true = true_apo(trial, t_grid);

    for (const auto& name : config.methods) {
        const Method method = parse_method(name, config.precision);
        const Calibration cal = calibrate_gamma(method.model, predictors, test_set.x, p_true, t_grid,
                                                gamma_grid, tc.target_coverage, threads);
        report.scores.push_back({name, cal.gamma_star, cal.coverage, 1000.0 * cal.cost, cal.calibrated});
    }
    rank_trial(report);
    return report;
}

void rank_trial(TrialReport& report) {
    const std::size_t n = report.scores.size();
    report.best_credit.assign(n, 0.0);
    report.ratio_to_best.assign(n, kNaN);
    if (n == 0) return;
    const bool any_calibrated = std::any_of(report.scores.begin(), report.scores.end(),
                                            [](const MethodScore& s) { return s.calibrated; });
    auto eligible = [&](const MethodScore& s) { return s.calibrated || !any_calibrated; };
    double best = kInf;
    for (const auto& s : report.scores) {
        if (eligible(s)) best = std::min(best, s.cost_x1000);
    }
    std::size_t winners = 0;
    for (const auto& s : report.scores) winners += eligible(s) && s.cost_x1000 == best ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& s = report.scores[i];
        if (eligible(s) && s.cost_x1000 == best) report.best_credit[i] = 1.0 / static_cast<double>(winners);
        if (best > 0.0) {
            report.ratio_to_best[i] = s.cost_x1000 / best;
        } else {
            report.ratio_to_best[i] = s.cost_x1000 == 0.0 ? 1.0 : kInf;
        }
    }
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    if (xs.empty()) {
        mean = kNaN;
        sd = kNaN;
        return;
    }
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() < 2) {
        sd = 0.0;
        return;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

std::vector<MethodSummary> summarize(const std::vector<TrialReport>& trials,
                                     const std::vector<std::string>& methods) {
    std::vector<MethodSummary> out;
    for (std::size_t m = 0; m < methods.size(); ++m) {
        MethodSummary s;
        s.method = methods[m];
        std::vector<double> costs;
        std::vector<double> ratios;
        double credit = 0.0;
        double gamma_sum = 0.0;
        double coverage_sum = 0.0;
        std::size_t used = 0;
        for (const auto& t : trials) {
            if (!t.error.empty() || m >= t.scores.size()) continue;
            const MethodScore& score = t.scores[m];
            costs.push_back(score.cost_x1000);
            ratios.push_back(t.ratio_to_best[m]);
            credit += t.best_credit[m];
            gamma_sum += score.gamma_star;
            coverage_sum += score.coverage;
            s.uncalibrated += score.calibrated ? 0 : 1;
            ++used;
        }
        mean_std(costs, s.cost_mean, s.cost_std);
        mean_std(ratios, s.ratio_mean, s.ratio_std);
        const double denom = static_cast<double>(used);
        s.pct_best = used ? 100.0 * credit / denom : kNaN;
        s.gamma_star_mean = used ? gamma_sum / denom : kNaN;
        s.coverage_mean = used ? coverage_sum / denom : kNaN;
        out.push_back(s);
    }
    return out;
}

BenchmarkResult run_benchmark(const Matrix& raw, const BenchmarkConfig& config) {
    config.validate();
    BenchmarkResult result;
    result.trials.resize(config.trials);
    // Parallelism goes to whole trials when there are several of them.
    const bool across_trials = config.trials > 1 && config.threads > 1;
    const std::size_t inner_threads = across_trials ? 1 : config.threads;
    parallel_for(config.trials, across_trials ? config.threads : 1, [&](std::size_t i) {
        try {
            result.trials[i] = run_trial(raw, config, i, inner_threads);
        } catch (const std::exception& e) {
            TrialReport failed;
            failed.trial_id = i;
            failed.seed = derive_seed(config.seed, "trial", i);
            failed.error = e.what();
            result.trials[i] = std::move(failed);
        }
    });
    for (const auto& t : result.trials) result.failed_trials += t.error.empty() ? 0 : 1;
    result.summary = summarize(result.trials, config.methods);
    return result;
}

Matrix load_raw(const RawSpec& spec) {
    if (!spec.csv.empty()) return csv::read(spec.csv).values;
    return synthetic_raw_data(spec.rows, spec.cols, spec.seed);
}

nlohmann::json to_json(const BenchmarkConfig& c) {
    json trial = {{"n_confounders", c.trial.n_confounders},
                  {"form", form_name(c.trial.form)},
                  {"n_train", c.trial.n_train},
                  {"n_test", c.trial.n_test},
                  {"t_grid_size", c.trial.t_grid_size},
                  {"gamma_grid_size", c.trial.gamma_grid_size},
                  {"gamma_min", c.trial.gamma_min},
                  {"gamma_max", c.trial.gamma_max},
                  {"target_coverage", c.trial.target_coverage}};
    json train = to_json(c.train);
    train.erase("seed");
    json raw = {{"rows", c.raw.rows}, {"cols", c.raw.cols}, {"seed", c.raw.seed}};
    if (!c.raw.csv.empty()) raw = {{"csv", c.raw.csv}};
    return {{"seed", c.seed},
            {"trials", c.trials},
            {"methods", c.methods},
            {"precision", c.precision ? json(*c.precision) : json(nullptr)},
            {"trial", trial},
            {"train", train},
            {"raw", raw}};
}

nlohmann::json summary_json(const BenchmarkResult& result, const BenchmarkConfig& config) {
    auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
    json methods = json::object();
    for (const auto& s : result.summary) {
        methods[s.method] = {{"cost_x1000_mean", num(s.cost_mean)},
                             {"cost_x1000_std", num(s.cost_std)},
                             {"pct_best", num(s.pct_best)},
                             {"ratio_to_best_mean", num(s.ratio_mean)},
                             {"ratio_to_best_std", num(s.ratio_std)},
                             {"gamma_star_mean", num(s.gamma_star_mean)},
                             {"coverage_mean", num(s.coverage_mean)},
                             {"uncalibrated_trials", s.uncalibrated}};
    }
    json failures = json::array();
    for (const auto& t : result.trials) {
        if (!t.error.empty()) failures.push_back({{"trial_id", t.trial_id}, {"error", t.error}});
    }
    return {{"config", to_json(config)},
            {"seed", config.seed},
            {"trials", result.trials.size()},
            {"failed_trials", result.failed_trials},
            {"failures", failures},
            {"methods", methods}};
}

std::string trials_csv(const BenchmarkResult& result) {
    std::ostringstream out;
    out << "trial_id,method,gamma_star,coverage,cost_x1000,flags\n";
    for (const auto& t : result.trials) {
        if (!t.error.empty()) {
            out << t.trial_id << ",,nan,nan,nan,failed\n";
            continue;
        }
        for (std::size_t m = 0; m < t.scores.size(); ++m) {
            const auto& s = t.scores[m];
            std::string flags;
            auto add = [&](const char* f) {
                if (!flags.empty()) flags += ';';
                flags += f;
            };
            if (!s.calibrated) add("uncalibrated");
            if (t.best_credit[m] > 0.0) add("best");
            if (t.degenerate_outcome) add("degenerate_outcome");
            out << t.trial_id << ',' << s.method << ',' << csv::format_double(s.gamma_star) << ','
                << csv::format_double(s.coverage) << ',' << csv::format_double(s.cost_x1000) << ','
                << flags << '\n';
        }
    }
    return out.str();
}

}  // namespace dosebound
