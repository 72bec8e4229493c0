#pragma once

// Semi-synthetic benchmark: random projections of a raw data matrix become
// confounders and a treatment, a random linear or quadratic form of them
// drives a Bernoulli outcome, and each sensitivity model is scored by the
// divergence cost of the smallest violation factor reaching a target
// coverage of the true APO curve.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dosebound/estimator.hpp"
#include "dosebound/matrix.hpp"
#include "dosebound/models.hpp"
#include "dosebound/sensitivity.hpp"

namespace dosebound {

enum class Form { Linear, Quadratic };

const char* form_name(Form form);
Form parse_form(const std::string& name);

struct TrialConfig {
    std::size_t n_confounders = 10;
    Form form = Form::Quadratic;
    std::size_t n_train = 750;
    std::size_t n_test = 250;
    std::size_t t_grid_size = 100;
    std::size_t gamma_grid_size = 100;
    double gamma_min = 1.0;
    double gamma_max = 2.5;
    double target_coverage = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t k() const { return n_confounders + 1; }
    std::size_t treatment_index() const { return n_confounders / 2; }
    std::size_t n_visible() const { return n_confounders / 2; }
    std::vector<double> t_grid() const;
    std::vector<double> gamma_grid() const;
};

/// Ranks mapped to rank/(n+1), ties sharing their average rank.
std::vector<double> quantile_normalize(std::span<const double> column);

/// Raw-data stand-in: Gaussian copula with a random low-rank-plus-diagonal
/// covariance and a mix of normal, exponential, log-normal and uniform
/// marginals at random scales.
Matrix synthetic_raw_data(std::size_t rows, std::size_t cols, std::uint64_t seed);

struct TrialData {
    TrialConfig config;
    /// ⟨visible…, treatment, hidden…⟩ per row, every column in (0, 1).
    Matrix v;
    std::vector<double> y;
    /// k entries (linear) or k×k row-major (quadratic).
    std::vector<double> mixing;
    double location = 0.0;  // median of u
    double scale = 1.0;     // mean absolute deviation of u from the median
    /// Rows [0, n_train) are the training split, the rest the test split.
    std::size_t n_train = 0;

    double pre_activation(std::span<const double> v_row) const;
    /// u* = Φ((u − m)/s) for one row of V.
    double success_probability(std::span<const double> v_row) const;
    /// u* with the treatment coordinate replaced by t.
    double success_probability_at(std::span<const double> v_row, double t) const;

    TrainingSet train_set() const;
    TrainingSet test_set() const;
};

TrialData generate_trial(const Matrix& raw, const TrialConfig& config);

/// Mean over test rows of u* with the treatment set to each grid value.
std::vector<double> true_apo(const TrialData& trial, std::span<const double> t_grid);

inline constexpr double kProbabilityClamp = 1e-6;

/// Grid mean of (1/(hi−lo)) ∫_lo^hi KL(Bern(p) ‖ Bern(q)) dq. Flagged grid
/// points are scored as the vacuous interval. Not multiplied by 1000.
double divergence_cost(std::span<const double> p_true, const IntervalCurve& curve);

/// Fraction of grid points with lo ≤ p ≤ hi; flagged points count as covered.
double coverage(std::span<const double> p_true, const IntervalCurve& curve);

struct Calibration {
    double gamma_star = 1.0;
    std::size_t gamma_index = 0;
    double coverage = 0.0;
    double cost = 0.0;
    bool calibrated = false;
    std::size_t evaluations = 0;
};

/// Smallest Γ on the grid whose APO curve reaches the target coverage. Uses
/// bisection, which is exact because coverage is nondecreasing in Γ.
Calibration calibrate_gamma(const SensitivityModel& model, const Predictors& predictors,
                            const Matrix& instances, std::span<const double> p_true,
                            std::span<const double> t_grid, std::span<const double> gamma_grid,
                            double target_coverage, std::size_t threads = 1);

struct Method {
    std::string name;
    SensitivityModel model;
};

/// "deltamsm" (Balanced Beta), "deltamsm-beta", "cmsm", "uniform", "binarymsm".
Method parse_method(const std::string& name, std::optional<double> precision = std::nullopt);

struct RawSpec {
    std::size_t rows = 5000;
    std::size_t cols = 16;
    std::uint64_t seed = 1;
    std::string csv;  // when set, raw data is read from this file instead
};

struct BenchmarkConfig {
    TrialConfig trial;
    TrainConfig train;
    std::size_t trials = 50;
    std::vector<std::string> methods = {"deltamsm", "cmsm", "uniform", "binarymsm"};
    std::optional<double> precision;
    std::uint64_t seed = 0;
    RawSpec raw;
    std::size_t threads = 1;
    std::string out_dir;

    void validate() const;
};

/// Strict parse: every key is optional, unknown keys and wrong types are
/// rejected with UsageError.
BenchmarkConfig benchmark_config_from_json(const nlohmann::json& doc);

struct MethodScore {
    std::string method;
    double gamma_star = 0.0;
    double coverage = 0.0;
    double cost_x1000 = 0.0;
    bool calibrated = false;
};

struct TrialReport {
    std::size_t trial_id = 0;
    std::uint64_t seed = 0;
    std::vector<MethodScore> scores;
    /// Share of the "best" credit per method, summing to 1 across methods.
    std::vector<double> best_credit;
    std::vector<double> ratio_to_best;
    std::string error;  // non-empty when the trial failed
    bool degenerate_outcome = false;
};

struct MethodSummary {
    std::string method;
    double cost_mean = 0.0;
    double cost_std = 0.0;
    double pct_best = 0.0;
    double ratio_mean = 0.0;
    double ratio_std = 0.0;
    double gamma_star_mean = 0.0;
    double coverage_mean = 0.0;
    std::size_t uncalibrated = 0;
};

struct BenchmarkResult {
    std::vector<TrialReport> trials;
    std::vector<MethodSummary> summary;
    std::size_t failed_trials = 0;
};

/// Runs one trial end to end: generate, fit both models once, calibrate every
/// method and score.
TrialReport run_trial(const Matrix& raw, const BenchmarkConfig& config, std::size_t trial_id,
                      std::size_t threads = 1);

/// Ranks the methods of one trial. Methods that missed the target coverage
/// cannot be best unless every method missed it; exact ties split the credit.
void rank_trial(TrialReport& report);

std::vector<MethodSummary> summarize(const std::vector<TrialReport>& trials,
                                     const std::vector<std::string>& methods);

BenchmarkResult run_benchmark(const Matrix& raw, const BenchmarkConfig& config);

Matrix load_raw(const RawSpec& spec);

/// Echo of everything that influences results (threads and paths excluded).
nlohmann::json to_json(const BenchmarkConfig& config);
nlohmann::json summary_json(const BenchmarkResult& result, const BenchmarkConfig& config);

/// trial_id,method,gamma_star,coverage,cost_x1000,flags
std::string trials_csv(const BenchmarkResult& result);

}  // namespace dosebound
