#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dosebound/benchmark.hpp"
#include "dosebound/errors.hpp"
#include "dosebound/specfun.hpp"

using namespace dosebound;

namespace {

TrialConfig small_config(Form form = Form::Quadratic) {
    TrialConfig c;
    c.form = form;
    c.n_train = 300;
    c.n_test = 100;
    c.t_grid_size = 20;
    c.gamma_grid_size = 12;
    c.seed = 17;
    return c;
}

IntervalCurve curve_of(std::vector<double> lo, std::vector<double> hi) {
    IntervalCurve c;
    c.t_grid.assign(lo.size(), 0.0);
    c.lo = std::move(lo);
    c.hi = std::move(hi);
    c.undefined_mask.assign(c.lo.size(), false);
    return c;
}

double kl_bern(double p, double q) {
    auto term = [](double a, double b) { return a > 0.0 ? a * std::log(a / b) : 0.0; };
    return term(p, q) + term(1.0 - p, 1.0 - q);
}

const Matrix& raw_data() {
    static const Matrix raw = synthetic_raw_data(1000, 8, 3);
    return raw;
}

}  // namespace

TEST_CASE("quantile normalization") {
    const std::vector<double> col = {3.0, 1.0, 2.0};
    const auto q = quantile_normalize(col);
    CHECK(q[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(q[1] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(q[2] == doctest::Approx(0.5).epsilon(1e-15));

    const std::vector<double> flat(7, 4.2);
    for (double v : quantile_normalize(flat)) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(quantile_normalize(std::vector<double>{1.0}), UsageError);

    const Matrix raw = synthetic_raw_data(800, 3, 4);
    std::vector<double> column(raw.rows);
    for (std::size_t i = 0; i < raw.rows; ++i) column[i] = raw(i, 1);
    const auto u = quantile_normalize(column);
    const double mean = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());
    CHECK(std::abs(mean - 0.5) < 3.0 / std::sqrt(12.0 * static_cast<double>(u.size())));
    for (double v : u) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("synthetic raw data is deterministic and finite") {
    const Matrix a = synthetic_raw_data(50, 6, 9);
    const Matrix b = synthetic_raw_data(50, 6, 9);
    CHECK(a.data == b.data);
    CHECK(std::all_of(a.data.begin(), a.data.end(), [](double v) { return std::isfinite(v); }));
    CHECK(synthetic_raw_data(50, 6, 10).data != a.data);
}

TEST_CASE("generated trial shapes and columns") {
    const TrialConfig c = small_config();
    const TrialData trial = generate_trial(raw_data(), c);
    CHECK(trial.v.rows == 400);
    CHECK(trial.v.cols == 11);
    CHECK(trial.mixing.size() == 121);
    CHECK(trial.y.size() == 400);
    CHECK(c.treatment_index() == 5);
    const TrainingSet train = trial.train_set();
    const TrainingSet test = trial.test_set();
    CHECK(train.size() == 300);
    CHECK(test.size() == 100);
    CHECK(train.x.cols == 5);
    CHECK(train.t[0] == trial.v(0, 5));
    CHECK(test.y[0] == trial.y[300]);
    for (double v : trial.v.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    for (double y : trial.y) CHECK((y == 0.0 || y == 1.0));
    CHECK(generate_trial(raw_data(), small_config(Form::Linear)).mixing.size() == 11);

    TrialConfig big = c;
    big.n_train = 2000;
    CHECK_THROWS_AS(generate_trial(raw_data(), big), UsageError);
}

TEST_CASE("median pre-activation maps to one half") {
    const TrialData trial = generate_trial(raw_data(), small_config());
    std::vector<double> u(trial.v.rows);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = trial.pre_activation(trial.v.row(i));
    std::nth_element(u.begin(), u.begin() + 199, u.end());
    const double lower = u[199];
    const double upper = *std::min_element(u.begin() + 200, u.end());
    CHECK(trial.location == doctest::Approx(0.5 * (lower + upper)).epsilon(1e-12));
    CHECK(trial.scale > 0.0);
    CHECK(specfun::normal_cdf((trial.location - trial.location) / trial.scale) == 0.5);
}

TEST_CASE("outcomes follow the success probability") {
    const TrialData trial = generate_trial(raw_data(), small_config());
    double p_sum = 0.0;
    double y_sum = 0.0;
    for (std::size_t i = 0; i < trial.v.rows; ++i) {
        p_sum += trial.success_probability(trial.v.row(i));
        y_sum += trial.y[i];
    }
    const double n = static_cast<double>(trial.v.rows);
    CHECK(std::abs(y_sum - p_sum) / n < 4.0 * 0.5 / std::sqrt(n));
}

TEST_CASE("one-hot linear mixing is monotone in treatment") {
    TrialData trial = generate_trial(raw_data(), small_config(Form::Linear));
    std::fill(trial.mixing.begin(), trial.mixing.end(), 0.0);
    trial.mixing[trial.config.treatment_index()] = 1.0;
    const auto row = trial.v.row(3);
    double prev = -1.0;
    for (int i = 0; i <= 50; ++i) {
        const double p = trial.success_probability_at(row, i / 50.0);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("true APO matches a direct recomputation") {
    const TrialData trial = generate_trial(raw_data(), small_config());
    const std::vector<double> grid = {0.0, 0.13, 0.5, 0.77, 1.0};
    const auto apo = true_apo(trial, grid);
    const std::size_t treat = trial.config.treatment_index();
    const std::size_t k = trial.config.k();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double sum = 0.0;
        for (std::size_t i = trial.n_train; i < trial.v.rows; ++i) {
            double u = 0.0;
            for (std::size_t a = 0; a < k; ++a) {
                const double va = a == treat ? (k - 1) * grid[g] : trial.v(i, a);
                for (std::size_t b = 0; b < k; ++b) {
                    const double vb = b == treat ? (k - 1) * grid[g] : trial.v(i, b);
                    u += va * trial.mixing[a * k + b] * vb;
                }
            }
            sum += 0.5 * std::erfc(-(u - trial.location) / trial.scale / std::sqrt(2.0));
        }
        CHECK(std::abs(apo[g] - sum / trial.config.n_test) < 1e-12);
    }
}

TEST_CASE("divergence cost") {
    const std::vector<double> p = {0.3, 0.6};
    CHECK(divergence_cost(p, curve_of({0.3, 0.6}, {0.3, 0.6})) == doctest::Approx(0.0).epsilon(1e-12));

    const std::vector<double> half = {0.5};
    const double expected =
        specfun::integrate([](double q) { return kl_bern(0.5, q); }, 0.25, 0.75) / 0.5;
    CHECK(std::abs(divergence_cost(half, curve_of({0.25}, {0.75})) - expected) < 1e-9);

    const std::vector<double> skew = {0.2};
    const double skewed =
        specfun::integrate([](double q) { return kl_bern(0.2, q); }, 0.1, 0.9) / 0.8;
    CHECK(std::abs(divergence_cost(skew, curve_of({0.1}, {0.9})) - skewed) < 1e-9);

    double prev = 0.0;
    for (int i = 1; i < 40; ++i) {
        const double w = 0.01 * i;
        const double c = divergence_cost(half, curve_of({0.5 - w}, {0.5 + w}));
        CHECK(c > prev);
        prev = c;
    }

    IntervalCurve flagged = curve_of({0.5}, {0.5});
    flagged.undefined_mask[0] = true;
    const double vacuous = divergence_cost(half, curve_of({kProbabilityClamp}, {1.0 - kProbabilityClamp}));
    CHECK(divergence_cost(half, flagged) == doctest::Approx(vacuous).epsilon(1e-14));
    CHECK_THROWS_AS(divergence_cost(p, curve_of({0.1}, {0.2})), UsageError);
}

TEST_CASE("coverage counts contained and flagged points") {
    const std::vector<double> p = {0.2, 0.4, 0.6, 0.8};
    IntervalCurve c = curve_of({0.1, 0.5, 0.5, 0.9}, {0.3, 0.6, 0.7, 0.95});
    CHECK(coverage(p, c) == 0.5);
    c.undefined_mask[3] = true;
    CHECK(coverage(p, c) == 0.75);
}

TEST_CASE("calibration agrees with an exhaustive scan") {
    const TrialConfig c = small_config();
    const TrialData trial = generate_trial(raw_data(), c);
    TrainConfig train;
    train.epochs = 10;
    const TrainingSet set = trial.train_set();
    const Predictors predictors =
        make_predictors(fit_outcome(set, train).model, fit_propensity(set, train).model);
    const TrainingSet test = trial.test_set();
    const auto t_grid = c.t_grid();
    const auto gamma_grid = c.gamma_grid();
    const auto p_true = true_apo(trial, t_grid);

    for (const char* name : {"deltamsm", "uniform", "binarymsm"}) {
        const Method m = parse_method(name);
        std::vector<double> cov;
        for (double g : gamma_grid) {
            cov.push_back(coverage(p_true, apo_interval(predictors, m.model, test.x, t_grid, g)));
        }
        for (double target : {0.5, 0.9, 1.0}) {
            const Calibration cal =
                calibrate_gamma(m.model, predictors, test.x, p_true, t_grid, gamma_grid, target);
            const auto hit = std::find_if(cov.begin(), cov.end(), [&](double v) { return v >= target; });
            if (hit == cov.end()) {
                CHECK_FALSE(cal.calibrated);
                CHECK(cal.gamma_index == gamma_grid.size() - 1);
            } else {
                CHECK(cal.calibrated);
                CHECK(cal.gamma_index == static_cast<std::size_t>(hit - cov.begin()));
                CHECK(cal.coverage == *hit);
            }
            CHECK(cal.evaluations <= 6);
        }
        const Calibration zero =
            calibrate_gamma(m.model, predictors, test.x, p_true, t_grid, gamma_grid, 0.0);
        CHECK(zero.gamma_star == 1.0);
        CHECK(zero.calibrated);
    }
}

TEST_CASE("ranking") {
    TrialReport one;
    one.scores = {{"deltamsm", 1.2, 0.95, 10.0, true}};
    rank_trial(one);
    CHECK(one.best_credit[0] == 1.0);
    CHECK(one.ratio_to_best[0] == 1.0);

    TrialReport tie;
    tie.scores = {{"a", 1.2, 0.95, 10.0, true}, {"b", 1.2, 0.95, 10.0, true}, {"c", 1.0, 0.5, 1.0, false}};
    rank_trial(tie);
    CHECK(tie.best_credit[0] == 0.5);
    CHECK(tie.best_credit[1] == 0.5);
    CHECK(tie.best_credit[2] == 0.0);
    CHECK(tie.ratio_to_best[0] == 1.0);
    CHECK(tie.ratio_to_best[2] == doctest::Approx(0.1));

    TrialReport none;
    none.scores = {{"a", 2.5, 0.5, 30.0, false}, {"b", 2.5, 0.6, 20.0, false}};
    rank_trial(none);
    CHECK(none.best_credit[1] == 1.0);
    CHECK(none.ratio_to_best[0] == doctest::Approx(1.5));

    const auto summary = summarize({one, one}, {"deltamsm"});
    CHECK(summary[0].pct_best == doctest::Approx(100.0));
    CHECK(summary[0].cost_std == 0.0);
}

TEST_CASE("method names") {
    CHECK(std::holds_alternative<DeltaMSM>(parse_method("deltamsm").model));
    CHECK(std::get<DeltaMSM>(parse_method("deltamsm").model).scheme == DeltaScheme::BalancedBeta);
    CHECK(std::get<DeltaMSM>(parse_method("deltamsm-beta", 4.0).model).precision == 4.0);
    CHECK(std::holds_alternative<CMSM>(parse_method("cmsm").model));
    CHECK_THROWS_AS(parse_method("msm"), UsageError);
}

TEST_CASE("benchmark configuration parsing") {
    const auto doc = nlohmann::json::parse(R"({
        "seed": 4, "trials": 3, "methods": ["deltamsm", "uniform"],
        "trial": {"n_confounders": 6, "form": "linear", "n_train": 200},
        "train": {"epochs": 5},
        "raw": {"rows": 600, "cols": 5}
    })");
    const BenchmarkConfig c = benchmark_config_from_json(doc);
    CHECK(c.seed == 4);
    CHECK(c.trials == 3);
    CHECK(c.methods.size() == 2);
    CHECK(c.trial.form == Form::Linear);
    CHECK(c.trial.n_confounders == 6);
    CHECK(c.train.epochs == 5);
    CHECK(c.raw.rows == 600);
    CHECK(c.trial.n_test == 250);

    CHECK_THROWS_AS(benchmark_config_from_json(nlohmann::json::parse(R"({"trails": 3})")), UsageError);
    CHECK_THROWS_AS(benchmark_config_from_json(nlohmann::json::parse(R"({"trials": "3"})")), UsageError);
    CHECK_THROWS_AS(benchmark_config_from_json(nlohmann::json::parse(R"({"trial": {"form": "cubic"}})")),
                    UsageError);
    CHECK_THROWS_AS(benchmark_config_from_json(nlohmann::json::parse(R"({"methods": ["x"]})")), UsageError);
    CHECK_THROWS_AS(
        benchmark_config_from_json(nlohmann::json::parse(R"({"trial": {"target_coverage": 1.5}})")),
        UsageError);
}

TEST_CASE("a small benchmark is deterministic") {
    BenchmarkConfig config;
    config.trials = 2;
    config.methods = {"deltamsm", "uniform"};
    config.trial = small_config();
    config.train.epochs = 5;
    config.seed = 2;
    const BenchmarkResult a = run_benchmark(raw_data(), config);
    const BenchmarkResult b = run_benchmark(raw_data(), config);
    CHECK(a.failed_trials == 0);
    CHECK(summary_json(a, config).dump() == summary_json(b, config).dump());
    CHECK(trials_csv(a) == trials_csv(b));
    CHECK(a.trials[0].seed != a.trials[1].seed);

    config.threads = 2;
    const BenchmarkResult c = run_benchmark(raw_data(), config);
    CHECK(summary_json(c, config).dump() == summary_json(a, config).dump());

    const auto csv = trials_csv(a);
    CHECK(csv.rfind("trial_id,method,gamma_star,coverage,cost_x1000,flags\n", 0) == 0);
    double credit = 0.0;
    for (const auto& t : a.trials) credit += std::accumulate(t.best_credit.begin(), t.best_credit.end(), 0.0);
    CHECK(credit == doctest::Approx(2.0));
}
