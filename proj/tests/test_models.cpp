#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dosebound/errors.hpp"
#include "dosebound/models.hpp"
#include "dosebound/oracles.hpp"
#include "dosebound/specfun.hpp"

using namespace dosebound;

namespace {

TrainingSet toy_outcome_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TrainingSet d;
    d.x = Matrix(n, 1);
    d.t.resize(n);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.x(i, 0) = unit(rng);
        d.t[i] = 0.05 + 0.9 * unit(rng);
        d.y[i] = d.x(i, 0) > 0.5 ? 1.0 : 0.0;
    }
    return d;
}

}  // namespace

TEST_CASE("outcome predictions") {
    const OutcomeModel zero = OutcomeModel::zeros(3);
    const std::vector<double> x = {0.2, -1.0, 4.0};
    CHECK(predict_outcome(zero, x, 0.7) == 0.5);

    OutcomeModel m = OutcomeModel::zeros(3);
    m.weights = {1.5, -2.0, 0.25, 3.0};
    m.bias = 0.4;
    const double u = 1.5 * 0.2 + 2.0 + 1.0 + 3.0 * 0.7 + 0.4;
    CHECK(std::abs(predict_outcome(m, x, 0.7) - 1.0 / (1.0 + std::exp(-u / 100.0))) < 1e-12);
    m.stretch = 1e300;
    CHECK(std::abs(predict_outcome(m, x, 0.7) - 0.5) < 1e-12);
    CHECK_THROWS_AS(predict_outcome(zero, std::vector<double>{1.0}, 0.5), UsageError);
}

TEST_CASE("outcome predictions are monotone in the linear score") {
    OutcomeModel m = OutcomeModel::zeros(1);
    m.weights = {0.0, 1.0};
    double prev = 0.0;
    for (int i = -300; i <= 300; ++i) {
        m.bias = i * 2.0;
        const double p = predict_outcome(m, std::vector<double>{0.0}, 0.0);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        CHECK(p >= prev);
        prev = p;
    }
}

TEST_CASE("propensity predictions") {
    const PropensityModel zero = PropensityModel::zeros(2);
    const BetaDist b = predict_propensity(zero, std::vector<double>{0.3, 0.1});
    CHECK(b.alpha == 50.0);
    CHECK(b.beta == 50.0);

    PropensityModel big = PropensityModel::zeros(1);
    big.alpha.bias = 3000.0;
    const BetaDist near_cap = predict_propensity(big, std::vector<double>{0.0});
    CHECK(near_cap.alpha < 100.0);
    CHECK(near_cap.alpha > 99.99);
    CHECK_THROWS_AS(predict_propensity(zero, std::vector<double>{1.0}), UsageError);

    PropensityModel some = PropensityModel::zeros(1);
    some.alpha.weights = {-120.0};
    some.beta.bias = -200.0;
    const BetaDist p = predict_propensity(some, std::vector<double>{1.2});
    CHECK(std::abs(specfun::integrate([&](double t) { return pdf(p, t); }, 0.0, 1.0) - 1.0) < 1e-8);
}

TEST_CASE("training gradients match central differences") {
    const auto outcome = oracles::check_outcome_gradient(100, 21);
    const auto propensity = oracles::check_propensity_gradient(100, 22);
    CHECK(outcome.passed());
    CHECK(propensity.passed());
    CHECK(outcome.max_error < 1e-4);
    CHECK(propensity.max_error < 1e-4);
}

TEST_CASE("loss decreases on separable data with a small step") {
    const TrainingSet data = toy_outcome_data(200, 1);
    TrainConfig config;
    config.learning_rate = 0.5;
    config.batches = 1;
    config.epochs = 40;
    const OutcomeFit fit = fit_outcome(data, config);
    REQUIRE(fit.report.epoch_loss.size() == 40);
    CHECK(fit.report.epoch_loss[0] < fit.report.initial_loss);
    for (std::size_t e = 1; e < fit.report.epoch_loss.size(); ++e) {
        CHECK(fit.report.epoch_loss[e] < fit.report.epoch_loss[e - 1]);
    }
}

TEST_CASE("fitting never ends above the initial loss and is reproducible") {
    const TrainingSet data = toy_outcome_data(300, 2);
    TrainConfig config;
    config.seed = 9;
    const OutcomeFit a = fit_outcome(data, config);
    const OutcomeFit b = fit_outcome(data, config);
    CHECK(a.model.weights == b.model.weights);
    CHECK(a.model.bias == b.model.bias);
    CHECK(a.report.final_loss <= a.report.initial_loss);

    const PropensityFit pa = fit_propensity(data, config);
    const PropensityFit pb = fit_propensity(data, config);
    CHECK(pa.model.parameters() == pb.model.parameters());
    CHECK(pa.report.final_loss <= pa.report.initial_loss);
}

TEST_CASE("marginal Beta propensity is recovered") {
    std::mt19937_64 rng(5);
    std::gamma_distribution<double> ga(3.0, 1.0);
    std::gamma_distribution<double> gb(5.0, 1.0);
    const std::size_t n = 5000;
    TrainingSet data;
    data.x = Matrix(n, 0);
    data.t.resize(n);
    data.y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = ga(rng);
        data.t[i] = a / (a + gb(rng));
        data.y[i] = static_cast<double>(i % 2);
    }
    const PropensityFit fit = fit_propensity(data, TrainConfig{});
    const BetaDist b = predict_propensity(fit.model, std::span<const double>{});
    CHECK(std::abs(b.alpha - 3.0) / 3.0 < 0.15);
    CHECK(std::abs(b.beta - 5.0) / 5.0 < 0.15);
}

TEST_CASE("edge treatments are clamped and degenerate outcomes flagged") {
    TrainingSet data;
    data.x = Matrix(4, 1, 0.5);
    data.t = {0.0, 0.3, 1.0, 0.6};
    data.y = {1.0, 1.0, 1.0, 1.0};
    const PropensityFit p = fit_propensity(data, TrainConfig{});
    CHECK(p.report.clamped_treatments == 2);
    CHECK(std::isfinite(p.report.final_loss));
    const OutcomeFit o = fit_outcome(data, TrainConfig{});
    CHECK(o.report.degenerate_outcome);

    TrainingSet bad = data;
    bad.y.pop_back();
    CHECK_THROWS_AS(fit_outcome(bad, TrainConfig{}), UsageError);
    TrainConfig config;
    config.learning_rate = 0.0;
    CHECK_THROWS_AS(config.validate(), UsageError);
}

TEST_CASE("model JSON round trip") {
    OutcomeModel o = OutcomeModel::zeros(2);
    o.weights = {0.1, -0.30000000000000004, 7.5};
    o.bias = 1e-17;
    const OutcomeModel o2 = outcome_from_json(nlohmann::json::parse(to_json(o).dump()));
    CHECK(o2.weights == o.weights);
    CHECK(o2.bias == o.bias);
    CHECK(o2.stretch == o.stretch);

    PropensityModel p = PropensityModel::zeros(2);
    p.alpha.weights = {1.0 / 3.0, 2.0};
    p.beta.bias = -4.25;
    const PropensityModel p2 = propensity_from_json(nlohmann::json::parse(to_json(p).dump()));
    CHECK(p2.parameters() == p.parameters());

    nlohmann::json wrong = to_json(o);
    wrong["format_version"] = 99;
    CHECK_THROWS_AS(outcome_from_json(wrong), UsageError);
    CHECK_THROWS_AS(propensity_from_json(to_json(o)), UsageError);
}
