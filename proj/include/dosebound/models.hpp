#pragma once

// Linear outcome and propensity predictors trained by maximum likelihood
// with mini-batch ADAM.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "dosebound/estimator.hpp"
#include "dosebound/matrix.hpp"
#include "dosebound/sensitivity.hpp"

namespace dosebound {

inline constexpr int kModelFormatVersion = 1;
inline constexpr double kTreatmentClamp = 1e-6;

/// p(y=1|t,x) = σ((w·[x,t] + b) / stretch).
struct OutcomeModel {
    std::vector<double> weights;  // covariates then treatment
    double bias = 0.0;
    double stretch = 100.0;

    static OutcomeModel zeros(std::size_t n_covariates, double stretch = 100.0);
    std::size_t n_covariates() const { return weights.empty() ? 0 : weights.size() - 1; }

    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);
};

struct LinearHead {
    std::vector<double> weights;
    double bias = 0.0;

    double operator()(std::span<const double> x) const;
};

/// Beta propensity whose parameters are gated as cap·σ(u/stretch) ∈ (0, cap).
struct PropensityModel {
    LinearHead alpha;
    LinearHead beta;
    double cap = 100.0;
    double stretch = 100.0;

    static PropensityModel zeros(std::size_t n_covariates, double cap = 100.0, double stretch = 100.0);
    std::size_t n_covariates() const { return alpha.weights.size(); }

    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);
};

double predict_outcome(const OutcomeModel& model, std::span<const double> x, double t);
BetaDist predict_propensity(const PropensityModel& model, std::span<const double> x);

struct TrainConfig {
    double learning_rate = 10.0;
    std::size_t batches = 4;
    std::size_t epochs = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double stretch = 100.0;
    double cap = 100.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Visible covariates, treatment and binary outcome, one row per unit.
struct TrainingSet {
    Matrix x;
    std::vector<double> t;
    std::vector<double> y;

    std::size_t size() const { return t.size(); }
    void validate() const;
};

struct FitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_loss;
    bool degenerate_outcome = false;
    std::size_t clamped_treatments = 0;
};

struct OutcomeFit {
    OutcomeModel model;
    FitReport report;
};

struct PropensityFit {
    PropensityModel model;
    FitReport report;
};

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Mean Bernoulli negative log-likelihood and its gradient in parameters()
/// order. An empty row set means every row.
LossGradient outcome_loss_gradient(const OutcomeModel& model, const TrainingSet& data,
                                   std::span<const std::size_t> rows = {});

/// Mean negative Beta log-likelihood and its gradient in parameters() order.
/// Treatments are clamped to [1e-6, 1 − 1e-6].
LossGradient propensity_loss_gradient(const PropensityModel& model, const TrainingSet& data,
                                      std::span<const std::size_t> rows = {});

OutcomeFit fit_outcome(const TrainingSet& data, const TrainConfig& config);
PropensityFit fit_propensity(const TrainingSet& data, const TrainConfig& config);

nlohmann::json to_json(const OutcomeModel& model);
nlohmann::json to_json(const PropensityModel& model);
nlohmann::json to_json(const TrainConfig& config);
OutcomeModel outcome_from_json(const nlohmann::json& doc);
PropensityModel propensity_from_json(const nlohmann::json& doc);

/// Wraps fitted models as estimator predictors.
Predictors make_predictors(const OutcomeModel& outcome, const PropensityModel& propensity);

}  // namespace dosebound
