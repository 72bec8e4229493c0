#include "dosebound/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dosebound/errors.hpp"
#include "dosebound/rng.hpp"
#include "dosebound/specfun.hpp"

namespace dosebound {

namespace {

double sigmoid(double s) {
    if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

double softplus(double s) { return std::max(s, 0.0) + std::log1p(std::exp(-std::abs(s))); }

double dot(std::span<const double> w, std::span<const double> x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
    return acc;
}

// Gated Beta parameter and its derivative with respect to the head output.
struct Gate {
    double value;
    double slope;
};

Gate gate(double u, double cap, double stretch) {
    const double s = sigmoid(u / stretch);
    return {std::max(cap * s, std::numeric_limits<double>::min()), cap * s * (1.0 - s) / stretch};
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

double clamp_treatment(double t) { return std::clamp(t, kTreatmentClamp, 1.0 - kTreatmentClamp); }

struct Adam {
    std::vector<double> m;
    std::vector<double> v;
    std::size_t step = 0;

    explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void update(std::vector<double>& params, std::span<const double> grad, const TrainConfig& c) {
        ++step;
        const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
        const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            params[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
};

// Mini-batch ADAM over contiguous slices of a freshly shuffled permutation.
template <class Model, class LossFn>
FitReport train(Model& model, const TrainingSet& data, const TrainConfig& config, LossFn&& loss_fn) {
    FitReport report;
    const std::size_t n = data.size();
    std::vector<double> params = model.parameters();
    Adam adam(params.size());
    std::mt19937_64 rng = make_stream(config.seed, "batch-shuffle");
    std::vector<std::size_t> perm = all_rows(n);
    const std::size_t batches = std::min(config.batches, n);

    report.initial_loss = loss_fn(model, std::span<const std::size_t>{}).loss;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t begin = b * n / batches;
            const std::size_t end = (b + 1) * n / batches;
            if (begin == end) continue;
            const std::span<const std::size_t> rows(perm.data() + begin, end - begin);
            const LossGradient lg = loss_fn(model, rows);
            adam.update(params, lg.gradient, config);
            model.set_parameters(params);
        }
        report.epoch_loss.push_back(loss_fn(model, std::span<const std::size_t>{}).loss);
    }
    report.final_loss = report.epoch_loss.empty() ? report.initial_loss : report.epoch_loss.back();
    return report;
}

void check_dims(std::size_t expected, std::size_t got, const char* what) {
    if (expected != got) {
        throw UsageError(std::string(what) + ": expected " + std::to_string(expected) +
                         " covariates, got " + std::to_string(got));
    }
}

}  // namespace

OutcomeModel OutcomeModel::zeros(std::size_t n_covariates, double stretch) {
    return {std::vector<double>(n_covariates + 1, 0.0), 0.0, stretch};
}

std::vector<double> OutcomeModel::parameters() const {
    std::vector<double> p = weights;
    p.push_back(bias);
    return p;
}

void OutcomeModel::set_parameters(std::span<const double> params) {
    if (params.size() != weights.size() + 1) throw UsageError("OutcomeModel: parameter size mismatch");
    std::copy(params.begin(), params.end() - 1, weights.begin());
    bias = params.back();
}

double LinearHead::operator()(std::span<const double> x) const { return dot(weights, x) + bias; }

PropensityModel PropensityModel::zeros(std::size_t n_covariates, double cap, double stretch) {
    return {{std::vector<double>(n_covariates, 0.0), 0.0},
            {std::vector<double>(n_covariates, 0.0), 0.0},
            cap,
            stretch};
}

std::vector<double> PropensityModel::parameters() const {
    std::vector<double> p = alpha.weights;
    p.push_back(alpha.bias);
    p.insert(p.end(), beta.weights.begin(), beta.weights.end());
    p.push_back(beta.bias);
    return p;
}

void PropensityModel::set_parameters(std::span<const double> params) {
    const std::size_t d = alpha.weights.size();
    if (params.size() != 2 * (d + 1)) throw UsageError("PropensityModel: parameter size mismatch");
    std::copy(params.begin(), params.begin() + d, alpha.weights.begin());
    alpha.bias = params[d];
    std::copy(params.begin() + d + 1, params.begin() + 2 * d + 1, beta.weights.begin());
    beta.bias = params[2 * d + 1];
}

double predict_outcome(const OutcomeModel& model, std::span<const double> x, double t) {
    check_dims(model.n_covariates(), x.size(), "predict_outcome");
    const double z = dot(std::span<const double>(model.weights).first(x.size()), x) +
                     model.weights.back() * t + model.bias;
    return sigmoid(z / model.stretch);
}

BetaDist predict_propensity(const PropensityModel& model, std::span<const double> x) {
    check_dims(model.n_covariates(), x.size(), "predict_propensity");
    return {gate(model.alpha(x), model.cap, model.stretch).value,
            gate(model.beta(x), model.cap, model.stretch).value};
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || batches == 0 || !(beta1 >= 0.0 && beta1 < 1.0) ||
        !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0) || !(stretch > 0.0) || !(cap > 0.0)) {
        throw UsageError("TrainConfig: hyperparameters must be positive (betas in [0, 1))");
    }
}

void TrainingSet::validate() const {
    if (t.size() != y.size() || t.size() != x.rows) {
        throw UsageError("TrainingSet: x, t and y must have the same number of rows");
    }
    if (t.empty()) throw UsageError("TrainingSet: no rows");
}

LossGradient outcome_loss_gradient(const OutcomeModel& model, const TrainingSet& data,
                                   std::span<const std::size_t> rows) {
    const std::vector<std::size_t> every = rows.empty() ? all_rows(data.size()) : std::vector<std::size_t>{};
    if (rows.empty()) rows = every;
    const std::size_t d = model.n_covariates();
    check_dims(d, data.x.cols, "outcome_loss_gradient");
    LossGradient out;
    out.gradient.assign(d + 2, 0.0);
    for (const std::size_t i : rows) {
        const auto x = data.x.row(i);
        const double s = (dot(std::span<const double>(model.weights).first(d), x) +
                          model.weights[d] * data.t[i] + model.bias) /
                         model.stretch;
        out.loss += softplus(s) - data.y[i] * s;
        const double g = (sigmoid(s) - data.y[i]) / model.stretch;
        for (std::size_t k = 0; k < d; ++k) out.gradient[k] += g * x[k];
        out.gradient[d] += g * data.t[i];
        out.gradient[d + 1] += g;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    out.loss *= inv;
    for (double& g : out.gradient) g *= inv;
    return out;
}

LossGradient propensity_loss_gradient(const PropensityModel& model, const TrainingSet& data,
                                      std::span<const std::size_t> rows) {
    const std::vector<std::size_t> every = rows.empty() ? all_rows(data.size()) : std::vector<std::size_t>{};
    if (rows.empty()) rows = every;
    const std::size_t d = model.n_covariates();
    check_dims(d, data.x.cols, "propensity_loss_gradient");
    LossGradient out;
    out.gradient.assign(2 * (d + 1), 0.0);
    for (const std::size_t i : rows) {
        const auto x = data.x.row(i);
        const double t = clamp_treatment(data.t[i]);
        const Gate a = gate(model.alpha(x), model.cap, model.stretch);
        const Gate b = gate(model.beta(x), model.cap, model.stretch);
        const double log_t = std::log(t);
        const double log_1mt = std::log1p(-t);
        out.loss += -(a.value - 1.0) * log_t - (b.value - 1.0) * log_1mt +
                    specfun::log_beta(a.value, b.value);
        const double psi_sum = specfun::digamma(a.value + b.value);
        const double ga = (-log_t + specfun::digamma(a.value) - psi_sum) * a.slope;
        const double gb = (-log_1mt + specfun::digamma(b.value) - psi_sum) * b.slope;
        for (std::size_t k = 0; k < d; ++k) {
            out.gradient[k] += ga * x[k];
            out.gradient[d + 1 + k] += gb * x[k];
        }
        out.gradient[d] += ga;
        out.gradient[2 * d + 1] += gb;
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    out.loss *= inv;
    for (double& g : out.gradient) g *= inv;
    return out;
}

OutcomeFit fit_outcome(const TrainingSet& data, const TrainConfig& config) {
    data.validate();
    config.validate();
    OutcomeFit fit{OutcomeModel::zeros(data.x.cols, config.stretch), {}};
    fit.report = train(fit.model, data, config, [&](const OutcomeModel& m, std::span<const std::size_t> rows) {
        return outcome_loss_gradient(m, data, rows);
    });
    const bool all_same = std::all_of(data.y.begin(), data.y.end(), [&](double v) { return v == data.y.front(); });
    fit.report.degenerate_outcome = all_same;
    return fit;
}

PropensityFit fit_propensity(const TrainingSet& data, const TrainConfig& config) {
    data.validate();
    config.validate();
    for (const double t : data.t) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw DomainError("fit_propensity: treatments must lie in [0, 1]");
        }
    }
    PropensityFit fit{PropensityModel::zeros(data.x.cols, config.cap, config.stretch), {}};
    fit.report = train(fit.model, data, config, [&](const PropensityModel& m, std::span<const std::size_t> rows) {
        return propensity_loss_gradient(m, data, rows);
    });
    fit.report.clamped_treatments = static_cast<std::size_t>(std::count_if(
        data.t.begin(), data.t.end(), [](double t) { return clamp_treatment(t) != t; }));
    return fit;
}

nlohmann::json to_json(const OutcomeModel& model) {
    return {{"format_version", kModelFormatVersion},
            {"kind", "outcome"},
            {"weights", model.weights},
            {"bias", model.bias},
            {"stretch", model.stretch}};
}

nlohmann::json to_json(const PropensityModel& model) {
    return {{"format_version", kModelFormatVersion},
            {"kind", "propensity"},
            {"alpha_weights", model.alpha.weights},
            {"alpha_bias", model.alpha.bias},
            {"beta_weights", model.beta.weights},
            {"beta_bias", model.beta.bias},
            {"cap", model.cap},
            {"stretch", model.stretch}};
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"batches", c.batches}, {"epochs", c.epochs},
            {"beta1", c.beta1},                 {"beta2", c.beta2},     {"epsilon", c.epsilon},
            {"stretch", c.stretch},             {"cap", c.cap},         {"seed", c.seed}};
}

namespace {

void check_header(const nlohmann::json& doc, const char* kind) {
    if (doc.value("format_version", 0) != kModelFormatVersion || doc.value("kind", "") != kind) {
        throw UsageError(std::string("model JSON is not a version-") +
                         std::to_string(kModelFormatVersion) + " " + kind + " document");
    }
}

}  // namespace

OutcomeModel outcome_from_json(const nlohmann::json& doc) {
    check_header(doc, "outcome");
    OutcomeModel m;
    m.weights = doc.at("weights").get<std::vector<double>>();
    m.bias = doc.at("bias").get<double>();
    m.stretch = doc.at("stretch").get<double>();
    if (m.weights.empty() || !(m.stretch > 0.0)) throw UsageError("outcome model JSON is malformed");
    return m;
}

PropensityModel propensity_from_json(const nlohmann::json& doc) {
    check_header(doc, "propensity");
    PropensityModel m;
    m.alpha.weights = doc.at("alpha_weights").get<std::vector<double>>();
    m.alpha.bias = doc.at("alpha_bias").get<double>();
    m.beta.weights = doc.at("beta_weights").get<std::vector<double>>();
    m.beta.bias = doc.at("beta_bias").get<double>();
    m.cap = doc.at("cap").get<double>();
    m.stretch = doc.at("stretch").get<double>();
    if (m.alpha.weights.size() != m.beta.weights.size() || !(m.cap > 0.0) || !(m.stretch > 0.0)) {
        throw UsageError("propensity model JSON is malformed");
    }
    return m;
}

Predictors make_predictors(const OutcomeModel& outcome, const PropensityModel& propensity) {
    Predictors p;
    p.outcome.success_probability = [outcome](std::span<const double> x, double t) {
        return predict_outcome(outcome, x, t);
    };
    p.propensity = [propensity](std::span<const double> x) -> PropensityParams {
        return predict_propensity(propensity, x);
    };
    return p;
}

}  // namespace dosebound
