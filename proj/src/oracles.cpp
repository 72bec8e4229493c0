#include "dosebound/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include "dosebound/errors.hpp"
#include "dosebound/models.hpp"
#include "dosebound/rng.hpp"
#include "dosebound/specfun.hpp"

namespace dosebound::oracles {

namespace {

constexpr std::size_t kMaxReported = 5;

specfun::QuadratureSpec tight_spec() {
    specfun::QuadratureSpec spec;
    spec.abs_tol = 1e-15;
    spec.rel_tol = 1e-11;
    spec.max_subdivisions = 5000;
    return spec;
}

void support(Family family, double& lo, double& hi) {
    const double inf = std::numeric_limits<double>::infinity();
    switch (family) {
        case Family::Beta: lo = 0.0; hi = 1.0; return;
        case Family::Gamma: lo = 0.0; hi = inf; return;
        case Family::Gaussian: lo = -inf; hi = inf; return;
    }
}

void record(OracleReport& report, double error, const std::string& inputs) {
    ++report.cases;
    if (std::isnan(error) || error > report.tolerance) {
        ++report.failures;
        if (report.failed_inputs.size() < kMaxReported) report.failed_inputs.push_back(inputs);
    }
    if (std::isnan(error)) {
        report.max_error = std::numeric_limits<double>::quiet_NaN();
    } else if (!std::isnan(report.max_error)) {
        report.max_error = std::max(report.max_error, error);
    }
}

std::string describe(const PropensityParams& propensity) {
    std::ostringstream out;
    out.precision(17);
    if (const auto* p = std::get_if<BetaDist>(&propensity)) {
        out << "beta(" << p->alpha << ", " << p->beta << ")";
    } else if (const auto* g = std::get_if<GammaDist>(&propensity)) {
        out << "gamma(" << g->shape << ", " << g->rate << ")";
    } else {
        const auto& n = std::get<GaussianDist>(propensity);
        out << "normal(" << n.mean << ", " << n.sd << ")";
    }
    return out.str();
}

double rel(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

LambdaBounds quadrature_lambda(const PropensityParams& propensity, const TrustScheme& trust,
                               double gamma_factor, bool mirrored) {
    double lo = 0.0;
    double hi = 0.0;
    support(trust.kind, lo, hi);
    const auto spec = tight_spec();
    const double s = std::log(gamma_factor);
    auto log_base = [&](double tau) {
        const double w = trust.weight(tau);
        if (!(w > 0.0)) return -std::numeric_limits<double>::infinity();
        return std::log(w) + log_pdf(propensity, tau);
    };

    // Scan for the peak so the integrand is O(1) there and the peak is a
    // breakpoint the bisection cannot step over.
    const double scan_lo = std::isfinite(lo) ? lo : trust.t - 50.0;
    const double scan_hi = std::isfinite(hi) ? hi : std::max(trust.t, 0.0) + 200.0;
    constexpr int kScan = 4000;
    double peak = trust.t;
    double peak_log = log_base(peak);
    for (int i = 1; i < kScan; ++i) {
        const double tau = scan_lo + (scan_hi - scan_lo) * i / kScan;
        const double l = log_base(tau);
        if (l > peak_log) {
            peak_log = l;
            peak = tau;
        }
    }
    std::vector<double> cuts = {lo, peak, hi};
    if (lo < 0.0 && hi > 0.0) cuts.push_back(0.0);
    if (mirrored) cuts.push_back(1.0);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.erase(std::remove_if(cuts.begin(), cuts.end(), [&](double c) { return c < lo || c > hi; }),
               cuts.end());

    auto exponent = [&](double tau) { return std::abs(mirrored ? 1.0 - tau : tau); };
    auto piecewise = [&](double sign) {
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            total += specfun::integrate(
                [&](double tau) {
                    const double l = log_base(tau);
                    if (l == -std::numeric_limits<double>::infinity()) return 0.0;
                    return std::exp(l - peak_log + sign * s * exponent(tau));
                },
                cuts[i], cuts[i + 1], spec);
        }
        return total;
    };
    const double z = piecewise(0.0);
    return {piecewise(-1.0) / z, piecewise(1.0) / z};
}

LambdaBounds scheme_lambda(DeltaScheme scheme, const PropensityParams& propensity, double t,
                           double precision, double gamma_factor, bool by_quadrature) {
    const Family family = scheme_family(scheme);
    const TrustScheme trust = trust_params(family, t, precision);
    auto lambda = [&](const PropensityParams& p, const TrustScheme& w, bool mirrored) {
        if (by_quadrature) return quadrature_lambda(propensity, trust, gamma_factor, mirrored);
        return lambda_expectation_bounds(compound(p, w), gamma_factor);
    };
    if (scheme != DeltaScheme::BalancedBeta) return lambda(propensity, trust, false);
    const auto& beta = std::get<BetaDist>(propensity);
    const LambdaBounds zero = lambda(propensity, trust, false);
    const LambdaBounds one =
        lambda(BetaDist{beta.beta, beta.alpha}, trust_params(Family::Beta, 1.0 - t, precision), true);
    return {t * zero.lo + (1.0 - t) * one.lo, t * zero.hi + (1.0 - t) * one.hi};
}

OracleReport check_lambda_bounds(DeltaScheme scheme, std::size_t samples, std::uint64_t seed,
                                 std::span<const double> gammas) {
    OracleReport report;
    report.suite = std::string("table1/") + scheme_name(scheme);
    report.tolerance = kLambdaTolerance;
    std::mt19937_64 rng = make_stream(seed, report.suite);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) {
        return std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * unit(rng));
    };

    for (std::size_t i = 0; i < samples; ++i) {
        PropensityParams propensity;
        double t = 0.0;
        double r = 0.0;
        switch (scheme_family(scheme)) {
            case Family::Beta:
                propensity = BetaDist{log_uniform(0.5, 50.0), log_uniform(0.5, 50.0)};
                t = 0.01 + 0.98 * unit(rng);
                r = log_uniform(0.1, 100.0);
                break;
            case Family::Gamma:
                propensity = GammaDist{log_uniform(0.5, 20.0), log_uniform(1.0, 10.0)};
                t = 5.0 * unit(rng);
                r = log_uniform(0.1, 50.0);
                break;
            case Family::Gaussian:
                propensity = GaussianDist{-2.0 + 4.0 * unit(rng), log_uniform(0.2, 3.0)};
                t = -3.0 + 6.0 * unit(rng);
                r = log_uniform(0.2, 10.0);
                break;
        }
        for (const double g : gammas) {
            std::ostringstream inputs;
            inputs.precision(17);
            inputs << describe(propensity);
            inputs << " t=" << t << " r=" << r << " gamma=" << g;
            double error = std::numeric_limits<double>::quiet_NaN();
            try {
                const LambdaBounds closed = scheme_lambda(scheme, propensity, t, r, g, false);
                const LambdaBounds numeric = scheme_lambda(scheme, propensity, t, r, g, true);
                error = std::max(rel(closed.lo, numeric.lo), rel(closed.hi, numeric.hi));
                inputs << " closed=(" << closed.lo << ", " << closed.hi << ") quadrature=("
                       << numeric.lo << ", " << numeric.hi << ")";
            } catch (const std::exception& e) {
                inputs << " error: " << e.what();
            }
            record(report, error, inputs.str());
        }
    }
    return report;
}

double brute_force_extremum(std::span<const WeightedDraw> draws, Direction direction) {
    const std::size_t n = draws.size();
    if (n == 0 || n > 24) throw UsageError("brute_force_extremum: 1 to 24 draws are supported");
    const bool maximize = direction == Direction::Max;
    double best = maximize ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
    bool found = false;
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double total = 0.0;
        double weighted = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = (mask >> i) & 1U ? draws[i].w_hi : draws[i].w_lo;
            total += w;
            weighted += w * draws[i].f;
        }
        if (!(total > 0.0)) continue;
        const double value = weighted / total;
        best = maximize ? std::max(best, value) : std::min(best, value);
        found = true;
    }
    if (!found) throw DegenerateError("brute_force_extremum: every vertex has zero total weight");
    return best;
}

OracleReport check_extremize(std::size_t instances, std::size_t max_n, std::uint64_t seed) {
    if (max_n == 0 || max_n > 24) throw UsageError("check_extremize: n must lie in [1, 24]");
    OracleReport report;
    report.suite = "alg1";
    report.tolerance = kExtremizeTolerance;
    std::mt19937_64 rng = make_stream(seed, report.suite);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> size(1, max_n);

    for (std::size_t c = 0; c < instances; ++c) {
        const std::size_t n = size(rng);
        const bool ties = unit(rng) < 0.25;
        const bool zero_floor = unit(rng) < 0.25;
        std::vector<WeightedDraw> draws(n);
        for (std::size_t i = 0; i < n; ++i) {
            double f = -1.0 + 2.0 * unit(rng);
            if (ties) f = std::round(4.0 * f) / 4.0;
            const double lo = zero_floor && unit(rng) < 0.5 ? 0.0 : unit(rng);
            const double hi = lo + 3.0 * unit(rng) + 1e-3;
            draws[i] = {f, lo, hi, i, 0};
        }
        for (const Direction dir : {Direction::Max, Direction::Min}) {
            const double greedy = extremize(draws, dir);
            const double brute = brute_force_extremum(draws, dir);
            std::ostringstream inputs;
            inputs.precision(17);
            inputs << "case " << c << " n=" << n << (dir == Direction::Max ? " max" : " min")
                   << " greedy=" << greedy << " brute=" << brute;
            record(report, std::abs(greedy - brute), inputs.str());
        }
    }
    return report;
}

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step) {
    std::vector<double> probe(x.begin(), x.end());
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double up = f(probe);
        probe[i] = x[i] - step;
        const double down = f(probe);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw UsageError("relative_error: length mismatch");
    double diff = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

namespace {

constexpr std::size_t kGradientRows = 60;
constexpr std::size_t kGradientCovariates = 4;

TrainingSet random_training_set(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TrainingSet data;
    data.x = Matrix(kGradientRows, kGradientCovariates);
    for (double& v : data.x.data) v = unit(rng);
    data.t.resize(kGradientRows);
    data.y.resize(kGradientRows);
    for (std::size_t i = 0; i < kGradientRows; ++i) {
        data.t[i] = 0.01 + 0.98 * unit(rng);
        data.y[i] = unit(rng) < 0.5 ? 0.0 : 1.0;
    }
    return data;
}

template <class Model, class LossFn>
OracleReport check_gradient(const char* suite, std::size_t points, std::uint64_t seed,
                            double param_scale, LossFn loss) {
    OracleReport report;
    report.suite = suite;
    report.tolerance = kGradientTolerance;
    std::mt19937_64 rng = make_stream(seed, suite);
    std::normal_distribution<double> normal(0.0, param_scale);
    for (std::size_t p = 0; p < points; ++p) {
        const TrainingSet data = random_training_set(rng);
        Model model = Model::zeros(kGradientCovariates);
        std::vector<double> params = model.parameters();
        for (double& v : params) v = normal(rng);
        model.set_parameters(params);
        const LossGradient analytic = loss(model, data);
        const auto numeric = central_difference(
            [&](std::span<const double> x) {
                Model probe = model;
                probe.set_parameters(x);
                return loss(probe, data).loss;
            },
            params);
        std::ostringstream inputs;
        inputs.precision(17);
        inputs << "point " << p << " loss=" << analytic.loss;
        record(report, relative_error(analytic.gradient, numeric), inputs.str());
    }
    return report;
}

}  // namespace

OracleReport check_outcome_gradient(std::size_t points, std::uint64_t seed) {
    return check_gradient<OutcomeModel>(
        "gradients/outcome", points, seed, 100.0,
        [](const OutcomeModel& m, const TrainingSet& d) { return outcome_loss_gradient(m, d); });
}

OracleReport check_propensity_gradient(std::size_t points, std::uint64_t seed) {
    return check_gradient<PropensityModel>(
        "gradients/propensity", points, seed, 100.0,
        [](const PropensityModel& m, const TrainingSet& d) { return propensity_loss_gradient(m, d); });
}

}  // namespace dosebound::oracles
