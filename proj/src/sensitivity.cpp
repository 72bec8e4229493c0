#include "dosebound/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <string>

#include "dosebound/errors.hpp"
#include "dosebound/specfun.hpp"

namespace dosebound {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

// x·ln(y) with the 0·ln(0) = 0 convention.
double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

void require_gamma_factor(double gamma_factor) {
    if (!(gamma_factor >= 1.0) || !std::isfinite(gamma_factor)) {
        throw DomainError("violation factor must be finite and >= 1");
    }
}

void require_support(Family family, double t) {
    if (!in_support(family, t)) {
        throw DomainError(std::string("treatment ") + std::to_string(t) +
                          " is outside the support of the " + family_name(family) + " family");
    }
}

}  // namespace

Family family_of(const Distribution& dist) {
    return std::visit(Overloaded{[](const BetaDist&) { return Family::Beta; },
                                 [](const GammaDist&) { return Family::Gamma; },
                                 [](const GaussianDist&) { return Family::Gaussian; }},
                      dist);
}

const char* family_name(Family family) {
    switch (family) {
        case Family::Beta: return "beta";
        case Family::Gamma: return "gamma";
        case Family::Gaussian: return "gaussian";
    }
    return "?";
}

void validate(const Distribution& dist) {
    std::visit(Overloaded{[](const BetaDist& d) {
                              if (!positive_finite(d.alpha) || !positive_finite(d.beta))
                                  throw DomainError("Beta parameters must be positive and finite");
                          },
                          [](const GammaDist& d) {
                              if (!positive_finite(d.shape) || !positive_finite(d.rate))
                                  throw DomainError("Gamma parameters must be positive and finite");
                          },
                          [](const GaussianDist& d) {
                              if (!std::isfinite(d.mean) || !positive_finite(d.sd))
                                  throw DomainError("Gaussian needs finite mean and positive sd");
                          }},
               dist);
}

bool in_support(Family family, double tau) {
    switch (family) {
        case Family::Beta: return tau >= 0.0 && tau <= 1.0;
        case Family::Gamma: return tau >= 0.0 && std::isfinite(tau);
        case Family::Gaussian: return std::isfinite(tau);
    }
    return false;
}

double log_pdf(const Distribution& dist, double tau) {
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    return std::visit(
        Overloaded{
            [&](const BetaDist& d) {
                if (tau < 0.0 || tau > 1.0) return kNegInf;
                return xlogy(d.alpha - 1.0, tau) + xlogy(d.beta - 1.0, 1.0 - tau) -
                       specfun::log_beta(d.alpha, d.beta);
            },
            [&](const GammaDist& d) {
                if (tau < 0.0) return kNegInf;
                return d.shape * std::log(d.rate) + xlogy(d.shape - 1.0, tau) - d.rate * tau -
                       specfun::log_gamma(d.shape);
            },
            [&](const GaussianDist& d) {
                const double z = (tau - d.mean) / d.sd;
                return -0.5 * z * z - std::log(d.sd) - 0.5 * std::log(2.0 * std::numbers::pi);
            }},
        dist);
}

double pdf(const Distribution& dist, double tau) { return std::exp(log_pdf(dist, tau)); }

double cdf(const Distribution& dist, double tau) {
    return std::visit(
        Overloaded{[&](const BetaDist& d) {
                       if (tau <= 0.0) return 0.0;
                       if (tau >= 1.0) return 1.0;
                       return specfun::reg_inc_beta(d.alpha, d.beta, tau);
                   },
                   [&](const GammaDist& d) {
                       if (tau <= 0.0) return 0.0;
                       return specfun::reg_lower_gamma(d.shape, d.rate * tau);
                   },
                   [&](const GaussianDist& d) { return specfun::normal_cdf((tau - d.mean) / d.sd); }},
        dist);
}

double mean(const Distribution& dist) {
    return std::visit(Overloaded{[](const BetaDist& d) { return d.alpha / (d.alpha + d.beta); },
                                 [](const GammaDist& d) { return d.shape / d.rate; },
                                 [](const GaussianDist& d) { return d.mean; }},
                      dist);
}

double variance(const Distribution& dist) {
    return std::visit(Overloaded{[](const BetaDist& d) {
                                     const double s = d.alpha + d.beta;
                                     return d.alpha * d.beta / (s * s * (s + 1.0));
                                 },
                                 [](const GammaDist& d) { return d.shape / (d.rate * d.rate); },
                                 [](const GaussianDist& d) { return d.sd * d.sd; }},
                      dist);
}

double TrustScheme::c() const { return std::exp(log_c); }

double TrustScheme::weight(double tau) const {
    switch (kind) {
        case Family::Beta:
            if (tau < 0.0 || tau > 1.0) return 0.0;
            return std::exp(log_c + xlogy(a - 1.0, tau) + xlogy(b - 1.0, 1.0 - tau));
        case Family::Gamma:
            if (tau < 0.0) return 0.0;
            return std::exp(log_c + xlogy(a - 1.0, tau) - b * tau);
        case Family::Gaussian: {
            const double z = (tau - a) / b;
            return std::exp(-0.5 * z * z);
        }
    }
    return 0.0;
}

TrustScheme trust_params(Family kind, double t, double precision) {
    require_support(kind, t);
    if (!positive_finite(precision)) {
        throw DomainError("trust precision must be positive and finite");
    }
    TrustScheme s{kind, t, precision, 0.0, 0.0, 0.0};
    switch (kind) {
        case Family::Beta:
            s.a = precision * t + 1.0;
            s.b = precision * (1.0 - t) + 1.0;
            s.log_c = -(xlogy(s.a - 1.0, t) + xlogy(s.b - 1.0, 1.0 - t));
            break;
        case Family::Gamma:
            // mode (a−1)/b = t and a/b² = r  ⇒  r b² − t b − 1 = 0
            s.b = (t + std::sqrt(t * t + 4.0 * precision)) / (2.0 * precision);
            s.a = 1.0 + t * s.b;
            s.log_c = -(xlogy(s.a - 1.0, t) - s.b * t);
            break;
        case Family::Gaussian:
            s.a = t;
            s.b = 1.0 / precision;
            s.log_c = 0.0;
            break;
    }
    return s;
}

double CompoundDensity::bold_alpha() const {
    return std::visit(Overloaded{[](const BetaDist& d) { return d.alpha - 1.0; },
                                 [](const GammaDist& d) { return d.shape; },
                                 [](const GaussianDist& d) { return d.mean; }},
                      q);
}

double CompoundDensity::bold_beta() const {
    return std::visit(Overloaded{[](const BetaDist& d) { return d.beta - 1.0; },
                                 [](const GammaDist& d) { return d.rate; },
                                 [](const GaussianDist& d) { return d.sd; }},
                      q);
}

CompoundDensity compound(const PropensityParams& propensity, const TrustScheme& trust) {
    validate(propensity);
    if (family_of(propensity) != trust.kind) {
        throw UsageError(std::string("compound: propensity family ") +
                         family_name(family_of(propensity)) + " does not match trust family " +
                         family_name(trust.kind));
    }
    return std::visit(
        Overloaded{[&](const BetaDist& p) {
                       return CompoundDensity{BetaDist{p.alpha + trust.a - 1.0, p.beta + trust.b - 1.0}};
                   },
                   [&](const GammaDist& p) {
                       return CompoundDensity{GammaDist{p.shape + trust.a - 1.0, p.rate + trust.b}};
                   },
                   [&](const GaussianDist& p) {
                       const double vp = p.sd * p.sd;
                       const double vw = trust.b * trust.b;
                       const double m = (trust.a * vp + p.mean * vw) / (vp + vw);
                       const double v = vp * vw / (vp + vw);
                       return CompoundDensity{GaussianDist{m, std::sqrt(v)}};
                   }},
        propensity);
}

namespace {

// E_q[e^{s|τ|}] for each family.
double abs_mgf(const Distribution& q, double s) {
    if (s == 0.0) return 1.0;
    return std::visit(
        Overloaded{[&](const BetaDist& d) { return specfun::hyp1f1(d.alpha, d.alpha + d.beta, s); },
                   [&](const GammaDist& d) {
                       if (!(s < d.rate)) {
                           throw PartialIdentificationError(
                               "Gamma compound: ln Γ must stay below the rate " +
                               std::to_string(d.rate) + "; the interval is unbounded at this Γ");
                       }
                       return std::exp(-d.shape * std::log1p(-s / d.rate));
                   },
                   [&](const GaussianDist& d) {
                       const double mu = d.mean;
                       const double sigma = d.sd;
                       const double root2s = std::sqrt(2.0) * sigma;
                       const double pos = std::exp(s * mu) * specfun::erfc(-(mu + s * sigma * sigma) / root2s);
                       const double neg = std::exp(-s * mu) * specfun::erfc((mu - s * sigma * sigma) / root2s);
                       return 0.5 * std::exp(0.5 * s * s * sigma * sigma) * (pos + neg);
                   }},
        q);
}

}  // namespace

LambdaBounds lambda_expectation_bounds(const CompoundDensity& q, double gamma_factor) {
    require_gamma_factor(gamma_factor);
    validate(q.q);
    const double log_gamma = std::log(gamma_factor);
    return {abs_mgf(q.q, -log_gamma), abs_mgf(q.q, log_gamma)};
}

const char* scheme_name(DeltaScheme scheme) {
    switch (scheme) {
        case DeltaScheme::Beta: return "beta";
        case DeltaScheme::BalancedBeta: return "balanced-beta";
        case DeltaScheme::Gamma: return "gamma";
        case DeltaScheme::Gaussian: return "gaussian";
    }
    return "?";
}

Family scheme_family(DeltaScheme scheme) {
    switch (scheme) {
        case DeltaScheme::Beta:
        case DeltaScheme::BalancedBeta: return Family::Beta;
        case DeltaScheme::Gamma: return Family::Gamma;
        case DeltaScheme::Gaussian: return Family::Gaussian;
    }
    return Family::Beta;
}

const char* model_name(const SensitivityModel& model) {
    return std::visit(Overloaded{[](const DeltaMSM&) { return "deltamsm"; },
                                 [](const CMSM&) { return "cmsm"; },
                                 [](const UniformModel&) { return "uniform"; },
                                 [](const BinaryMSM&) { return "binarymsm"; }},
                      model);
}

namespace {

constexpr double kBetaEdge = 1e-6;

}  // namespace

DivisorBounds DivisorBounds::make(double lo, double hi) { return {lo, hi, !(lo > 0.0)}; }

double default_precision(Family family, const PropensityParams& propensity) {
    validate(propensity);
    if (family_of(propensity) != family) {
        throw UsageError("default_precision: propensity family does not match the scheme");
    }
    return std::visit(
        Overloaded{[](const BetaDist& p) { return std::max(p.alpha + p.beta - 2.0, kMinTrustPrecision); },
                   [](const GammaDist& p) { return p.shape / (p.rate * p.rate); },
                   [](const GaussianDist& p) { return 1.0 / p.sd; }},
        propensity);
}

DeltaTerms delta_msm_terms(const PropensityParams& propensity, const TrustScheme& trust,
                           double gamma_factor) {
    const CompoundDensity q = compound(propensity, trust);
    const LambdaBounds lambda = lambda_expectation_bounds(q, gamma_factor);
    const double shift = mean(q.q) - trust.t;
    const double second = variance(q.q) + shift * shift;
    const double log_gamma = std::log(gamma_factor);
    const double anchor_growth = std::pow(gamma_factor, std::abs(trust.t));
    const double linear = log_gamma * anchor_growth * std::abs(shift);
    const double quadratic = 0.5 * log_gamma * log_gamma * anchor_growth * second;
    return {lambda, shift, second, lambda.lo - linear, lambda.hi + linear + quadratic};
}

namespace {

DivisorBounds delta_bounds(const DeltaMSM& model, const PropensityParams& propensity, double t,
                           double gamma_factor) {
    const Family family = scheme_family(model.scheme);
    if (family_of(propensity) != family) {
        throw UsageError(std::string("scheme ") + scheme_name(model.scheme) + " needs a " +
                         family_name(family) + " propensity, got " +
                         family_name(family_of(propensity)));
    }
    require_support(family, t);
    const double r = model.precision ? *model.precision : default_precision(family, propensity);

    if (model.scheme != DeltaScheme::BalancedBeta) {
        const DeltaTerms terms = delta_msm_terms(propensity, trust_params(family, t, r), gamma_factor);
        return DivisorBounds::make(terms.lo, terms.hi);
    }

    // Mixture of the 0-anchored divisor (weight t) and its mirror about t ↦ 1−t
    // with (ᾱ, β̄) ↦ (β̄, ᾱ), anchored at 1 (weight 1−t).
    const auto& beta = std::get<BetaDist>(propensity);
    const double flipped_t = 1.0 - t;
    const DeltaTerms zero_anchor =
        delta_msm_terms(propensity, trust_params(Family::Beta, t, r), gamma_factor);
    const DeltaTerms one_anchor = delta_msm_terms(BetaDist{beta.beta, beta.alpha},
                                                  trust_params(Family::Beta, flipped_t, r), gamma_factor);
    const double lo = t * zero_anchor.lo + flipped_t * one_anchor.lo;
    const double hi = t * zero_anchor.hi + flipped_t * one_anchor.hi;
    return DivisorBounds::make(lo, hi);
}

double binary_assignment_probability(const PropensityParams& propensity, double t, double threshold) {
    require_support(family_of(propensity), threshold);
    const bool above = t > threshold;
    return std::visit(Overloaded{[&](const BetaDist& p) {
                                     // Upper tail via the mirrored incomplete beta keeps precision.
                                     return above ? specfun::reg_inc_beta(p.beta, p.alpha, 1.0 - threshold)
                                                  : specfun::reg_inc_beta(p.alpha, p.beta, threshold);
                                 },
                                 [&](const auto& p) {
                                     const double below = cdf(p, threshold);
                                     return above ? 1.0 - below : below;
                                 }},
                      propensity);
}

}  // namespace

DivisorBounds divisor_bounds(const SensitivityModel& model, const PropensityParams& propensity,
                             double t, double gamma_factor) {
    require_gamma_factor(gamma_factor);
    validate(propensity);
    require_support(family_of(propensity), t);

    return std::visit(
        Overloaded{[&](const DeltaMSM& m) { return delta_bounds(m, propensity, t, gamma_factor); },
                   [&](const CMSM&) {
                       // Beta densities are read just inside the unit interval, where
                       // they stay finite and positive.
                       double at = t;
                       if (std::holds_alternative<BetaDist>(propensity)) {
                           at = std::clamp(t, kBetaEdge, 1.0 - kBetaEdge);
                       }
                       const double density = pdf(propensity, at);
                       return DivisorBounds::make(density / gamma_factor, density * gamma_factor);
                   },
                   [&](const UniformModel&) {
                       return DivisorBounds::make(1.0 / gamma_factor, gamma_factor);
                   },
                   [&](const BinaryMSM& m) {
                       // Complete propensity e* ranges over the MSM odds interval around e;
                       // the divisor is e*/e.
                       const double e = binary_assignment_probability(propensity, t, m.threshold);
                       const double g = gamma_factor;
                       return DivisorBounds::make(1.0 / (e + g * (1.0 - e)), g / (g * e + (1.0 - e)));
                   }},
        model);
}

}  // namespace dosebound
