#pragma once

// Special functions and adaptive quadrature shared by every other module.
//
// The closed-form expectations in sensitivity.cpp are all checked against
// integrate(); keep this file free of anything those closed forms use
// internally besides log_gamma and erf.

#include <cstddef>
#include <functional>

namespace dosebound::specfun {

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

struct QuadratureSpec {
    double abs_tol = 1e-10;
    double rel_tol = 1e-9;
    std::size_t max_subdivisions = 2000;

    void validate() const;
};

struct QuadratureResult {
    double value = 0.0;
    double abs_error = 0.0;
    std::size_t subdivisions = 0;
    bool converged = false;
};

/// ln Γ(x) for finite x > 0.
double log_gamma(double x);

/// ψ(x) = d/dx ln Γ(x) for x > 0.
double digamma(double x);

double erf(double x);
double erfc(double x);

/// Standard normal CDF.
double normal_cdf(double x);

/// Confluent hypergeometric ₁F₁(a; b; z) by Taylor series. For z < 0 the
/// Kummer transformation e^z ₁F₁(b−a; b; −z) is used so that all terms keep
/// one sign when b > a > 0.
double hyp1f1(double a, double b, double z);

/// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double a, double b, double x);

/// Regularized lower incomplete gamma P(a, x).
double reg_lower_gamma(double a, double x);

/// ln B(a, b).
double log_beta(double a, double b);

/// Adaptive 7/15-point Gauss–Kronrod quadrature with bisection of the worst
/// interval. Infinite endpoints are allowed: [lo, ∞) is mapped through
/// τ = lo + u/(1−u), (−∞, hi] through τ = hi − u/(1−u), and (−∞, ∞) is split
/// at zero. Never throws on tolerance failure; check `converged`.
QuadratureResult integrate_report(const std::function<double(double)>& f, double lo, double hi,
                                  const QuadratureSpec& spec = {});

/// As integrate_report, but throws NumericError carrying the best estimate if
/// the tolerance is not met.
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 const QuadratureSpec& spec = {});

}  // namespace dosebound::specfun
