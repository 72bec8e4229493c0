#pragma once

// Independent correctness oracles: closed-form Λ expectations against
// adaptive quadrature, the greedy extremizer against exhaustive vertex
// search, and analytic training gradients against central finite differences.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dosebound/estimator.hpp"
#include "dosebound/sensitivity.hpp"

namespace dosebound::oracles {

struct OracleReport {
    std::string suite;
    std::size_t cases = 0;
    std::size_t failures = 0;
    double max_error = 0.0;
    double tolerance = 0.0;
    /// Inputs of the first few failing cases.
    std::vector<std::string> failed_inputs;

    bool passed() const { return cases > 0 && failures == 0; }
};

inline constexpr double kLambdaTolerance = 1e-7;
inline constexpr double kExtremizeTolerance = 1e-12;
inline constexpr double kGradientTolerance = 1e-4;
inline constexpr double kGradientStep = 1e-5;

/// E_q[Γ^{−|τ|}] and E_q[Γ^{+|τ|}] by quadrature of w_t(τ)p(τ)Γ^{±|τ|}
/// normalized by ∫ w_t(τ)p(τ) dτ. With `mirrored` the exponent is |1 − τ|.
LambdaBounds quadrature_lambda(const PropensityParams& propensity, const TrustScheme& trust,
                               double gamma_factor, bool mirrored = false);

/// Λ-expectation bounds as the divisor sees them. Balanced Beta mixes the
/// 0-anchored and mirrored expectations with weights t and 1 − t.
LambdaBounds scheme_lambda(DeltaScheme scheme, const PropensityParams& propensity, double t,
                           double precision, double gamma_factor, bool by_quadrature);

OracleReport check_lambda_bounds(DeltaScheme scheme, std::size_t samples, std::uint64_t seed,
                                 std::span<const double> gammas);

/// Exhaustive search over all 2ⁿ weight-box vertices (n ≤ 24).
double brute_force_extremum(std::span<const WeightedDraw> draws, Direction direction);

OracleReport check_extremize(std::size_t instances, std::size_t max_n, std::uint64_t seed);

std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                       std::span<const double> x, double step = kGradientStep);

/// ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
double relative_error(std::span<const double> a, std::span<const double> b);

OracleReport check_outcome_gradient(std::size_t points, std::uint64_t seed);
OracleReport check_propensity_gradient(std::size_t points, std::uint64_t seed);

}  // namespace dosebound::oracles
