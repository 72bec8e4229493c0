#pragma once

// Divisor bounds for the infinitesimal marginal sensitivity model (δMSM) and
// the three baseline sensitivity models.
//
// The potential-outcome density is recovered as p(y|t,x) / d with the divisor
// d confined to [d_lo, d_hi]. For the δMSM this interval follows from the
// second-order expansion of the counterfactual around τ = t, with all
// expectations taken under the compound density q(τ|t,x) ∝ w_t(τ) p(τ|x).

#include <optional>
#include <variant>

namespace dosebound {

struct BetaDist {
    double alpha;
    double beta;
};

/// Gamma with shape/rate parametrization.
struct GammaDist {
    double shape;
    double rate;
};

struct GaussianDist {
    double mean;
    double sd;
};

using Distribution = std::variant<BetaDist, GammaDist, GaussianDist>;

/// Nominal propensity p(τ|x).
using PropensityParams = Distribution;

enum class Family { Beta, Gamma, Gaussian };

Family family_of(const Distribution& dist);
const char* family_name(Family family);

/// Throws DomainError unless every shape/scale parameter is positive and finite.
void validate(const Distribution& dist);

bool in_support(Family family, double tau);
double pdf(const Distribution& dist, double tau);
double log_pdf(const Distribution& dist, double tau);
double cdf(const Distribution& dist, double tau);
double mean(const Distribution& dist);
double variance(const Distribution& dist);

/// Trust weight w_t(τ) with w_t(t) = 1 and its mode at τ = t.
///
///  Beta:     c_t τ^(a−1) (1−τ)^(b−1),  a = rt+1, b = r(1−t)+1
///  Gamma:    c_t τ^(a−1) e^(−bτ),      (a−1)/b = t, a/b² = r
///  Gaussian: exp(−(τ−t)² / 2σ²),       σ = 1/r
struct TrustScheme {
    Family kind;
    double t;
    double precision;
    double a;      // Beta/Gamma shape a_t; Gaussian mean
    double b;      // Beta shape b_t; Gamma rate b_t; Gaussian sd
    double log_c;  // ln c_t (zero for Gaussian)

    double c() const;
    double weight(double tau) const;
};

TrustScheme trust_params(Family kind, double t, double precision);

/// Compound density q(τ|t,x), stored as an ordinary distribution. For Beta
/// the stored parameters are (𝛂+1, 𝛃+1) so bold_alpha()/bold_beta() recover
/// the shifted exponents.
struct CompoundDensity {
    Distribution q;

    double bold_alpha() const;
    double bold_beta() const;
};

CompoundDensity compound(const PropensityParams& propensity, const TrustScheme& trust);

struct LambdaBounds {
    double lo;  // E_q[Γ^(−|τ|)]
    double hi;  // E_q[Γ^(+|τ|)]
};

/// Closed-form bounds on E_q[Λ]. The Gaussian case is the split-normal
/// moment-generating function; it carries a factor ½ relative to the form
/// usually tabulated, which the quadrature oracle confirms.
///
/// Throws PartialIdentificationError for a Gamma compound with ln Γ ≥ rate.
LambdaBounds lambda_expectation_bounds(const CompoundDensity& q, double gamma_factor);

enum class DeltaScheme { Beta, BalancedBeta, Gamma, Gaussian };

const char* scheme_name(DeltaScheme scheme);
Family scheme_family(DeltaScheme scheme);

struct DeltaMSM {
    DeltaScheme scheme = DeltaScheme::BalancedBeta;
    /// Trust precision r; when empty it follows the nominal propensity
    /// precision (Beta: ᾱ+β̄−2, Gamma: ᾱ/β̄², Gaussian: 1/σ̄).
    std::optional<double> precision;
};

/// Continuous MSM, evaluated at τ = t: d = (p(t|x)/Γ, Γ p(t|x)).
struct CMSM {};

/// d = (1/Γ, Γ), as if the propensity were uniform.
struct UniformModel {};

/// Classic MSM on the dichotomized treatment 𝕀[T > threshold].
struct BinaryMSM {
    double threshold = 0.5;
};

using SensitivityModel = std::variant<DeltaMSM, CMSM, UniformModel, BinaryMSM>;

/// A sensitivity model's short name ("deltamsm", "cmsm", "uniform", "binarymsm").
const char* model_name(const SensitivityModel& model);

struct DivisorBounds {
    double lo = 1.0;
    double hi = 1.0;
    /// Set when lo ≤ 0: the potential-outcome density has no upper bound.
    bool upper_undefined = false;

    static DivisorBounds make(double lo, double hi);
};

/// Smallest admissible Beta trust precision used when the heuristic yields r ≤ 0.
inline constexpr double kMinTrustPrecision = 1e-6;

double default_precision(Family family, const PropensityParams& propensity);

/// Divisor bounds for a single (t, x) given the nominal propensity at x.
/// Requires Γ ≥ 1 and t inside the propensity support.
DivisorBounds divisor_bounds(const SensitivityModel& model, const PropensityParams& propensity,
                             double t, double gamma_factor);

/// Individual terms of the δMSM divisor for one anchor, exposed for oracle checks.
struct DeltaTerms {
    LambdaBounds lambda;
    double mean_shift;     // E_q[τ − t]
    double second_moment;  // E_q[(τ − t)²]
    double lo;
    double hi;
};

DeltaTerms delta_msm_terms(const PropensityParams& propensity, const TrustScheme& trust,
                           double gamma_factor);

}  // namespace dosebound
