#pragma once

// Ignorance intervals on CAPO, APO and CACD.
//
// Each grid point pools importance-sampling atoms (f(y_i), [w_lo, w_hi]) over
// the requested instances and extremizes the self-normalized weighted mean
// over the weight box.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "dosebound/matrix.hpp"
#include "dosebound/sensitivity.hpp"

namespace dosebound {

struct WeightedDraw {
    double f;
    double w_lo;
    double w_hi;
    std::size_t draw = 0;      // index i of the outcome atom
    std::size_t instance = 0;  // index j of the covariate instance
};

enum class Direction { Max, Min };

/// Exact extremum of Σ wᵢfᵢ / Σ wᵢ over the box Πᵢ [w_loᵢ, w_hiᵢ].
///
/// Draws are sorted by f ascending, ties by (instance, draw), and the greedy
/// sweep starts from the upper weights, lowering each in turn while the
/// derivative indicator Σᵢ wᵢ(f_j − fᵢ) is negative. The minimum runs the same
/// sweep on −f.
double extremize(std::span<const WeightedDraw> draws, Direction direction);

/// Conditional outcome law p(y|t,x). Binary outcomes set `success_probability`;
/// continuous outcomes set `density`.
struct OutcomeLaw {
    std::function<double(std::span<const double> x, double t)> success_probability;
    std::function<double(double y, std::span<const double> x, double t)> density;
};

/// Exact enumeration of the outcome support {0, 1} under counting measure.
struct BernoulliEnumeration {};

/// Monte Carlo proposal g(y) with m draws shared by every instance.
struct MonteCarloProposal {
    std::function<double(std::mt19937_64&)> sample;
    std::function<double(double)> density;
    std::size_t m = 1000;
    std::uint64_t seed = 0;
};

using Proposal = std::variant<BernoulliEnumeration, MonteCarloProposal>;

struct DrawSet {
    std::vector<WeightedDraw> draws;
    /// Instances dropped because their lower divisor bound is not positive.
    std::vector<std::size_t> excluded;
};

using Statistic = std::function<double(double)>;

/// Builds the atoms for one treatment value over a set of instances. Weights
/// follow w_lo = p(y|t,x)/(d_hi g(y)) and w_hi = p(y|t,x)/(d_lo g(y)).
DrawSet outcome_draws(const OutcomeLaw& law, double t, const Matrix& instances,
                      std::span<const DivisorBounds> bounds, const Proposal& proposal,
                      const Statistic& statistic = {});

/// Fitted outcome and propensity predictors.
struct Predictors {
    OutcomeLaw outcome;
    std::function<PropensityParams(std::span<const double> x)> propensity;
};

enum class Target { Capo, Apo };

struct IntervalCurve {
    Target target = Target::Apo;
    std::vector<double> t_grid;
    std::vector<double> lo;
    std::vector<double> hi;
    /// Grid points where at least one instance had d_lo ≤ 0, or where no atom
    /// carries positive weight. For the APO the stored bounds cover the
    /// remaining instances only; NaN if none remain.
    std::vector<bool> undefined_mask;

    std::size_t size() const { return t_grid.size(); }
};

struct EstimatorOptions {
    Proposal proposal = BernoulliEnumeration{};
    Statistic statistic;
    std::size_t threads = 1;
};

IntervalCurve capo_interval(const Predictors& predictors, const SensitivityModel& model,
                            std::span<const double> x, std::span<const double> t_grid,
                            double gamma_factor, const EstimatorOptions& options = {});

/// Draws are pooled over all instances before a single extremization per
/// grid point.
IntervalCurve apo_interval(const Predictors& predictors, const SensitivityModel& model,
                           const Matrix& instances, std::span<const double> t_grid,
                           double gamma_factor, const EstimatorOptions& options = {});

/// Conservative finite-difference interval on ∂E[Y_t|X]/∂t.
struct CacdCurve {
    std::vector<double> t_grid;
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<bool> undefined_mask;
    /// Endpoints where only a one-sided difference was available.
    std::vector<bool> one_sided;

    /// The derivative interval excludes zero at grid point i.
    bool nonzero(std::size_t i) const { return lo[i] > 0.0 || hi[i] < 0.0; }
};

/// `h` must be a positive integer multiple of the (uniform) grid spacing.
/// Interior points use lo = (lo(t+h) − hi(t−h)) / 2h and
/// hi = (hi(t+h) − lo(t−h)) / 2h.
CacdCurve cacd_interval(const IntervalCurve& capo_curve, double h);

}  // namespace dosebound
