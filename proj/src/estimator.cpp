#include "dosebound/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dosebound/errors.hpp"
#include "dosebound/parallel.hpp"

namespace dosebound {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double maximize_sorted(std::span<const WeightedDraw> draws, std::span<const std::size_t> order,
                       double sign) {
    double total_weight = 0.0;
    double weighted_sum = 0.0;
    for (const std::size_t i : order) {
        total_weight += draws[i].w_hi;
        weighted_sum += draws[i].w_hi * sign * draws[i].f;
    }
    if (!(total_weight > 0.0)) {
        throw DegenerateError("extremize: every upper weight is zero");
    }
    // Atoms at the largest f never have a negative indicator; stopping there
    // keeps rounding from lowering every weight.
    const double f_max = sign * draws[order.back()].f;
    for (const std::size_t j : order) {
        const double f = sign * draws[j].f;
        if (f >= f_max) break;
        const double indicator = f * total_weight - weighted_sum;
        if (!(indicator < 0.0)) break;
        const double delta = draws[j].w_lo - draws[j].w_hi;
        total_weight += delta;
        weighted_sum += delta * f;
    }
    if (!(total_weight > 0.0)) {
        throw DegenerateError("extremize: total weight collapsed to zero");
    }
    return sign * weighted_sum / total_weight;
}

}  // namespace

double extremize(std::span<const WeightedDraw> draws, Direction direction) {
    if (draws.empty()) {
        throw UsageError("extremize: at least one draw is required");
    }
    for (const auto& d : draws) {
        if (!std::isfinite(d.f) || !std::isfinite(d.w_lo) || !std::isfinite(d.w_hi) ||
            d.w_lo < 0.0 || d.w_hi < d.w_lo) {
            throw UsageError("extremize: weights must satisfy 0 <= w_lo <= w_hi < inf and f finite");
        }
    }
    const double sign = direction == Direction::Max ? 1.0 : -1.0;
    std::vector<std::size_t> order(draws.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double fa = sign * draws[a].f;
        const double fb = sign * draws[b].f;
        if (fa != fb) return fa < fb;
        if (draws[a].instance != draws[b].instance) return draws[a].instance < draws[b].instance;
        return draws[a].draw < draws[b].draw;
    });
    return maximize_sorted(draws, order, sign);
}

DrawSet outcome_draws(const OutcomeLaw& law, double t, const Matrix& instances,
                      std::span<const DivisorBounds> bounds, const Proposal& proposal,
                      const Statistic& statistic) {
    if (bounds.size() != instances.rows) {
        throw UsageError("outcome_draws: one DivisorBounds per instance is required");
    }
    auto f_of = [&](double y) { return statistic ? statistic(y) : y; };
    DrawSet out;

    if (std::holds_alternative<BernoulliEnumeration>(proposal)) {
        if (!law.success_probability) {
            throw UsageError("outcome_draws: Bernoulli enumeration needs a success probability");
        }
        out.draws.reserve(2 * instances.rows);
        for (std::size_t j = 0; j < instances.rows; ++j) {
            const DivisorBounds& d = bounds[j];
            if (d.upper_undefined) {
                out.excluded.push_back(j);
                continue;
            }
            const double p1 = law.success_probability(instances.row(j), t);
            const double p0 = 1.0 - p1;
            out.draws.push_back({f_of(0.0), p0 / d.hi, p0 / d.lo, 0, j});
            out.draws.push_back({f_of(1.0), p1 / d.hi, p1 / d.lo, 1, j});
        }
        return out;
    }

    const auto& mc = std::get<MonteCarloProposal>(proposal);
    if (!law.density || !mc.sample || !mc.density || mc.m == 0) {
        throw UsageError("outcome_draws: Monte Carlo needs an outcome density and a proposal");
    }
    std::mt19937_64 rng(mc.seed);
    std::vector<double> ys(mc.m);
    std::vector<double> gs(mc.m);
    for (std::size_t i = 0; i < mc.m; ++i) {
        ys[i] = mc.sample(rng);
        gs[i] = mc.density(ys[i]);
        if (!(gs[i] > 0.0)) {
            throw UsageError("outcome_draws: proposal density must be positive at its own draws");
        }
    }
    out.draws.reserve(mc.m * instances.rows);
    for (std::size_t j = 0; j < instances.rows; ++j) {
        const DivisorBounds& d = bounds[j];
        if (d.upper_undefined) {
            out.excluded.push_back(j);
            continue;
        }
        for (std::size_t i = 0; i < mc.m; ++i) {
            const double ratio = law.density(ys[i], instances.row(j), t) / gs[i];
            out.draws.push_back({f_of(ys[i]), ratio / d.hi, ratio / d.lo, i, j});
        }
    }
    return out;
}

namespace {

void check_grid(std::span<const double> t_grid) {
    if (t_grid.empty()) throw UsageError("treatment grid is empty");
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > t_grid[i - 1])) {
            throw UsageError("treatment grid must be strictly increasing");
        }
    }
}

IntervalCurve pooled_interval(Target target, const Predictors& predictors,
                              const SensitivityModel& model, const Matrix& instances,
                              std::span<const double> t_grid, double gamma_factor,
                              const EstimatorOptions& options) {
    check_grid(t_grid);
    if (instances.rows == 0) throw UsageError("at least one instance is required");
    if (!predictors.propensity) throw UsageError("a propensity predictor is required");

    std::vector<PropensityParams> propensities;
    propensities.reserve(instances.rows);
    for (std::size_t j = 0; j < instances.rows; ++j) {
        propensities.push_back(predictors.propensity(instances.row(j)));
    }

    IntervalCurve curve;
    curve.target = target;
    curve.t_grid.assign(t_grid.begin(), t_grid.end());
    curve.lo.assign(t_grid.size(), kNaN);
    curve.hi.assign(t_grid.size(), kNaN);
    std::vector<char> undefined(t_grid.size(), 0);

    parallel_for(t_grid.size(), options.threads, [&](std::size_t k) {
        const double t = t_grid[k];
        std::vector<DivisorBounds> bounds(instances.rows);
        for (std::size_t j = 0; j < instances.rows; ++j) {
            bounds[j] = divisor_bounds(model, propensities[j], t, gamma_factor);
        }
        const DrawSet set = outcome_draws(predictors.outcome, t, instances, bounds,
                                          options.proposal, options.statistic);
        const bool any_weight = std::any_of(set.draws.begin(), set.draws.end(),
                                            [](const WeightedDraw& d) { return d.w_hi > 0.0; });
        undefined[k] = set.excluded.empty() && any_weight ? 0 : 1;
        if (any_weight) {
            curve.lo[k] = extremize(set.draws, Direction::Min);
            curve.hi[k] = extremize(set.draws, Direction::Max);
        }
    });
    curve.undefined_mask.assign(undefined.begin(), undefined.end());
    return curve;
}

}  // namespace

IntervalCurve capo_interval(const Predictors& predictors, const SensitivityModel& model,
                            std::span<const double> x, std::span<const double> t_grid,
                            double gamma_factor, const EstimatorOptions& options) {
    Matrix single(1, x.size());
    std::copy(x.begin(), x.end(), single.data.begin());
    return pooled_interval(Target::Capo, predictors, model, single, t_grid, gamma_factor, options);
}

IntervalCurve apo_interval(const Predictors& predictors, const SensitivityModel& model,
                           const Matrix& instances, std::span<const double> t_grid,
                           double gamma_factor, const EstimatorOptions& options) {
    return pooled_interval(Target::Apo, predictors, model, instances, t_grid, gamma_factor, options);
}

CacdCurve cacd_interval(const IntervalCurve& capo_curve, double h) {
    const auto& grid = capo_curve.t_grid;
    const std::size_t n = grid.size();
    if (n < 2) throw UsageError("cacd_interval: at least two grid points are required");
    if (!(h > 0.0)) throw UsageError("cacd_interval: h must be positive");
    const double spacing = (grid.back() - grid.front()) / static_cast<double>(n - 1);
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs((grid[i] - grid[i - 1]) - spacing) > 1e-9 * std::max(1.0, std::abs(spacing))) {
            throw UsageError("cacd_interval: grid must be evenly spaced");
        }
    }
    const double steps = h / spacing;
    const auto k = static_cast<std::size_t>(std::llround(steps));
    if (k == 0 || std::abs(steps - static_cast<double>(k)) > 1e-6) {
        throw UsageError("cacd_interval: h must be an integer multiple of the grid spacing");
    }
    if (k >= n) throw UsageError("cacd_interval: h exceeds the grid span");

    CacdCurve out;
    out.t_grid = grid;
    out.lo.assign(n, kNaN);
    out.hi.assign(n, kNaN);
    out.undefined_mask.assign(n, false);
    out.one_sided.assign(n, false);
    const auto& lo = capo_curve.lo;
    const auto& hi = capo_curve.hi;
    const auto& mask = capo_curve.undefined_mask;
    auto flagged = [&](std::size_t i) { return !mask.empty() && mask[i]; };

    for (std::size_t i = 0; i < n; ++i) {
        std::size_t left = i;
        std::size_t right = i;
        double width = 2.0 * h;
        if (i >= k && i + k < n) {
            left = i - k;
            right = i + k;
        } else if (i + k < n) {
            right = i + k;
            width = h;
            out.one_sided[i] = true;
        } else {
            left = i - k;
            width = h;
            out.one_sided[i] = true;
        }
        out.lo[i] = (lo[right] - hi[left]) / width;
        out.hi[i] = (hi[right] - lo[left]) / width;
        out.undefined_mask[i] = flagged(left) || flagged(right);
    }
    return out;
}

}  // namespace dosebound
