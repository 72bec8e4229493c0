#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "dosebound/errors.hpp"
#include "dosebound/specfun.hpp"

using namespace dosebound;
using namespace dosebound::specfun;

namespace {

double beta_pdf(double x, double a, double b) {
    return std::exp((a - 1) * std::log(x) + (b - 1) * std::log1p(-x) - log_beta(a, b));
}

}  // namespace

TEST_CASE("log_gamma at known points") {
    CHECK(log_gamma(1.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(log_gamma(5.0) - std::log(24.0)) < 1e-13);
    CHECK(std::abs(log_gamma(0.5) - 0.5 * std::log(std::numbers::pi)) < 1e-13);
    CHECK(std::abs(log_gamma(1e6) - (1e6 * std::log(1e6) - 1e6 - 0.5 * std::log(1e6) +
                                      0.5 * std::log(2 * std::numbers::pi) + 1.0 / 12e6)) /
              log_gamma(1e6) < 1e-12);
}

TEST_CASE("log_gamma rejects non-positive and non-finite input") {
    CHECK_THROWS_AS(log_gamma(0.0), DomainError);
    CHECK_THROWS_AS(log_gamma(-1.5), DomainError);
    CHECK_THROWS_AS(log_gamma(INFINITY), DomainError);
    CHECK_THROWS_AS(log_gamma(NAN), DomainError);
}

TEST_CASE("digamma identities") {
    CHECK(std::abs(digamma(1.0) + kEulerGamma) < 1e-13);
    CHECK(std::abs(digamma(2.0) - (1.0 - kEulerGamma)) < 1e-13);
    const double h = 1e-5;
    CHECK(std::abs(digamma(7.3) - (log_gamma(7.3 + h) - log_gamma(7.3 - h)) / (2 * h)) < 1e-6);
    CHECK_THROWS_AS(digamma(0.0), DomainError);
    CHECK_THROWS_AS(digamma(-2.0), DomainError);
}

TEST_CASE("digamma matches finite differences of log_gamma on [0.1, 100]") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(std::log(0.1), std::log(100.0));
    const double h = 1e-5;
    for (int i = 0; i < 500; ++i) {
        const double x = std::exp(unit(rng));
        const double fd = (log_gamma(x + h) - log_gamma(x - h)) / (2 * h);
        CHECK(std::abs(digamma(x) - fd) < 1e-6);
    }
}

TEST_CASE("erf basic values and symmetry") {
    CHECK(specfun::erf(0.0) == 0.0);
    CHECK(specfun::erf(-1.7) == -specfun::erf(1.7));
    const double ref = 2.0 / std::sqrt(std::numbers::pi) *
                       integrate([](double u) { return std::exp(-u * u); }, 0.0, 1.0);
    CHECK(std::abs(specfun::erf(1.0) - ref) < 1e-10);
    CHECK(std::abs(specfun::erfc(0.3) - (1.0 - specfun::erf(0.3))) < 1e-15);
    CHECK(normal_cdf(0.0) == 0.5);
}

TEST_CASE("erf is odd and bounded") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (int i = 0; i < 2000; ++i) {
        const double x = normal(rng);
        CHECK(specfun::erf(-x) == -specfun::erf(x));
        CHECK(std::abs(specfun::erf(x)) <= 1.0);
    }
}

TEST_CASE("hyp1f1 closed-form cases") {
    CHECK(hyp1f1(3.2, 7.1, 0.0) == 1.0);
    const double z = 0.8;
    CHECK(std::abs(hyp1f1(1.0, 2.0, z) - std::expm1(z) / z) < 1e-14);
    CHECK(std::abs(hyp1f1(1.0, 2.0, -z) - (-std::expm1(-z) / z)) < 1e-14);
    const double ref = integrate([](double t) { return std::exp(0.7 * t) * beta_pdf(t, 2.5, 3.5); }, 0.0, 1.0);
    CHECK(std::abs(hyp1f1(2.5, 6.0, 0.7) - ref) < 1e-8);
}

TEST_CASE("hyp1f1 errors") {
    CHECK_THROWS_AS(hyp1f1(1.0, 0.0, 0.5), DomainError);
    CHECK_THROWS_AS(hyp1f1(1.0, -2.0, 0.5), DomainError);
    try {
        hyp1f1(1.0, 1.5, 4000.0);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::isfinite(e.partial()));
        CHECK(e.partial() > 1.0);
    }
}

TEST_CASE("hyp1f1 is at least one for positive arguments") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.01, 20.0);
    for (int i = 0; i < 500; ++i) CHECK(hyp1f1(unit(rng), unit(rng), unit(rng) / 10.0) >= 1.0);
}

TEST_CASE("hyp1f1 equals the Beta moment-generating integral") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ab(0.5, 50.0);
    std::uniform_real_distribution<double> zs(-std::log(2.5), std::log(2.5));
    QuadratureSpec spec;
    spec.abs_tol = 1e-14;
    spec.rel_tol = 1e-11;
    spec.max_subdivisions = 5000;
    for (int i = 0; i < 300; ++i) {
        const double a = ab(rng);
        const double b = ab(rng);
        const double z = zs(rng);
        // endpoints may be integrable singularities; the rule never needs their value
        const double ref = integrate(
            [&](double t) { return t <= 0.0 || t >= 1.0 ? 0.0 : std::exp(z * t) * beta_pdf(t, a, b); }, 0.0,
            1.0, spec);
        CHECK(std::abs(hyp1f1(a, a + b, z) - ref) / ref < 1e-7);
    }
}

TEST_CASE("reg_inc_beta examples") {
    CHECK(std::abs(reg_inc_beta(1.0, 1.0, 0.3) - 0.3) < 1e-14);
    CHECK(std::abs(reg_inc_beta(4.2, 4.2, 0.5) - 0.5) < 1e-14);
    const double ref = integrate([](double t) { return beta_pdf(t, 2.0, 5.0); }, 0.0, 0.4);
    CHECK(std::abs(reg_inc_beta(2.0, 5.0, 0.4) - ref) < 1e-9);
    CHECK(reg_inc_beta(2.0, 3.0, 0.0) == 0.0);
    CHECK(reg_inc_beta(2.0, 3.0, 1.0) == 1.0);
    CHECK_THROWS_AS(reg_inc_beta(2.0, 3.0, 1.5), DomainError);
    CHECK_THROWS_AS(reg_inc_beta(0.0, 3.0, 0.5), DomainError);
}

TEST_CASE("reg_inc_beta reflection and monotonicity") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ab(0.1, 60.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const double a = ab(rng);
        const double b = ab(rng);
        const double x = unit(rng);
        CHECK(std::abs(reg_inc_beta(a, b, x) + reg_inc_beta(b, a, 1.0 - x) - 1.0) < 1e-10);
        const double y = std::min(1.0, x + 0.05 * unit(rng));
        CHECK(reg_inc_beta(a, b, y) >= reg_inc_beta(a, b, x) - 1e-15);
    }
}

TEST_CASE("reg_lower_gamma against quadrature") {
    for (double a : {0.5, 1.0, 3.7, 20.0}) {
        for (double x : {0.1, 1.0, 4.0, 30.0}) {
            const double ref = integrate(
                [&](double t) { return std::exp((a - 1) * std::log(t) - t - log_gamma(a)); }, 0.0, x);
            CHECK(std::abs(reg_lower_gamma(a, x) - ref) < 1e-9);
        }
    }
}

TEST_CASE("integrate examples") {
    CHECK(integrate([](double) { return 1.0; }, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(integrate([](double t) { return t * t * t; }, 0.0, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::abs(integrate([](double t) { return std::exp(-t); }, 0.0, INFINITY) - 1.0) < 1e-10);
    CHECK(std::abs(integrate([](double t) { return std::exp(-0.5 * t * t); }, -INFINITY, INFINITY) -
                   std::sqrt(2 * std::numbers::pi)) < 1e-9);
    CHECK(std::abs(integrate([](double t) { return std::exp(t); }, -INFINITY, 0.0) - 1.0) < 1e-10);
}

TEST_CASE("integrate reports budget exhaustion with a best estimate") {
    QuadratureSpec spec;
    spec.max_subdivisions = 2;
    auto wiggly = [](double t) { return std::sin(200.0 * t); };
    const auto report = integrate_report(wiggly, 0.0, 3.0, spec);
    CHECK_FALSE(report.converged);
    try {
        integrate(wiggly, 0.0, 3.0, spec);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(e.partial() == report.value);
        CHECK(e.error_estimate() > 0.0);
    }
}

TEST_CASE("QuadratureSpec validation") {
    QuadratureSpec spec;
    CHECK_NOTHROW(spec.validate());
    spec.abs_tol = 0.0;
    CHECK_THROWS_AS(spec.validate(), UsageError);
    spec = {};
    spec.max_subdivisions = 0;
    CHECK_THROWS_AS(spec.validate(), UsageError);
    CHECK_THROWS_AS(integrate([](double) { return NAN; }, 0.0, 1.0), DomainError);
}
