#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kzmsim/errors.hpp"
#include "kzmsim/fit.hpp"
#include "kzmsim/interp.hpp"
#include "kzmsim/rng.hpp"

using namespace kzmsim;

TEST_CASE("weighted linear fit matches hand-computed normal equations") {
    Eigen::VectorXd x(4), y(4), w(4);
    x << 1, 2, 3, 4;
    y << 2.1, 3.9, 6.2, 7.8;
    w << 1, 1, 1, 1;
    auto fit = linear_fit(x, y, w, false);
    // normal equations by hand: sxx = 5, sxy = 9.7 -> slope 1.94
    CHECK(fit.slope == doctest::Approx(1.94).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(0.15).epsilon(1e-9));
    CHECK(fit.err_defined);
}

TEST_CASE("linear fit honors weights") {
    Eigen::VectorXd x(3), y(3), w(3);
    x << 0, 1, 2;
    y << 0, 1, 10;
    w << 1e6, 1e6, 1e-6;  // third point negligible
    auto fit = linear_fit(x, y, w, true);
    CHECK(fit.slope == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("two-point fit has undefined errors") {
    Eigen::VectorXd x(2), y(2), w(2);
    x << 0, 1;
    y << 1, 3;
    w << 1, 1;
    auto fit = linear_fit(x, y, w, false);
    CHECK(fit.slope == doctest::Approx(2.0));
    CHECK(!fit.err_defined);
    CHECK(std::isnan(fit.slope_err));
}

TEST_CASE("linear fit rejects degenerate input") {
    Eigen::VectorXd x(3), y(3), w(3);
    x << 1, 1, 1;
    y << 1, 2, 3;
    w << 1, 1, 1;
    CHECK_THROWS_AS(linear_fit(x, y, w, false), InvalidInputError);
}

TEST_CASE("levenberg-marquardt recovers exponential-decay parameters") {
    // model y = a exp(-x/r) + c sampled exactly
    const double a = 0.8, r = 3.0, c = 0.01;
    Eigen::VectorXd xs(8);
    xs << 1, 2, 3, 4, 5, 6, 7, 8;
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& res) {
        for (Eigen::Index i = 0; i < xs.size(); ++i)
            res[i] = p[0] * std::exp(-xs[i] / p[1]) + p[2] -
                     (a * std::exp(-xs[i] / r) + c);
    };
    Eigen::VectorXd p0(3);
    p0 << 0.5, 2.0, 0.0;
    auto lm = levenberg_marquardt(residual, p0, static_cast<int>(xs.size()));
    REQUIRE(lm.converged);
    CHECK(lm.params[0] == doctest::Approx(a).epsilon(1e-7));
    CHECK(lm.params[1] == doctest::Approx(r).epsilon(1e-7));
    CHECK(lm.params[2] == doctest::Approx(c).epsilon(1e-6));
    CHECK(lm.chi2 < 1e-18);
}

TEST_CASE("levenberg-marquardt covariance matches the linear-model answer") {
    // linear model y = p0 + p1 x with sigma = 1 weights: covariance is
    // (X^T X)^-1, computable by hand
    Eigen::VectorXd xs(5);
    xs << 0, 1, 2, 3, 4;
    Eigen::VectorXd ys(5);
    ys << 0.1, 1.2, 1.9, 3.1, 3.8;
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& res) {
        for (Eigen::Index i = 0; i < xs.size(); ++i)
            res[i] = p[0] + p[1] * xs[i] - ys[i];
    };
    Eigen::VectorXd p0(2);
    p0 << 0, 1;
    auto lm = levenberg_marquardt(residual, p0, 5);
    REQUIRE(lm.converged);
    Eigen::MatrixXd xtx(2, 2);
    xtx << 5, 10, 10, 30;
    const Eigen::MatrixXd cov = xtx.inverse();
    CHECK(lm.covariance(0, 0) == doctest::Approx(cov(0, 0)).epsilon(1e-5));
    CHECK(lm.covariance(1, 1) == doctest::Approx(cov(1, 1)).epsilon(1e-5));
}

TEST_CASE("pchip interpolation is monotone and hits knots") {
    std::vector<double> x{0, 1, 2, 4, 8};
    std::vector<double> y{10, 6, 5, 1, 0.5};
    PchipInterpolant f(x, y);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(f(x[i]) == doctest::Approx(y[i]).epsilon(1e-14));
    double prev = f(0.0);
    for (double t = 0.01; t <= 8.0; t += 0.01) {
        const double v = f(t);
        CHECK(v <= prev + 1e-12);  // nonincreasing data stay nonincreasing
        prev = v;
    }
}

TEST_CASE("counter rng is stream-independent and reproducible") {
    CounterRng a(42, 7), b(42, 7), c(42, 8);
    for (int i = 0; i < 100; ++i) {
        const double va = a.next_double();
        CHECK(va == b.next_double());
        CHECK(va >= 0.0);
        CHECK(va < 1.0);
    }
    // different stream differs
    CounterRng a2(42, 7);
    bool any_diff = false;
    for (int i = 0; i < 16; ++i)
        if (a2.next_u64() != c.next_u64()) any_diff = true;
    CHECK(any_diff);
}
