#include <doctest.h>

#include <cmath>

#include "kzmsim/chain.hpp"
#include "kzmsim/errors.hpp"
#include "kzmsim/units.hpp"

using namespace kzmsim;

namespace {

TrapParams yb_trap(int n, double axial_hz = 100e3, double transverse_hz = 3.1166e6) {
    TrapParams t;
    t.ion_count = n;
    t.axial_freq = hz_to_angular(axial_hz);
    t.transverse_freq = hz_to_angular(transverse_hz);
    t.ion_mass = kYb171MassKg;
    t.charge = kElementaryCharge;
    return t;
}

}  // namespace

TEST_CASE("single ion sits at the trap center") {
    auto chain = equilibrium_positions(yb_trap(1));
    CHECK(chain.positions.size() == 1);
    CHECK(chain.positions[0] == doctest::Approx(0.0));
}

TEST_CASE("two ions: analytic force balance d^3 = 2 l^3") {
    auto trap = yb_trap(2);
    auto chain = equilibrium_positions(trap);
    const double a = std::pow(2.0, -2.0 / 3.0);  // 0.62996...
    CHECK(std::abs(chain.positions[0] / chain.length_scale + a) < 1e-9);
    CHECK(std::abs(chain.positions[1] / chain.length_scale - a) < 1e-9);
}

TEST_CASE("three ions: analytic (5/4)^(1/3) outer positions") {
    auto chain = equilibrium_positions(yb_trap(3));
    const double a = std::cbrt(5.0 / 4.0);  // 1.0772...
    CHECK(std::abs(chain.positions[0] / chain.length_scale + a) < 1e-9);
    CHECK(std::abs(chain.positions[1] / chain.length_scale) < 1e-9);
    CHECK(std::abs(chain.positions[2] / chain.length_scale - a) < 1e-9);
}

TEST_CASE("force balance and mirror symmetry across sizes") {
    for (int n : {1, 2, 3, 5, 8, 13, 21, 34, 48, 64}) {
        auto trap = yb_trap(n);
        auto chain = equilibrium_positions(trap);
        CHECK(force_balance_residual(chain, trap) < 1e-12);
        for (int i = 0; i + 1 < n; ++i)
            CHECK(chain.positions[i] < chain.positions[i + 1]);
        for (int i = 0; i < n; ++i)
            CHECK(std::abs(chain.positions[i] + chain.positions[n - 1 - i]) <
                  1e-9 * chain.length_scale);
    }
}

TEST_CASE("minimum spacing sits at the chain center and shrinks with N") {
    double prev_center_gap = 1e9;
    for (int n : {4, 8, 16, 32, 64}) {
        auto chain = equilibrium_positions(yb_trap(n));
        double min_gap = 1e300;
        int min_at = -1;
        for (int i = 0; i + 1 < n; ++i) {
            const double gap = chain.positions[i + 1] - chain.positions[i];
            if (gap < min_gap) {
                min_gap = gap;
                min_at = i;
            }
        }
        // smallest gap within one bond of the middle
        CHECK(std::abs(min_at - (n - 1) / 2.0) <= 1.0);
        const double center_gap = min_gap / chain.length_scale;
        CHECK(center_gap < prev_center_gap);
        prev_center_gap = center_gap;
    }
}

TEST_CASE("uniform transverse confinement: top mode is center-of-mass") {
    for (int n : {2, 5, 13}) {
        auto trap = yb_trap(n);
        auto chain = equilibrium_positions(trap);
        auto modes = transverse_modes(chain, trap);
        CHECK(std::abs(modes.frequencies[0] - trap.transverse_freq) <
              1e-10 * trap.transverse_freq);
        const double expected = 1.0 / std::sqrt(static_cast<double>(n));
        for (int i = 0; i < n; ++i)
            CHECK(modes.mode_vectors(i, 0) == doctest::Approx(expected).epsilon(1e-8));
    }
}

TEST_CASE("two-ion stretch mode frequency") {
    auto trap = yb_trap(2);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    const double expected = std::sqrt(trap.transverse_freq * trap.transverse_freq -
                                      trap.axial_freq * trap.axial_freq);
    CHECK(modes.frequencies[1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mode vectors are orthonormal up to N = 61") {
    for (int n : {3, 13, 61}) {
        auto trap = yb_trap(n, 95e3);
        auto chain = equilibrium_positions(trap);
        auto modes = transverse_modes(chain, trap);
        const Eigen::MatrixXd gram =
            modes.mode_vectors.transpose() * modes.mode_vectors;
        const double residual =
            (gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
        CHECK(residual < 1e-10);
        for (int k = 0; k + 1 < n; ++k)
            CHECK(modes.frequencies[k] >= modes.frequencies[k + 1]);
    }
}

TEST_CASE("weak transverse confinement raises a structural-instability error") {
    auto trap = yb_trap(10);
    trap.transverse_freq = hz_to_angular(150e3);  // zigzag regime
    auto chain = equilibrium_positions(trap);
    CHECK_THROWS_AS(transverse_modes(chain, trap), StructuralInstabilityError);
}

TEST_CASE("degenerate single-ion mode spectrum") {
    auto trap = yb_trap(1);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    CHECK(modes.frequencies[0] == doctest::Approx(trap.transverse_freq));
    CHECK(modes.mode_vectors(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("spectrum fit: single ion is trivial") {
    auto trap = yb_trap(1);
    auto fit = fit_positions_from_spectrum({trap.transverse_freq}, trap);
    CHECK(fit.chain.positions[0] == doctest::Approx(0.0));
    CHECK(fit.rms_residual == doctest::Approx(0.0));
}

TEST_CASE("spectrum fit: underdetermined input is rejected") {
    auto trap = yb_trap(5);
    CHECK_THROWS_AS(
        fit_positions_from_spectrum({trap.transverse_freq}, trap,
                                    SpectrumFitModel::raw_positions),
        InvalidInputError);
}

TEST_CASE("spectrum fit round trip recovers a perturbed-trap chain") {
    // truth: trap with a quartic axial correction; guess: wrong axial
    // frequency, no quartic
    for (int n : {5, 9, 16}) {
        auto truth = yb_trap(n);
        truth.quartic = 0.05;
        auto chain = equilibrium_positions(truth);
        auto modes = transverse_modes(chain, truth);
        std::vector<double> measured(modes.frequencies.data(),
                                     modes.frequencies.data() + n);

        auto guess = yb_trap(n, 92e3);  // 8% off in omega_z
        auto fit = fit_positions_from_spectrum(measured, guess,
                                               SpectrumFitModel::axial_quartic);
        REQUIRE(fit.chain.positions.size() == n);
        for (int i = 0; i < n; ++i) {
            const double rel = std::abs(fit.chain.positions[i] - chain.positions[i]) /
                               std::abs(chain.positions[n - 1]);
            CHECK(rel < 1e-3);
        }
    }
}

TEST_CASE("spectrum fit with raw positions matches a known chain") {
    const int n = 5;
    auto truth = yb_trap(n);
    truth.quartic = 0.08;
    auto chain = equilibrium_positions(truth);
    auto modes = transverse_modes(chain, truth);
    std::vector<double> measured(modes.frequencies.data(), modes.frequencies.data() + n);

    auto guess = yb_trap(n);  // harmonic initial chain
    auto fit =
        fit_positions_from_spectrum(measured, guess, SpectrumFitModel::raw_positions);
    for (int i = 0; i < n; ++i) {
        const double rel = std::abs(fit.chain.positions[i] - chain.positions[i]) /
                           std::abs(chain.positions[n - 1]);
        CHECK(rel < 1e-3);
    }
}

TEST_CASE("61-ion band against the paper's operating point") {
    // omega_x = 2pi x 3.1166 MHz; axial chosen for a ~200 um chain
    auto trap = yb_trap(61, 95e3);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    // top of the band is the COM at omega_x; modes crowd toward the top and
    // the band stays well above the zigzag instability
    CHECK(modes.frequencies[0] == doctest::Approx(trap.transverse_freq).epsilon(1e-10));
    const double band = modes.frequencies[0] - modes.frequencies[60];
    CHECK(band > hz_to_angular(100e3));
    CHECK(modes.frequencies[60] > 0.6 * trap.transverse_freq);
    // dense at the high-frequency end: the top decile of modes spans a small
    // slice of the band
    const double top_gap = modes.frequencies[0] - modes.frequencies[6];
    CHECK(top_gap < 0.1 * band);
    const double len = (chain.positions[60] - chain.positions[0]) * 1e6;
    MESSAGE("N=61 chain length ", len, " um, band ", angular_to_hz(band) / 1e3, " kHz");
}
