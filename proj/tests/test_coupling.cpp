#include <doctest.h>

#include <cmath>

#include "kzmsim/coupling.hpp"
#include "kzmsim/errors.hpp"
#include "kzmsim/rng.hpp"
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

LaserParams raman_laser(const ModeSpectrum& modes, double offset_hz = 15e3) {
    LaserParams l;
    l.wavevector_difference = std::sqrt(2.0) * kTwoPi / 355e-9;
    l.detuning = modes.frequencies.maxCoeff() + hz_to_angular(offset_hz);
    return l;
}

}  // namespace

TEST_CASE("rabi profile: closed-form Gaussian values") {
    IonChain chain;
    chain.length_scale = 1.0;
    chain.positions.resize(3);
    chain.positions << -103.5e-6, 0.0, 72e-6;
    BeamProfile beam;
    beam.center = 0.0;
    beam.fwhm = 144e-6;
    beam.peak_rabi = hz_to_angular(100e3);

    auto rabi = rabi_profile(beam, chain);
    CHECK(rabi[1] == doctest::Approx(beam.peak_rabi).epsilon(1e-15));
    // half maximum at +- fwhm/2
    CHECK(rabi[2] == doctest::Approx(0.5 * beam.peak_rabi).epsilon(1e-12));
    // edge of a 207 um chain: exp(-4 ln2 (103.5/144)^2) = 0.2387...
    const double expected = std::exp(-4.0 * std::log(2.0) * std::pow(103.5 / 144.0, 2));
    CHECK(rabi[0] / beam.peak_rabi == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.239).epsilon(2e-3));
}

TEST_CASE("two-ion coupling reduces to the explicit two-mode sum") {
    auto trap = yb_trap(2);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    auto laser = raman_laser(modes, 20e3);
    Eigen::VectorXd rabi = Eigen::VectorXd::Constant(2, hz_to_angular(100e3));

    auto j = ising_couplings(rabi, modes, laser, trap.ion_mass);

    const double wc = modes.frequencies[0], ws = modes.frequencies[1];
    const double ec = laser.lamb_dicke(wc, trap.ion_mass);
    const double es = laser.lamb_dicke(ws, trap.ion_mass);
    const double d2 = laser.detuning * laser.detuning;
    const double expected =
        rabi[0] * rabi[1] *
        (ec * ec * 0.5 * wc / (d2 - wc * wc) - es * es * 0.5 * ws / (d2 - ws * ws));
    CHECK(j.values(0, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(j.values(0, 0) == 0.0);
    CHECK(j.values(1, 0) == j.values(0, 1));
}

TEST_CASE("far detuning suppresses couplings by 1/delta^2") {
    auto trap = yb_trap(5);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    Eigen::VectorXd rabi = Eigen::VectorXd::Constant(5, hz_to_angular(100e3));

    LaserParams near = raman_laser(modes);
    near.detuning = 1.01 * modes.frequencies.maxCoeff();
    LaserParams far = near;
    far.detuning = 10.0 * modes.frequencies.maxCoeff();

    auto j_near = ising_couplings(rabi, modes, near, trap.ion_mass);
    auto j_far = ising_couplings(rabi, modes, far, trap.ion_mass);
    for (int i = 0; i < 5; ++i)
        for (int k = i + 1; k < 5; ++k)
            CHECK(std::abs(j_far.values(i, k)) < 0.01 * std::abs(j_near.values(i, k)));
}

TEST_CASE("detuning above the band gives AFM nearest-neighbor couplings") {
    auto trap = yb_trap(7);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    auto laser = raman_laser(modes, 20e3);
    Eigen::VectorXd rabi = Eigen::VectorXd::Constant(7, hz_to_angular(100e3));
    auto j = ising_couplings(rabi, modes, laser, trap.ion_mass);
    for (int i = 0; i + 1 < 7; ++i) CHECK(j.values(i, i + 1) > 0.0);
}

TEST_CASE("near-resonant detuning is rejected with the offending mode") {
    auto trap = yb_trap(3);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    LaserParams laser = raman_laser(modes);
    laser.detuning = modes.frequencies[1] + hz_to_angular(10.0);  // inside the guard
    Eigen::VectorXd rabi = Eigen::VectorXd::Constant(3, hz_to_angular(100e3));
    CHECK_THROWS_AS(ising_couplings(rabi, modes, laser, trap.ion_mass),
                    NearResonanceError);
}

TEST_CASE("coupling scales as the square of the Rabi frequency") {
    auto trap = yb_trap(4);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    auto laser = raman_laser(modes);
    Eigen::VectorXd rabi = Eigen::VectorXd::Constant(4, hz_to_angular(80e3));
    auto j1 = ising_couplings(rabi, modes, laser, trap.ion_mass);
    auto j2 = ising_couplings((3.0 * rabi).eval(), modes, laser, trap.ion_mass);
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k)
            CHECK(j2.values(i, k) == doctest::Approx(9.0 * j1.values(i, k)).epsilon(1e-14));
}

TEST_CASE("power-law fit recovers its own model exactly") {
    auto j = power_law_couplings(9, hz_to_angular(150.0), 1.3);
    auto fit = fit_power_law(j);
    CHECK(fit.alpha == doctest::Approx(1.3).epsilon(1e-10));
    CHECK(fit.j0 == doctest::Approx(hz_to_angular(150.0)).epsilon(1e-10));
    CHECK(fit.log_rms_residual < 1e-12);
    CHECK(!fit.used_magnitudes);
}

TEST_CASE("power-law fit under lognormal noise: regression oracle") {
    const int n = 13;
    const double alpha_true = 1.19, j0_true = hz_to_angular(153.0);
    auto j = power_law_couplings(n, j0_true, alpha_true);
    CounterRng rng(20240915, 0);
    for (int i = 0; i < n; ++i)
        for (int k = i + 1; k < n; ++k) {
            const double noise = std::exp(0.05 * rng.next_normal());
            j.values(i, k) *= noise;
            j.values(k, i) = j.values(i, k);
        }
    auto fit = fit_power_law(j);
    CHECK(std::abs(fit.alpha - alpha_true) < 0.05);

    // independent oracle: direct normal equations on the logs
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (int i = 0; i < n; ++i)
        for (int k = i + 1; k < n; ++k) {
            const double x = std::log(static_cast<double>(k - i));
            const double y = std::log(std::abs(j.values(i, k)));
            sx += x; sy += y; sxx += x * x; sxy += x * y;
            ++m;
        }
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    CHECK(fit.alpha == doctest::Approx(-slope).epsilon(1e-10));
}

TEST_CASE("power-law fit is scale-equivariant") {
    auto j = power_law_couplings(8, hz_to_angular(100.0), 0.9);
    auto f1 = fit_power_law(j);
    CouplingMatrix scaled;
    scaled.values = 7.5 * j.values;
    auto f2 = fit_power_law(scaled);
    CHECK(f2.alpha == doctest::Approx(f1.alpha).epsilon(1e-12));
    CHECK(f2.j0 == doctest::Approx(7.5 * f1.j0).epsilon(1e-12));
}

TEST_CASE("sign-flipped pairs: magnitude fit by default, error when strict") {
    auto j = power_law_couplings(6, hz_to_angular(100.0), 1.0);
    j.values(0, 5) = -j.values(0, 5);
    j.values(5, 0) = j.values(0, 5);
    auto fit = fit_power_law(j);
    CHECK(fit.used_magnitudes);
    REQUIRE(fit.flipped_pairs.size() == 1);
    CHECK(fit.flipped_pairs[0].first == 0);
    CHECK(fit.flipped_pairs[0].second == 5);
    CHECK_THROWS_AS(
        fit_power_law(j, PowerLawWeighting::per_pair, PowerLawSignPolicy::strict_error),
        InvalidInputError);
}

TEST_CASE("per-distance weighting changes the fit only for imperfect data") {
    auto j = power_law_couplings(7, hz_to_angular(90.0), 1.1);
    auto a = fit_power_law(j, PowerLawWeighting::per_pair);
    auto b = fit_power_law(j, PowerLawWeighting::per_distance);
    CHECK(a.alpha == doctest::Approx(b.alpha).epsilon(1e-10));
}

TEST_CASE("kac normalization: hand sums") {
    CHECK(kac_norm(2, 0.7) == doctest::Approx(2.0));
    CHECK(kac_norm(6, 0.0) == doctest::Approx(6.0));
    CHECK(kac_norm(3, 1.0) == doctest::Approx(2.5));
    CHECK_THROWS_AS(kac_norm(1, 1.0), InvalidInputError);
}

TEST_CASE("spin-flip resonances: hand sums and linearity") {
    auto j2 = power_law_couplings(2, hz_to_angular(100.0), 1.0);
    auto de2 = spin_flip_resonances(j2);
    CHECK(de2[0] == doctest::Approx(2.0 * j2.values(0, 1)));
    CHECK(de2[1] == doctest::Approx(2.0 * j2.values(0, 1)));

    const double j0 = hz_to_angular(80.0);
    auto j3 = power_law_couplings(3, j0, 1.0);
    auto de3 = spin_flip_resonances(j3);
    CHECK(de3[1] == doctest::Approx(4.0 * j0).epsilon(1e-12));
    CHECK(de3[0] == doctest::Approx(3.0 * j0).epsilon(1e-12));

    // linearity
    auto ja = power_law_couplings(5, hz_to_angular(60.0), 0.8);
    auto jb = power_law_couplings(5, hz_to_angular(40.0), 1.6);
    CouplingMatrix jsum;
    jsum.values = ja.values + jb.values;
    auto de = spin_flip_resonances(jsum);
    auto dea = spin_flip_resonances(ja);
    auto deb = spin_flip_resonances(jb);
    for (int i = 0; i < 5; ++i) CHECK(de[i] == doctest::Approx(dea[i] + deb[i]));
}

TEST_CASE("resonance profile arches over a long calibrated chain") {
    auto trap = yb_trap(61, 95e3);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    auto laser = raman_laser(modes, 15e3);
    BeamProfile beam;
    beam.fwhm = 144e-6;
    beam.peak_rabi = hz_to_angular(100e3);
    auto rabi = rabi_profile(beam, chain);
    auto j = ising_couplings(rabi, modes, laser, trap.ion_mass);
    auto de = spin_flip_resonances(j);
    CHECK(de[30] > de[0]);
    CHECK(de[30] > de[60]);
    // roughly monotone toward the center on each side (sampled)
    CHECK(de[20] > de[5]);
    CHECK(de[40] > de[55]);
}

TEST_CASE("phonon error estimate") {
    CHECK(phonon_error_estimate(0.1, 0.0, hz_to_angular(20e3)) == doctest::Approx(0.0));
    const double p1 = phonon_error_estimate(0.1, hz_to_angular(100e3), hz_to_angular(20e3));
    const double p2 = phonon_error_estimate(0.1, hz_to_angular(100e3), hz_to_angular(40e3));
    CHECK(p1 == doctest::Approx(0.0625).epsilon(1e-12));
    CHECK(p2 == doctest::Approx(p1 / 4.0).epsilon(1e-12));
    CHECK(phonon_error_estimate(1.0, hz_to_angular(1e6), hz_to_angular(1.0)) == 1.0);
    CHECK_THROWS_AS(phonon_error_estimate(0.1, 1.0, 0.0), InvalidInputError);
}

TEST_CASE("paper-style 13-ion configuration lands in the reported band") {
    // reference, not a gate: the paper's exact trap inputs are unpublished
    auto trap = yb_trap(13, 180e3);
    auto chain = equilibrium_positions(trap);
    auto modes = transverse_modes(chain, trap);
    auto laser = raman_laser(modes, 15e3);
    BeamProfile beam;
    beam.fwhm = 144e-6;
    beam.peak_rabi = hz_to_angular(100e3);
    auto rabi = rabi_profile(beam, chain);
    auto j = ising_couplings(rabi, modes, laser, trap.ion_mass);
    auto fit = fit_power_law(j);
    MESSAGE("13-ion reference: J0 = 2pi x ", angular_to_hz(fit.j0), " Hz, alpha = ",
            fit.alpha, " +- ", fit.alpha_err);
    CHECK(fit.j0 > 0.0);
    CHECK(fit.alpha > 0.5);
    CHECK(fit.alpha < 1.8);
}

TEST_CASE("coupling CSV round trip") {
    auto j = power_law_couplings(5, hz_to_angular(123.0), 1.05);
    const std::string path = "coupling_roundtrip_test.csv";
    write_coupling_csv(path, j);
    auto k = load_coupling_csv(path);
    REQUIRE(k.size() == 5);
    for (int a = 0; a < 5; ++a)
        for (int b = 0; b < 5; ++b)
            CHECK(k.values(a, b) == j.values(a, b));
    std::remove(path.c_str());
}
