// Effective Ising couplings from laser and mode data, the power-law summary,
// and the calibration-side predictions (spin-flip resonances, Kac
// normalization, phonon-excitation estimate).

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kzmsim/chain.hpp"

namespace kzmsim {

struct LaserParams {
    double detuning = 0.0;               // delta, rad/s
    double wavevector_difference = 0.0;  // delta k, 1/m
    // guard on |delta - omega_k| below which the perturbative J formula is
    // rejected; default 2*pi*100 Hz
    double resonance_guard = 628.3185307179587;

    // Lamb-Dicke parameter for a mode of frequency omega_k
    double lamb_dicke(double omega_k, double ion_mass) const;
    // distance from delta to the nearest mode
    double sideband_gap(const ModeSpectrum& modes) const;
};

struct BeamProfile {
    double center = 0.0;     // m
    double fwhm = 0.0;       // m
    double peak_rabi = 0.0;  // Omega_max, rad/s
};

struct CouplingMatrix {
    Eigen::MatrixXd values;  // symmetric, zero diagonal, rad/s
    int size() const { return static_cast<int>(values.rows()); }
};

struct PowerLawFit {
    double j0 = 0.0;            // rad/s
    double j0_err = 0.0;
    double alpha = 0.0;
    double alpha_err = 0.0;
    double log_rms_residual = 0.0;  // RMS misfit of log|J| model
    bool used_magnitudes = false;   // true when sign-flipped pairs were folded
    std::vector<std::pair<int, int>> flipped_pairs;  // pairs with J <= 0
};

enum class PowerLawWeighting {
    per_pair,      // every (i,j) pair enters with equal weight (default)
    per_distance,  // average log|J| per distance before fitting
};

enum class PowerLawSignPolicy {
    magnitude_warn,  // fit |J| and record flipped pairs (default)
    strict_error,    // throw when any fitted pair has J <= 0
};

// Gaussian beam intensity profile evaluated at the ion positions:
// Omega_i = Omega_max exp(-4 ln2 (u_i - center)^2 / fwhm^2).
Eigen::VectorXd rabi_profile(const BeamProfile& beam, const IonChain& chain);

// J_ij = Omega_i Omega_j sum_k eta_k^2 b_ik b_jk omega_k / (delta^2 - omega_k^2)
CouplingMatrix ising_couplings(const Eigen::VectorXd& rabi, const ModeSpectrum& modes,
                               const LaserParams& laser, double ion_mass);

// Direct power-law coupling J_ij = j0 / |i-j|^alpha (AFM convention: j0 > 0).
CouplingMatrix power_law_couplings(int n, double j0, double alpha);

// Least squares of log|J_ij| against log|i-j| over all pairs.
PowerLawFit fit_power_law(const CouplingMatrix& j,
                          PowerLawWeighting weighting = PowerLawWeighting::per_pair,
                          PowerLawSignPolicy sign_policy = PowerLawSignPolicy::magnitude_warn);

// Kac normalization (1/(N-1)) sum_{i != j} 1/|i-j|^alpha.
double kac_norm(int n, double alpha);

// Resonance prediction for coherent imaging spectroscopy:
// DeltaE_i = 2 sum_{j != i} J_ij.
Eigen::VectorXd spin_flip_resonances(const CouplingMatrix& j);

// Order-of-magnitude virtual phonon excitation probability
// p = (eta Omega / (2 delta_sb))^2, clamped to [0, 1].
double phonon_error_estimate(double eta, double rabi, double sideband_gap);

// CSV serialization: `# N=<n>` header, `i,j,J_rad_per_s` columns,
// upper-triangle rows (0-based indices).
void write_coupling_csv(const std::string& path, const CouplingMatrix& j);
CouplingMatrix load_coupling_csv(const std::string& path);

}  // namespace kzmsim
