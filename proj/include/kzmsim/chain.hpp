// Ion chain statics: equilibrium positions in a (quartic-corrected) harmonic
// trap, transverse normal modes, and inversion of a measured sideband
// spectrum into ion spacings.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace kzmsim {

struct TrapParams {
    int ion_count = 1;
    double axial_freq = 0.0;  // omega_z, rad/s
    // uniform transverse frequency, rad/s; ignored when profile is nonempty
    double transverse_freq = 0.0;
    // optional site-dependent omega_x_i, rad/s (size == ion_count)
    std::vector<double> transverse_profile;
    double ion_mass = 0.0;  // kg
    double charge = 0.0;    // C
    // dimensionless quartic axial correction: v(x) = x^2/2 + quartic*x^4/4
    // in units of the Coulomb length scale
    double quartic = 0.0;

    double transverse_freq_at(int i) const {
        return transverse_profile.empty() ? transverse_freq
                                          : transverse_profile.at(static_cast<size_t>(i));
    }
    void validate() const;
};

struct IonChain {
    Eigen::VectorXd positions;  // axial coordinates, meters, strictly increasing
    double length_scale = 0.0;  // l = (q^2/(4 pi eps0 M wz^2))^(1/3), meters
};

struct ModeSpectrum {
    Eigen::VectorXd frequencies;   // omega_k, rad/s, sorted descending
    Eigen::MatrixXd mode_vectors;  // column k = mode k, orthonormal
};

// Coulomb length scale for the given trap.
double coulomb_length_scale(const TrapParams& trap);

// Solve the axial force balance by damped Newton iteration on dimensionless
// coordinates; gradient converged below 1e-12 (dimensionless).
IonChain equilibrium_positions(const TrapParams& trap);

// max |gradient| of the dimensionless potential at the chain's positions
double force_balance_residual(const IonChain& chain, const TrapParams& trap);

// Eigendecomposition of the transverse Hessian
//   A_ii = wx_i^2 - sum_{m != i} wz^2 l^3/|u_i - u_m|^3,
//   A_ij = wz^2 l^3/|u_i - u_j|^3.
ModeSpectrum transverse_modes(const IonChain& chain, const TrapParams& trap);

enum class SpectrumFitModel {
    axial_quartic,  // fit (omega_z, quartic); well-conditioned
    raw_positions,  // fit all N dimensionless positions; general
};

struct SpectrumFit {
    IonChain chain;
    TrapParams fitted_trap;            // trap_guess with fitted parameters applied
    Eigen::VectorXd residuals;         // per-mode frequency error, rad/s
    double rms_residual = 0.0;         // rad/s
};

// Fit ion positions so the computed transverse spectrum matches the measured
// frequencies (rad/s, any order; compared sorted descending against the top
// modes). Transverse confinement is taken from trap_guess.
SpectrumFit fit_positions_from_spectrum(const std::vector<double>& measured,
                                        const TrapParams& trap_guess,
                                        SpectrumFitModel model = SpectrumFitModel::axial_quartic);

// Measured-spectrum file: one frequency per line in ordinary Hz, '#' comments.
// Returned values are angular (rad/s).
std::vector<double> load_spectrum_file(const std::string& path);

// Fitted positions as CSV `index,position_um`.
void write_positions_csv(const std::string& path, const IonChain& chain);

}  // namespace kzmsim
