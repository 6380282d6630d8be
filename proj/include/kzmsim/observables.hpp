// Defect density, connected correlation profiles, correlation-length fits,
// and the projective measurement model (shot sampling with SPAM bit flips).

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kzmsim/engine.hpp"

namespace kzmsim {

// ---------------------------------------------------------------------------
// exact expectations

// <sigma_x^i> for every ion
Eigen::VectorXd sigma_x_expectations(const SpinState& psi);
// <sigma_x^i sigma_x^j>
double sigma_xx_expectation(const SpinState& psi, int i, int j);
// <sigma_y^i>
double sigma_y_expectation(const SpinState& psi, int i);

// ---------------------------------------------------------------------------
// shot sets

struct MeasurementModel {
    int shots = 1;
    double flip_prob = 0.0;  // per-ion independent readout bit flip
    std::uint64_t rng_seed = 0;
};

enum class MeasurementBasis { x, y, z };

struct ShotSet {
    MeasurementBasis basis = MeasurementBasis::x;
    int n_ions = 0;
    // row-major, shots x n_ions, entries +-1
    std::vector<std::int8_t> outcomes;

    int shot_count() const {
        return n_ions == 0 ? 0 : static_cast<int>(outcomes.size()) / n_ions;
    }
    int at(int shot, int ion) const { return outcomes[static_cast<size_t>(shot) * n_ions + ion]; }
};

// Rotate to the requested basis with exact single-spin unitaries, draw
// `shots` bitstrings from |psi|^2, then flip each bit independently with
// probability flip_prob. Streams are keyed by (seed, shot index), so the
// result is independent of scheduling.
ShotSet sample_measurements(const SpinState& psi, MeasurementBasis basis,
                            const MeasurementModel& model);

// Shot file format: `# basis=x N=<n> shots=<m>` header (optionally followed
// by ` T_s=<seconds>`), then one comma-separated row of +-1 per shot.
void write_shot_file(const std::string& path, const ShotSet& shots,
                     std::optional<double> quench_time = std::nullopt);
struct LoadedShots {
    ShotSet shots;
    std::optional<double> quench_time;  // seconds, when recorded in the header
};
LoadedShots load_shot_file(const std::string& path);

// ---------------------------------------------------------------------------
// observables

struct ValueWithError {
    double value = 0.0;
    double error = 0.0;  // zero for exact sources
};

// rho = (1/(2(N-1))) sum_i (1 - <sigma_x^i sigma_x^{i+1}>)
ValueWithError defect_density(const SpinState& psi);
ValueWithError defect_density(const ShotSet& shots);

struct CorrelationProfile {
    std::vector<int> distances;     // r = 1..r_max
    std::vector<double> g;          // connected correlation per r
    std::vector<int> pair_counts;   // N_r
    std::vector<double> stderrs;    // zero for exact sources
    int first_kept = 0, last_kept = 0;  // inclusive ion indices after discard
};

// Paper discard table {13:1, 36:4, 40:4, 55:8, 61:8}; round(0.13 N) per end
// otherwise.
int default_edge_discard(int n_ions);

// G(r) = (1/N_r) sum_i (<x_i x_{i+r}> - <x_i><x_{i+r}>) over kept ions;
// r_max defaults to floor(kept/2). Shot-set errors via bootstrap
// (200 resamples).
CorrelationProfile correlation_profile(const SpinState& psi, int edge_discard,
                                       int r_max = 0);
CorrelationProfile correlation_profile(const ShotSet& shots, int edge_discard,
                                       int r_max = 0, std::uint64_t bootstrap_seed = 1);

enum class FitOutcome {
    converged,
    unresolved_length,  // fitted R > 10 r_max; R reported but not resolved
    degenerate,         // profile carries no decay information
};

struct CorrLengthFit {
    double a = 0.0;
    double b = 0.0;
    double r_length = 0.0;   // correlation length, ion spacings
    double r_err = 0.0;
    int r_min = 0, r_max = 0;
    FitOutcome outcome = FitOutcome::converged;
};

// Nonlinear least squares of G(r) = A exp(-r/R) + B, weights sqrt(N_r).
CorrLengthFit fit_correlation_length(const CorrelationProfile& profile);

// CorrelationProfile CSV: `r,G,N_r,stderr`.
void write_correlation_csv(const std::string& path, const CorrelationProfile& profile);

}  // namespace kzmsim
