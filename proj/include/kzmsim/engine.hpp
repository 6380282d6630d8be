// State-vector evolution of the long-range transverse-field Ising model
// under configurable quench schedules.
//
// Conventions:
//   - basis index n enumerates z-basis spin configurations, ion 0 is the
//     least significant bit; bit value 0 means sigma_z = +1;
//   - hardware Hamiltonian H = sum_{i<j} J_ij X_i X_j + sum_i B_i(t) Y_i
//     with the coupling matrix in the AFM convention (J_{i,i+1} > 0);
//   - the FM protocol evolves under -H starting from |up_y ... up_y>, the
//     AFM protocol under +H starting from |down_y ... down_y>.

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "kzmsim/coupling.hpp"
#include "kzmsim/interp.hpp"

namespace kzmsim {

inline constexpr int kDefaultSpinCap = 14;
inline constexpr int kHardSpinCap = 20;

struct SpinState {
    int n_spins = 0;
    Eigen::VectorXcd amplitudes;  // length 2^n_spins

    double norm() const { return amplitudes.norm(); }
    Eigen::Index dim() const { return amplitudes.size(); }
};

enum class SpinDirection { up_y, down_y };
enum class HamiltonianSign { fm, afm };  // fm: evolve -H, afm: +H

// Tensor product of single-spin sigma_y eigenstates. Throws ResourceError
// above the cap; sizes above kDefaultSpinCap attach a memory note to the
// returned state only via the caller-visible warning string.
SpinState initial_state(int n_spins, SpinDirection dir, int max_spins = kDefaultSpinCap,
                        std::string* memory_warning = nullptr);

enum class ScheduleKind { linear, exponential, local_adiabatic };

struct QuenchSchedule {
    ScheduleKind kind = ScheduleKind::exponential;
    double b0 = 0.0;         // rad/s
    double total_time = 0.0; // s
    double tau = 0.0;        // s; exponential only (default T/5)
    Eigen::VectorXd field_profile;  // per-ion multiplier, empty = uniform
    HamiltonianSign sign = HamiltonianSign::fm;
    PchipInterpolant la_table;      // B(t) knots for local_adiabatic

    double field_multiplier(int ion) const {
        return field_profile.size() == 0 ? 1.0 : field_profile[ion];
    }
};

QuenchSchedule linear_schedule(double b0, double total_time, HamiltonianSign sign);
QuenchSchedule exponential_schedule(double b0, double total_time, HamiltonianSign sign,
                                    double tau = 0.0);  // tau <= 0 means T/5

// B(t); throws outside [0, total_time].
double schedule_value(const QuenchSchedule& s, double t);

struct GapResult {
    double gap = 0.0;  // rad/s
    bool near_degenerate = false;  // gap below 1e-6 * max|J|
};

// E1 - E0 of the evolving Hamiltonian (-H for FM, +H for AFM) within the
// global-parity sector of the protocol's initial state (full spectrum for
// a single spin, whose parity sectors are one-dimensional).
GapResult energy_gap(const CouplingMatrix& j, double b, HamiltonianSign sign);

struct GapProfile {
    Eigen::VectorXd field_grid;  // descending, covers [0, b0]
    Eigen::VectorXd gaps;        // rad/s, all > 0
};

GapProfile compute_gap_profile(const CouplingMatrix& j, double b0, HamiltonianSign sign,
                               int grid_points = 64);

// Quench path with dB/dt = -c Delta^2(B), c fixed so B(0)=b0 and B(T)=0.
QuenchSchedule local_adiabatic_schedule(const CouplingMatrix& j, double b0,
                                        double total_time, int grid_points,
                                        HamiltonianSign sign);
// Same, reusing a precomputed gap profile (shared across a T sweep).
QuenchSchedule local_adiabatic_schedule(const GapProfile& profile, double b0,
                                        double total_time, HamiltonianSign sign);

struct EvolveOptions {
    double tolerance = 1e-9;          // relative local error per step
    double norm_drift_budget = 1e-8;  // enforced across the whole run
};

struct Snapshot {
    double time = 0.0;
    SpinState state;
};

struct EvolveResult {
    std::vector<Snapshot> snapshots;  // at the requested times, ascending
    long accepted_steps = 0;
    long rejected_steps = 0;
    double norm_drift = 0.0;          // | ||psi(T)|| - 1 |
    std::vector<std::string> warnings;
};

// Integrates i d|psi>/dt = sign * H(t) |psi> with an embedded adaptive
// Runge-Kutta 5(4) pair; the Hamiltonian is applied matrix-free. The
// snapshot at total_time is always included.
EvolveResult evolve(const SpinState& initial, const CouplingMatrix& j,
                    const QuenchSchedule& schedule, double tolerance,
                    std::vector<double> snapshot_times = {});
EvolveResult evolve(const SpinState& initial, const CouplingMatrix& j,
                    const QuenchSchedule& schedule, const EvolveOptions& options,
                    std::vector<double> snapshot_times = {});

// Matrix-free action out += scale * H(b) * in with H the hardware
// Hamiltonian above; exposed for the eigensolver and the test oracles.
class HamiltonianAction {
  public:
    HamiltonianAction(const CouplingMatrix& j, const Eigen::VectorXd& field_profile);

    int n_spins() const { return n_; }
    Eigen::Index dim() const { return Eigen::Index{1} << n_; }

    // out = (sum J X X + b * sum profile_i Y_i) in
    void apply(const Eigen::VectorXcd& in, Eigen::VectorXcd& out, double b) const;

    // upper bound on the spectral radius, used for step-size heuristics
    double norm_bound(double b) const;

  private:
    int n_ = 0;
    std::vector<std::uint32_t> pair_masks_;
    std::vector<double> pair_weights_;
    Eigen::VectorXd field_;  // per-ion multiplier
};

// Global parity P = tensor_i sigma_y^i; returns P|psi> in place.
void apply_global_parity(SpinState& psi);

// Snapshot export: 16-byte header {magic "KZSV", version u16, N u16,
// 8 reserved bytes}, then 2^N little-endian complex doubles.
void write_state_snapshot(const std::string& path, const SpinState& state);
SpinState read_state_snapshot(const std::string& path);

}  // namespace kzmsim
