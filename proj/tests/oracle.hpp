// Test-only oracles: dense Hamiltonian construction and piecewise
// matrix-exponential time evolution. Independent of the engine's matrix-free
// kernel and integrator.

#pragma once

#include <Eigen/Dense>

#include "kzmsim/engine.hpp"

namespace kzmsim::oracle {

// dense H = sum_{i<j} J_ij X_i X_j + b sum_i Y_i  (z basis, ion 0 = LSB)
Eigen::MatrixXcd dense_hamiltonian(const CouplingMatrix& j, double b);

// dense single-site operator on ion i (N spins total)
Eigen::MatrixXcd dense_site_op(int n_spins, int ion, const Eigen::Matrix2cd& op);

// evolve with `steps` uniform midpoint matrix exponentials of the evolving
// Hamiltonian sign*(H_J + B(t) H_B)
SpinState evolve_dense(const SpinState& initial, const CouplingMatrix& j,
                       const QuenchSchedule& schedule, int steps);

// same, doubling steps until two consecutive answers agree to `tol` in norm
SpinState evolve_dense_converged(const SpinState& initial, const CouplingMatrix& j,
                                 const QuenchSchedule& schedule, double tol,
                                 int start_steps = 250);

// |<a|b>|^2 deficit
double infidelity(const SpinState& a, const SpinState& b);

// lowest two eigenvalues of sign*H restricted to the parity sector
// (dense diagonalization + sector classification)
std::pair<double, double> sector_low_levels(const CouplingMatrix& j, double b,
                                            HamiltonianSign sign);

}  // namespace kzmsim::oracle
