// Lanczos iteration with full reorthogonalization for the lowest eigenpairs
// of a Hermitian operator given only through its action on a vector.

#pragma once

#include <Eigen/Dense>
#include <functional>

namespace kzmsim {

using MatVec = std::function<void(const Eigen::VectorXcd& in, Eigen::VectorXcd& out)>;

struct LanczosOptions {
    int n_eigenvalues = 2;
    int max_subspace = 320;     // per restart cycle
    int max_restarts = 6;       // fresh random restarts on Krylov exhaustion
    double tolerance = 1e-12;   // on the Ritz residual, relative to spectral scale
    std::uint64_t seed = 0x6b7a6d73696dULL;
};

struct LanczosResult {
    Eigen::VectorXd eigenvalues;   // ascending, size n_eigenvalues
    Eigen::MatrixXcd eigenvectors; // columns matching eigenvalues
    Eigen::VectorXd residuals;     // ||A v - lambda v|| per pair
    int iterations = 0;
    bool converged = false;
};

// `project`, when given, is applied to every Krylov vector to confine the
// iteration to an invariant subspace (removes roundoff leakage).
// `start`, when nonzero, seeds the first Krylov vector (warm start).
LanczosResult lanczos_lowest(const MatVec& apply, Eigen::Index dim,
                             const LanczosOptions& opt,
                             const std::function<void(Eigen::VectorXcd&)>& project = nullptr,
                             const Eigen::VectorXcd& start = {});

}  // namespace kzmsim
