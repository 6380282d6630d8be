#include "kzmsim/lanczos.hpp"

#include <cmath>
#include <vector>

#include "kzmsim/errors.hpp"
#include "kzmsim/rng.hpp"

namespace kzmsim {

namespace {

Eigen::VectorXcd random_vector(Eigen::Index dim, std::uint64_t seed, std::uint64_t stream) {
    CounterRng rng(seed, stream);
    Eigen::VectorXcd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i)
        v[i] = std::complex<double>(rng.next_double() - 0.5, rng.next_double() - 0.5);
    return v;
}

}  // namespace

LanczosResult lanczos_lowest(const MatVec& apply, Eigen::Index dim,
                             const LanczosOptions& opt,
                             const std::function<void(Eigen::VectorXcd&)>& project,
                             const Eigen::VectorXcd& start) {
    if (dim < 1) throw InvalidInputError("lanczos: empty operator");
    const int want = opt.n_eigenvalues;

    std::vector<Eigen::VectorXcd> basis;   // Lanczos vectors, orthonormal
    std::vector<double> alpha, beta;       // tridiagonal entries
    Eigen::VectorXcd w(dim), v(dim);

    // spectral scale estimate, updated as Ritz values appear
    double scale = 0.0;

    auto orthogonalize = [&](Eigen::VectorXcd& x) {
        // two passes of classical Gram-Schmidt against the whole basis
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis) x -= q.dot(x) * q;
    };

    LanczosResult out;
    int total_iters = 0;

    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        // seed vector: caller-provided on the first cycle, random afterwards
        Eigen::VectorXcd q;
        if (restart == 0 && start.size() == dim && start.norm() > 0.0)
            q = start;
        else
            q = random_vector(dim, opt.seed, static_cast<std::uint64_t>(restart) + 1);
        if (project) project(q);
        orthogonalize(q);
        double nq = q.norm();
        if (nq < 1e-12) continue;  // subspace exhausted for this seed
        q /= nq;

        basis.push_back(q);
        alpha.push_back(0.0);
        if (basis.size() > 1) beta.push_back(0.0);  // zero coupling across restarts

        const std::size_t cycle_start = basis.size() - 1;
        for (std::size_t j = cycle_start; basis.size() < static_cast<std::size_t>(opt.max_subspace);
             ++j) {
            ++total_iters;
            apply(basis[j], w);
            if (project) project(w);
            alpha[j] = basis[j].dot(w).real();
            // full reorthogonalization keeps the tridiagonal honest
            orthogonalize(w);
            const double b = w.norm();

            // assemble the (block-)tridiagonal and test Ritz convergence
            const auto m = static_cast<Eigen::Index>(basis.size());
            Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index i = 0; i < m; ++i) t(i, i) = alpha[static_cast<std::size_t>(i)];
            for (Eigen::Index i = 0; i + 1 < m; ++i) {
                t(i, i + 1) = beta[static_cast<std::size_t>(i)];
                t(i + 1, i) = beta[static_cast<std::size_t>(i)];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
            const Eigen::VectorXd theta = es.eigenvalues();
            scale = std::max({scale, std::abs(theta[0]), std::abs(theta[m - 1])});
            const double tol_abs = opt.tolerance * std::max(scale, 1e-300);

            if (m >= want) {
                bool all_ok = true;
                for (int k = 0; k < want; ++k) {
                    const double res = b * std::abs(es.eigenvectors()(m - 1, k));
                    if (res > tol_abs) { all_ok = false; break; }
                }
                if (all_ok) {
                    // confirm with true residuals before accepting
                    Eigen::MatrixXcd ritz(dim, want);
                    Eigen::VectorXd true_res(want);
                    Eigen::VectorXcd av(dim);
                    bool confirmed = true;
                    for (int k = 0; k < want; ++k) {
                        Eigen::VectorXcd y = Eigen::VectorXcd::Zero(dim);
                        for (Eigen::Index i = 0; i < m; ++i)
                            y += es.eigenvectors()(i, k) * basis[static_cast<std::size_t>(i)];
                        y.normalize();
                        ritz.col(k) = y;
                        apply(y, av);
                        if (project) project(av);
                        true_res[k] = (av - theta[k] * y).norm();
                        if (true_res[k] > 10.0 * tol_abs) confirmed = false;
                    }
                    if (confirmed) {
                        out.eigenvalues = theta.head(want);
                        out.eigenvectors = ritz;
                        out.residuals = true_res;
                        out.iterations = total_iters;
                        out.converged = true;
                        return out;
                    }
                }
            }

            if (b < std::max(1e-14 * std::max(scale, 1.0), 1e-300)) break;  // exhausted
            w /= b;
            basis.push_back(w);
            alpha.push_back(0.0);
            beta.push_back(b);
        }
        if (basis.size() >= static_cast<std::size_t>(opt.max_subspace)) break;
    }

    // Krylov space exhausted (invariant subspace smaller than requested count):
    // report what the subspace supports, or fail if truly short
    const auto m = static_cast<Eigen::Index>(basis.size());
    if (m >= want) {
        Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i) t(i, i) = alpha[static_cast<std::size_t>(i)];
        for (Eigen::Index i = 0; i + 1 < m; ++i) {
            t(i, i + 1) = beta[static_cast<std::size_t>(i)];
            t(i + 1, i) = beta[static_cast<std::size_t>(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
        out.eigenvalues = es.eigenvalues().head(want);
        out.eigenvectors.setZero(dim, want);
        out.residuals.resize(want);
        Eigen::VectorXcd av(dim);
        bool ok = true;
        for (int k = 0; k < want; ++k) {
            Eigen::VectorXcd y = Eigen::VectorXcd::Zero(dim);
            for (Eigen::Index i = 0; i < m; ++i)
                y += es.eigenvectors()(i, k) * basis[static_cast<std::size_t>(i)];
            y.normalize();
            out.eigenvectors.col(k) = y;
            apply(y, av);
            out.residuals[k] = (av - out.eigenvalues[k] * y).norm();
            if (out.residuals[k] > 1e-9 * std::max(scale, 1.0)) ok = false;
        }
        out.iterations = total_iters;
        out.converged = ok;
        if (ok) return out;
    }
    throw NonConvergenceError(
        "lanczos: no convergence after " + std::to_string(total_iters) +
        " iterations (best residual " +
        std::to_string(out.residuals.size() ? out.residuals.minCoeff() : -1.0) + ")");
}

}  // namespace kzmsim
