#include "oracle.hpp"

#include <algorithm>
#include <complex>
#include <vector>

namespace kzmsim::oracle {

using Complex = std::complex<double>;

Eigen::MatrixXcd dense_site_op(int n_spins, int ion, const Eigen::Matrix2cd& op) {
    const Eigen::Index d = Eigen::Index{1} << n_spins;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(d, d);
    const Eigen::Index bit = Eigen::Index{1} << ion;
    for (Eigen::Index col = 0; col < d; ++col) {
        const int b = (col & bit) ? 1 : 0;  // z-basis: bit 0 = |0> = spin up
        for (int row_b = 0; row_b < 2; ++row_b) {
            const Complex v = op(row_b, b);
            if (v != Complex(0, 0)) {
                const Eigen::Index row = row_b ? (col | bit) : (col & ~bit);
                out(row, col) += v;
            }
        }
    }
    return out;
}

Eigen::MatrixXcd dense_hamiltonian(const CouplingMatrix& j, double b) {
    const int n = j.size();
    const Eigen::Index d = Eigen::Index{1} << n;
    Eigen::Matrix2cd sx, sy;
    sx << 0, 1, 1, 0;
    sy << 0, Complex(0, -1), Complex(0, 1), 0;

    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(d, d);
    for (int a = 0; a < n; ++a) {
        for (int c = a + 1; c < n; ++c) {
            if (j.values(a, c) == 0.0) continue;
            h += j.values(a, c) * (dense_site_op(n, a, sx) * dense_site_op(n, c, sx));
        }
    }
    if (b != 0.0)
        for (int a = 0; a < n; ++a) h += b * dense_site_op(n, a, sy);
    return h;
}

SpinState evolve_dense(const SpinState& initial, const CouplingMatrix& j,
                       const QuenchSchedule& schedule, int steps) {
    const int n = initial.n_spins;
    const double sign = (schedule.sign == HamiltonianSign::fm) ? -1.0 : 1.0;
    const Eigen::MatrixXcd h_j = dense_hamiltonian(j, 0.0);
    Eigen::Matrix2cd sy;
    sy << 0, Complex(0, -1), Complex(0, 1), 0;
    Eigen::MatrixXcd h_b = Eigen::MatrixXcd::Zero(h_j.rows(), h_j.cols());
    for (int a = 0; a < n; ++a)
        h_b += schedule.field_multiplier(a) * dense_site_op(n, a, sy);

    const double dt = schedule.total_time / steps;
    Eigen::VectorXcd psi = initial.amplitudes;
    for (int s = 0; s < steps; ++s) {
        const double tmid = (s + 0.5) * dt;
        const double bval = schedule_value(schedule, std::min(tmid, schedule.total_time));
        const Eigen::MatrixXcd h = sign * (h_j + bval * h_b);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
        Eigen::VectorXcd phases(es.eigenvalues().size());
        for (Eigen::Index k = 0; k < phases.size(); ++k)
            phases[k] = std::exp(Complex(0, -es.eigenvalues()[k] * dt));
        psi = es.eigenvectors() *
              (phases.asDiagonal() * (es.eigenvectors().adjoint() * psi));
    }
    SpinState out;
    out.n_spins = n;
    out.amplitudes = psi;
    return out;
}

SpinState evolve_dense_converged(const SpinState& initial, const CouplingMatrix& j,
                                 const QuenchSchedule& schedule, double tol,
                                 int start_steps) {
    int steps = start_steps;
    SpinState prev = evolve_dense(initial, j, schedule, steps);
    for (int round = 0; round < 8; ++round) {
        steps *= 2;
        SpinState next = evolve_dense(initial, j, schedule, steps);
        if ((next.amplitudes - prev.amplitudes).norm() < tol) return next;
        prev = std::move(next);
    }
    return prev;
}

double infidelity(const SpinState& a, const SpinState& b) {
    const Complex overlap = a.amplitudes.dot(b.amplitudes);
    return 1.0 - std::norm(overlap);
}

std::pair<double, double> sector_low_levels(const CouplingMatrix& j, double b,
                                            HamiltonianSign sign) {
    const int n = j.size();
    const double hsign = (sign == HamiltonianSign::fm) ? -1.0 : 1.0;
    const Eigen::MatrixXcd h = hsign * dense_hamiltonian(j, b);

    // parity of the protocol's initial state
    const int sector = (sign == HamiltonianSign::fm) ? +1 : ((n % 2 == 0) ? +1 : -1);

    // P = tensor sigma_y; build an explicit orthonormal basis of the sector
    // and diagonalize H restricted to it (robust under cross-sector
    // degeneracies)
    Eigen::Matrix2cd sy;
    sy << 0, Complex(0, -1), Complex(0, 1), 0;
    Eigen::MatrixXcd p = dense_site_op(n, 0, sy);
    for (int a = 1; a < n; ++a) p = dense_site_op(n, a, sy) * p;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ps(p);
    std::vector<Eigen::Index> cols;
    for (Eigen::Index k = 0; k < ps.eigenvalues().size(); ++k)
        if (ps.eigenvalues()[k] * sector > 0.5) cols.push_back(k);
    Eigen::MatrixXcd basis(p.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k)
        basis.col(static_cast<Eigen::Index>(k)) = ps.eigenvectors().col(cols[k]);

    const Eigen::MatrixXcd h_sector = basis.adjoint() * h * basis;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h_sector);
    return {es.eigenvalues()[0], es.eigenvalues()[1]};
}

}  // namespace kzmsim::oracle
