#include "kzmsim/chain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kzmsim/errors.hpp"
#include "kzmsim/fit.hpp"
#include "kzmsim/units.hpp"

namespace kzmsim {

void TrapParams::validate() const {
    if (ion_count < 1) throw InvalidInputError("trap: ion_count must be >= 1");
    if (!(axial_freq > 0.0)) throw InvalidInputError("trap: axial_freq must be > 0");
    if (!(ion_mass > 0.0)) throw InvalidInputError("trap: ion_mass must be > 0");
    if (!(charge > 0.0)) throw InvalidInputError("trap: charge must be > 0");
    if (!transverse_profile.empty() &&
        static_cast<int>(transverse_profile.size()) != ion_count)
        throw InvalidInputError("trap: transverse_profile size must equal ion_count");
    for (int i = 0; i < ion_count; ++i) {
        if (!(transverse_freq_at(i) > axial_freq))
            throw InvalidInputError(
                "trap: transverse frequency must exceed axial frequency (linear chain)");
    }
}

double coulomb_length_scale(const TrapParams& trap) {
    const double q2k = trap.charge * trap.charge * kCoulombConstant;
    return std::cbrt(q2k / (trap.ion_mass * trap.axial_freq * trap.axial_freq));
}

namespace {

// gradient of v(x) = sum x_i^2/2 + c4 x_i^4/4 + sum_{i<j} 1/|x_i-x_j|
void dimensionless_gradient(const Eigen::VectorXd& x, double c4, Eigen::VectorXd& g) {
    const auto n = x.size();
    g = x + c4 * x.array().cube().matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = x[i] - x[j];
            const double f = std::copysign(1.0 / (d * d), d);
            // d/dx_i 1/|x_i - x_j| = -sign(x_i - x_j)/(x_i - x_j)^2
            g[i] -= f;
            g[j] += f;
        }
    }
}

void dimensionless_hessian(const Eigen::VectorXd& x, double c4, Eigen::MatrixXd& h) {
    const auto n = x.size();
    h.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) h(i, i) = 1.0 + 3.0 * c4 * x[i] * x[i];
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = std::abs(x[i] - x[j]);
            const double f = 2.0 / (d * d * d);
            h(i, i) += f;
            h(j, j) += f;
            h(i, j) -= f;
            h(j, i) -= f;
        }
    }
}

Eigen::VectorXd solve_equilibrium(int n, double c4) {
    if (n == 1) return Eigen::VectorXd::Zero(1);

    // uniform grid spanning +-0.6 N^0.6 is a robust start for N <= 64
    const double half_span = 0.6 * std::pow(static_cast<double>(n), 0.6);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i)
        x[i] = -half_span + 2.0 * half_span * i / (n - 1);

    Eigen::VectorXd g, x_try, g_try;
    Eigen::MatrixXd h;
    const int max_iter = 200;
    dimensionless_gradient(x, c4, g);
    for (int iter = 0; iter < max_iter; ++iter) {
        double gmax = g.cwiseAbs().maxCoeff();
        if (gmax < 1e-13) return x;
        dimensionless_hessian(x, c4, h);
        Eigen::VectorXd step = h.ldlt().solve(-g);
        double damp = 1.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            x_try = x + damp * step;
            bool ordered = true;
            for (int i = 1; i < n; ++i)
                if (!(x_try[i] > x_try[i - 1])) { ordered = false; break; }
            if (ordered) {
                dimensionless_gradient(x_try, c4, g_try);
                if (g_try.cwiseAbs().maxCoeff() < gmax) {
                    x = x_try;
                    g = g_try;
                    accepted = true;
                    break;
                }
            }
            damp *= 0.5;
        }
        if (!accepted) {
            // roundoff floor: accept if the contract still holds
            if (gmax < 5e-13) return x;
            std::ostringstream msg;
            msg << "equilibrium_positions: stalled at residual " << gmax << " after "
                << iter << " iterations";
            throw NonConvergenceError(msg.str());
        }
    }
    dimensionless_gradient(x, c4, g);
    std::ostringstream msg;
    msg << "equilibrium_positions: no convergence after " << max_iter
        << " iterations, residual " << g.cwiseAbs().maxCoeff();
    throw NonConvergenceError(msg.str());
}

}  // namespace

IonChain equilibrium_positions(const TrapParams& trap) {
    trap.validate();
    IonChain chain;
    chain.length_scale = coulomb_length_scale(trap);
    chain.positions = solve_equilibrium(trap.ion_count, trap.quartic) * chain.length_scale;
    return chain;
}

double force_balance_residual(const IonChain& chain, const TrapParams& trap) {
    Eigen::VectorXd x = chain.positions / chain.length_scale;
    Eigen::VectorXd g;
    dimensionless_gradient(x, trap.quartic, g);
    return g.cwiseAbs().maxCoeff();
}

ModeSpectrum transverse_modes(const IonChain& chain, const TrapParams& trap) {
    const auto n = chain.positions.size();
    if (n != trap.ion_count)
        throw InvalidInputError("transverse_modes: chain size differs from trap ion_count");
    for (Eigen::Index i = 1; i < n; ++i)
        if (!(chain.positions[i] > chain.positions[i - 1]))
            throw InvalidInputError("transverse_modes: positions must be strictly increasing");

    const double wz2 = trap.axial_freq * trap.axial_freq;
    const double l3 = std::pow(chain.length_scale, 3);

    Eigen::MatrixXd a(n, n);
    a.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double wx = trap.transverse_freq_at(static_cast<int>(i));
        a(i, i) = wx * wx;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double d = std::abs(chain.positions[i] - chain.positions[j]);
            const double c = wz2 * l3 / (d * d * d);
            a(i, j) = c;
            a(j, i) = c;
            a(i, i) -= c;
            a(j, j) -= c;
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success)
        throw NonConvergenceError("transverse_modes: eigensolver failed");

    const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
    for (Eigen::Index k = 0; k < n; ++k) {
        if (evals[k] <= 0.0) {
            std::ostringstream msg;
            msg << "transverse_modes: unstable chain, mode " << k
                << " has omega^2 = " << evals[k]
                << " (transverse confinement too weak)";
            throw StructuralInstabilityError(msg.str());
        }
    }

    ModeSpectrum spec;
    spec.frequencies.resize(n);
    spec.mode_vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index src = n - 1 - k;  // descending frequency order
        spec.frequencies[k] = std::sqrt(evals[src]);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        // deterministic sign: largest-|component| entry positive
        Eigen::Index imax;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0.0) v = -v;
        spec.mode_vectors.col(k) = v;
    }
    return spec;
}

namespace {

Eigen::VectorXd sorted_descending(const std::vector<double>& v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    std::vector<double> tmp = v;
    std::sort(tmp.begin(), tmp.end(), std::greater<double>());
    for (std::size_t i = 0; i < tmp.size(); ++i) out[static_cast<Eigen::Index>(i)] = tmp[i];
    return out;
}

}  // namespace

SpectrumFit fit_positions_from_spectrum(const std::vector<double>& measured,
                                        const TrapParams& trap_guess,
                                        SpectrumFitModel model) {
    trap_guess.validate();
    const int n = trap_guess.ion_count;
    const int m = static_cast<int>(measured.size());
    if (m < 1) throw InvalidInputError("spectrum fit: no measured frequencies");
    if (m > n)
        throw InvalidInputError("spectrum fit: more measured frequencies than modes");
    for (double w : measured)
        if (!(w > 0.0)) throw InvalidInputError("spectrum fit: frequencies must be positive");

    SpectrumFit out;
    out.fitted_trap = trap_guess;

    if (n == 1) {
        out.chain.length_scale = coulomb_length_scale(trap_guess);
        out.chain.positions = Eigen::VectorXd::Zero(1);
        ModeSpectrum spec = transverse_modes(out.chain, trap_guess);
        out.residuals = spec.frequencies.head(m) - sorted_descending(measured);
        out.rms_residual = std::sqrt(out.residuals.squaredNorm() / m);
        return out;
    }

    const Eigen::VectorXd target = sorted_descending(measured);
    const int n_params = (model == SpectrumFitModel::axial_quartic) ? 2 : n;
    if (m < n_params) {
        std::ostringstream msg;
        msg << "spectrum fit: underdetermined, " << m << " measured modes for "
            << n_params << " free parameters";
        throw InvalidInputError(msg.str());
    }

    if (model == SpectrumFitModel::axial_quartic) {
        // parameters: p0 = ln(omega_z / guess), p1 = quartic coefficient
        auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
            TrapParams t = trap_guess;
            t.axial_freq = trap_guess.axial_freq * std::exp(p[0]);
            t.quartic = p[1];
            try {
                IonChain c = equilibrium_positions(t);
                ModeSpectrum s = transverse_modes(c, t);
                r = s.frequencies.head(m) - target;
            } catch (const Error&) {
                r.setConstant(m, 1e6 * trap_guess.axial_freq);
            }
        };
        Eigen::VectorXd p0(2);
        p0 << 0.0, trap_guess.quartic;
        LmOptions opt;
        opt.jacobian_step = 1e-6;
        LmResult lm = levenberg_marquardt(residual, p0, m, opt);
        if (!lm.converged) {
            std::ostringstream msg;
            msg << "spectrum fit: optimizer did not converge, chi2=" << lm.chi2
                << " at omega_z=" << trap_guess.axial_freq * std::exp(lm.params[0])
                << " quartic=" << lm.params[1];
            throw NonConvergenceError(msg.str());
        }
        out.fitted_trap.axial_freq = trap_guess.axial_freq * std::exp(lm.params[0]);
        out.fitted_trap.quartic = lm.params[1];
        out.chain = equilibrium_positions(out.fitted_trap);
        ModeSpectrum s = transverse_modes(out.chain, out.fitted_trap);
        out.residuals = s.frequencies.head(m) - target;
        out.rms_residual = std::sqrt(out.residuals.squaredNorm() / m);
        return out;
    }

    // raw positions: dimensionless coordinates, initialized from the
    // harmonic equilibrium of the guess trap
    const double l = coulomb_length_scale(trap_guess);
    IonChain init = equilibrium_positions(trap_guess);
    Eigen::VectorXd p0 = init.positions / l;
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (Eigen::Index i = 1; i < p.size(); ++i) {
            if (!(p[i] > p[i - 1])) {
                r.setConstant(m, 1e6 * trap_guess.axial_freq);
                return;
            }
        }
        IonChain c;
        c.length_scale = l;
        c.positions = p * l;
        try {
            ModeSpectrum s = transverse_modes(c, trap_guess);
            r = s.frequencies.head(m) - target;
        } catch (const Error&) {
            r.setConstant(m, 1e6 * trap_guess.axial_freq);
        }
    };
    LmOptions opt;
    opt.jacobian_step = 1e-6;
    LmResult lm = levenberg_marquardt(residual, p0, m, opt);
    if (!lm.converged)
        throw NonConvergenceError("spectrum fit: position optimizer did not converge, chi2=" +
                                  std::to_string(lm.chi2));
    out.chain.length_scale = l;
    out.chain.positions = lm.params * l;
    ModeSpectrum s = transverse_modes(out.chain, trap_guess);
    out.residuals = s.frequencies.head(m) - target;
    out.rms_residual = std::sqrt(out.residuals.squaredNorm() / m);
    return out;
}

std::vector<double> load_spectrum_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open spectrum file: " + path);
    std::vector<double> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        double f;
        if (ss >> f) {
            if (!(f > 0.0))
                throw MalformedDataError("spectrum file " + path + " line " +
                                         std::to_string(lineno) + ": frequency must be > 0");
            out.push_back(hz_to_angular(f));
            std::string rest;
            if (ss >> rest)
                throw MalformedDataError("spectrum file " + path + " line " +
                                         std::to_string(lineno) + ": trailing tokens");
        } else if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
            throw MalformedDataError("spectrum file " + path + " line " +
                                     std::to_string(lineno) + ": not a number");
        }
    }
    return out;
}

void write_positions_csv(const std::string& path, const IonChain& chain) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write positions file: " + path);
    out << "index,position_um\n";
    out.precision(12);
    for (Eigen::Index i = 0; i < chain.positions.size(); ++i)
        out << i << "," << chain.positions[i] * 1e6 << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace kzmsim
