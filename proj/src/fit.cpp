#include "kzmsim/fit.hpp"

#include <cmath>

#include "kzmsim/errors.hpp"

namespace kzmsim {

LinearFitResult linear_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w, bool absolute_sigma) {
    const auto n = x.size();
    if (n < 2 || y.size() != n || w.size() != n)
        throw InvalidInputError("linear_fit: need >= 2 points with matching weights");
    if ((w.array() <= 0.0).any())
        throw InvalidInputError("linear_fit: weights must be positive");

    const double sw = w.sum();
    const double xbar = (w.array() * x.array()).sum() / sw;
    const double ybar = (w.array() * y.array()).sum() / sw;
    const double sxx = (w.array() * (x.array() - xbar).square()).sum();
    if (sxx <= 0.0)
        throw InvalidInputError("linear_fit: degenerate abscissae (zero spread)");
    const double sxy = (w.array() * (x.array() - xbar) * (y.array() - ybar)).sum();

    LinearFitResult out;
    out.slope = sxy / sxx;
    out.intercept = ybar - out.slope * xbar;
    out.chi2 =
        (w.array() * (y.array() - out.intercept - out.slope * x.array()).square()).sum();
    out.dof = static_cast<int>(n) - 2;

    if (out.dof >= 1 || absolute_sigma) {
        double var_scale = 1.0;
        if (!absolute_sigma) var_scale = out.chi2 / out.dof;
        out.slope_err = std::sqrt(var_scale / sxx);
        out.intercept_err = std::sqrt(var_scale * (1.0 / sw + xbar * xbar / sxx));
        out.err_defined = true;
    }
    if (out.dof < 1 && !absolute_sigma) {
        // exact 2-point fit: error bars undefined
        out.err_defined = false;
        out.slope_err = std::numeric_limits<double>::quiet_NaN();
        out.intercept_err = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

namespace {

Eigen::MatrixXd numeric_jacobian(const ResidualFn& fn, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& r0, double rel_step) {
    const auto n = p.size();
    const auto m = r0.size();
    Eigen::MatrixXd jac(m, n);
    Eigen::VectorXd pp = p, r1(m);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = rel_step * std::max(std::abs(p[j]), 1.0);
        pp[j] = p[j] + h;
        fn(pp, r1);
        jac.col(j) = (r1 - r0) / h;
        pp[j] = p[j];
    }
    return jac;
}

}  // namespace

LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd p0,
                             int residual_count, const LmOptions& opt) {
    const auto n = p0.size();
    Eigen::VectorXd r(residual_count);
    fn(p0, r);
    double chi2 = r.squaredNorm();
    double lambda = opt.initial_lambda;

    LmResult out;
    out.params = p0;
    out.chi2 = chi2;

    Eigen::MatrixXd jac;
    bool jac_fresh = false;
    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        out.iterations = iter + 1;
        if (!jac_fresh) {
            jac = numeric_jacobian(fn, p0, r, opt.jacobian_step);
            jac_fresh = true;
        }
        Eigen::MatrixXd jtj = jac.transpose() * jac;
        Eigen::VectorXd jtr = jac.transpose() * r;

        bool stepped = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
            Eigen::VectorXd step = a.ldlt().solve(-jtr);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            Eigen::VectorXd pt = p0 + step;
            Eigen::VectorXd rt(residual_count);
            fn(pt, rt);
            const double chi2_t = rt.squaredNorm();
            if (std::isfinite(chi2_t) && chi2_t <= chi2) {
                const double rel_step =
                    step.cwiseQuotient(p0.cwiseAbs().cwiseMax(1.0)).cwiseAbs().maxCoeff();
                const double rel_drop = (chi2 - chi2_t) / std::max(chi2, 1e-300);
                p0 = pt;
                r = rt;
                chi2 = chi2_t;
                jac_fresh = false;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                // a damped (large-lambda) step is short by construction;
                // only an undamped short step signals a stationary point
                if ((lambda <= opt.initial_lambda &&
                     (rel_step < opt.rel_tolerance || rel_drop < opt.rel_tolerance)) ||
                    chi2 < 1e-300) {
                    out.converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
        out.params = p0;
        out.chi2 = chi2;
        if (out.converged || !stepped) break;
    }

    // converged if the loop stalled at an (approximate) stationary point:
    // no descent direction found even with heavy damping
    if (!out.converged) {
        jac = numeric_jacobian(fn, p0, r, opt.jacobian_step);
        const double grad_norm = (jac.transpose() * r).norm();
        if (grad_norm <= 1e-8 * std::max(1.0, std::sqrt(chi2))) out.converged = true;
    } else {
        jac = numeric_jacobian(fn, p0, r, opt.jacobian_step);
    }

    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (lu.isInvertible()) {
        out.covariance = lu.inverse();
    } else {
        out.covariance =
            Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

}  // namespace kzmsim
