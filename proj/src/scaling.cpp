#include "kzmsim/scaling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "kzmsim/errors.hpp"
#include "kzmsim/fit.hpp"

namespace kzmsim {

SlopeFit fit_kzm_slope(const std::vector<ScalingPoint>& points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 2) throw InvalidInputError("fit_kzm_slope: need at least 2 points");

    double tmin = points.front().j0t, tmax = points.front().j0t;
    for (const auto& p : points) {
        if (!(p.j0t > 0.0)) throw InvalidInputError("fit_kzm_slope: |J0|T must be > 0");
        if (!(p.r_length > 0.0))
            throw InvalidInputError("fit_kzm_slope: correlation length must be > 0");
        tmin = std::min(tmin, p.j0t);
        tmax = std::max(tmax, p.j0t);
    }
    if (tmax < 2.0 * tmin)
        throw InvalidInputError("fit_kzm_slope: points must span a factor 2 in |J0|T");

    bool have_errors = true;
    for (const auto& p : points)
        if (!(p.r_err > 0.0)) { have_errors = false; break; }

    Eigen::VectorXd x(n), y(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x[i] = std::log(points[static_cast<std::size_t>(i)].j0t);
        y[i] = std::log(points[static_cast<std::size_t>(i)].r_length);
        if (have_errors) {
            const double sln = points[static_cast<std::size_t>(i)].r_err /
                               points[static_cast<std::size_t>(i)].r_length;
            w[i] = 1.0 / (sln * sln);
        } else {
            w[i] = 1.0;
        }
    }

    LinearFitResult lin = linear_fit(x, y, w, /*absolute_sigma=*/have_errors);
    SlopeFit out;
    out.mu = lin.slope;
    out.mu_err = lin.slope_err;
    out.intercept = lin.intercept;
    out.err_defined = lin.err_defined;
    out.reduced_chi2 = lin.dof > 0 ? lin.chi2 / lin.dof : 0.0;
    return out;
}

FssFit finite_size_extrapolation(const std::vector<MuPoint>& points) {
    const auto n = static_cast<Eigen::Index>(points.size());
    if (n < 4) throw InvalidInputError("finite_size_extrapolation: need >= 4 points");
    std::set<int> sizes;
    for (const auto& p : points) {
        if (p.n_ions < 2) throw InvalidInputError("finite_size_extrapolation: bad N");
        if (!(p.sigma_mu > 0.0))
            throw InvalidInputError("finite_size_extrapolation: sigma_mu must be > 0");
        sizes.insert(p.n_ions);
    }
    if (static_cast<Eigen::Index>(sizes.size()) != n)
        throw InvalidInputError("finite_size_extrapolation: duplicate N values");

    Eigen::VectorXd nn(n), mu(n), sigma(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        nn[i] = points[static_cast<std::size_t>(i)].n_ions;
        mu[i] = points[static_cast<std::size_t>(i)].mu;
        sigma[i] = points[static_cast<std::size_t>(i)].sigma_mu;
    }
    const Eigen::VectorXd w = sigma.array().square().inverse();
    const double wsum = w.sum();
    const double mu_wmean = (w.array() * mu.array()).sum() / wsum;

    FssFit out;

    // flat data make the 3-parameter model unidentifiable: pin a = 0
    const double weighted_var =
        (w.array() * (mu.array() - mu_wmean).square()).sum() / wsum;
    const double mean_sigma2 = sigma.array().square().mean();
    if (weighted_var < mean_sigma2) {
        out.outcome = FssOutcome::degenerate_flat;
        out.mu_inf = mu_wmean;
        out.mu_inf_err = std::sqrt(1.0 / wsum);
        out.a = 0.0;
        out.b = 0.0;
        out.chi2 = (w.array() * (mu.array() - mu_wmean).square()).sum();
        return out;
    }

    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < n; ++i)
            r[i] = (p[0] + p[1] * std::pow(nn[i], -p[2]) - mu[i]) / sigma[i];
    };

    // multi-start over the decay exponent; winner = lowest chi2, ties to
    // the smallest b
    const double starts[] = {0.5, 1.0, 2.0, 4.0};
    bool have_best = false;
    LmResult best;
    Eigen::Index i_nmin;
    nn.minCoeff(&i_nmin);
    for (double b0 : starts) {
        Eigen::VectorXd p0(3);
        p0 << mu_wmean, (mu[i_nmin] - mu_wmean) * std::pow(nn[i_nmin], b0), b0;
        LmResult lm = levenberg_marquardt(residual, p0, static_cast<int>(n));
        if (!lm.converged || !(lm.params[2] > 0.0)) continue;
        if (!have_best || lm.chi2 < best.chi2 - 1e-12 ||
            (std::abs(lm.chi2 - best.chi2) <= 1e-12 && lm.params[2] < best.params[2])) {
            best = lm;
            have_best = true;
        }
    }
    if (!have_best)
        throw NonConvergenceError(
            "finite_size_extrapolation: no start converged to a valid fit");

    out.mu_inf = best.params[0];
    out.a = best.params[1];
    out.b = best.params[2];
    out.chi2 = best.chi2;
    // errors from the local covariance at the optimum (sigma-weighted
    // residuals, so no chi2 rescaling)
    if (best.covariance.allFinite()) {
        out.mu_inf_err = std::sqrt(std::max(best.covariance(0, 0), 0.0));
        out.a_err = std::sqrt(std::max(best.covariance(1, 1), 0.0));
        out.b_err = std::sqrt(std::max(best.covariance(2, 2), 0.0));
        out.cov_mu_a = best.covariance(0, 1);
        out.cov_mu_b = best.covariance(0, 2);
        out.cov_a_b = best.covariance(1, 2);
    } else {
        out.mu_inf_err = out.a_err = out.b_err =
            std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

}  // namespace kzmsim
