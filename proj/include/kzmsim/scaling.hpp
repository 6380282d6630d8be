// Critical-exponent extraction: the R ~ T^mu slope per system size, and the
// finite-size extrapolation mu(N) = mu_inf + a N^(-b).

#pragma once

#include <vector>

namespace kzmsim {

struct ScalingPoint {
    int n_ions = 0;
    double j0t = 0.0;      // dimensionless quench time |J0| T
    double r_length = 0.0; // correlation length
    double r_err = 0.0;    // standard error; 0 means unknown (unit weights)
};

struct SlopeFit {
    double mu = 0.0;
    double mu_err = 0.0;        // NaN for 2-point fits
    double intercept = 0.0;     // ln R at ln(|J0|T) = 0
    double reduced_chi2 = 0.0;  // 0 when dof = 0
    bool err_defined = false;
};

// Weighted linear regression of ln R on ln(|J0|T); weights 1/sigma_lnR^2
// with sigma_lnR = sigma_R / R (unit weights when all errors are zero).
// Requires >= 2 points spanning at least a factor 2 in |J0|T (>= 3 points
// for a defined error bar).
SlopeFit fit_kzm_slope(const std::vector<ScalingPoint>& points);

struct MuPoint {
    int n_ions = 0;
    double mu = 0.0;
    double sigma_mu = 0.0;
};

enum class FssOutcome {
    converged,
    degenerate_flat,  // a pinned to 0, mu_inf = weighted mean
};

struct FssFit {
    double mu_inf = 0.0, mu_inf_err = 0.0;
    double a = 0.0, a_err = 0.0;
    double b = 0.0, b_err = 0.0;
    double chi2 = 0.0;
    double cov_mu_a = 0.0, cov_mu_b = 0.0, cov_a_b = 0.0;
    FssOutcome outcome = FssOutcome::converged;
};

// Weighted nonlinear least squares with multi-start over b in {0.5, 1, 2, 4};
// ties in chi2 resolved toward the smallest b. Flat input (weighted variance
// of mu below the mean sigma^2) pins a = 0. Throws NonConvergenceError when
// every start fails.
FssFit finite_size_extrapolation(const std::vector<MuPoint>& points);

}  // namespace kzmsim
