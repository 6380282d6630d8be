// Least-squares machinery shared by the fitting operations: weighted linear
// regression (closed form) and a small Levenberg-Marquardt driver for the
// nonlinear fits (correlation length, finite-size scaling, spectrum
// inversion).

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>

namespace kzmsim {

struct LinearFitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_err = std::numeric_limits<double>::quiet_NaN();
    double intercept_err = std::numeric_limits<double>::quiet_NaN();
    double chi2 = 0.0;       // weighted residual sum of squares
    int dof = 0;             // points - 2
    bool err_defined = false;  // false for 2-point fits
};

// Weighted least squares of y = intercept + slope * x.
// Weights w_i multiply squared residuals (w = 1/sigma^2 for known errors).
// Parameter errors come from the unscaled covariance (sigma taken at face
// value); for unit weights they are scaled by the residual variance instead.
LinearFitResult linear_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w, bool absolute_sigma);

// Residual callback: fills r (size m) with the sigma-scaled residuals at
// parameter vector p (size n).
using ResidualFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r)>;

struct LmOptions {
    int max_iterations = 200;
    double rel_tolerance = 1e-10;  // on step size and on chi2 decrease
    double initial_lambda = 1e-3;
    double jacobian_step = 1e-7;   // relative forward-difference step
};

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;  // (J^T J)^-1 at optimum (residuals pre-scaled by 1/sigma)
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Levenberg-Marquardt with a numerically differenced Jacobian.
// Returns the best iterate even when unconverged; callers decide whether to
// throw. Deterministic for fixed inputs.
LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd p0,
                             int residual_count, const LmOptions& opt = {});

}  // namespace kzmsim
