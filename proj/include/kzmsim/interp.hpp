// Shape-preserving cubic Hermite interpolation (Fritsch-Carlson / PCHIP).
// Used for the local-adiabatic schedule tables; monotone data stay monotone.

#pragma once

#include <vector>

namespace kzmsim {

class PchipInterpolant {
  public:
    PchipInterpolant() = default;
    // x strictly increasing, sizes >= 2 and equal.
    PchipInterpolant(std::vector<double> x, std::vector<double> y);

    double operator()(double t) const;
    double derivative(double t) const;

    double x_front() const { return x_.front(); }
    double x_back() const { return x_.back(); }
    bool empty() const { return x_.empty(); }

    const std::vector<double>& knots_x() const { return x_; }
    const std::vector<double>& knots_y() const { return y_; }

  private:
    std::size_t segment(double t) const;

    std::vector<double> x_, y_, d_;  // knots and endpoint-slopes
};

}  // namespace kzmsim
