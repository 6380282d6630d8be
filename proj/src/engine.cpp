#include "kzmsim/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kzmsim/errors.hpp"
#include "kzmsim/lanczos.hpp"

namespace kzmsim {

using Complex = std::complex<double>;

SpinState initial_state(int n_spins, SpinDirection dir, int max_spins,
                        std::string* memory_warning) {
    if (n_spins < 1) throw InvalidInputError("initial_state: need at least one spin");
    const int cap = std::min(max_spins, kHardSpinCap);
    if (n_spins > cap) {
        const double bytes = 16.0 * std::pow(2.0, n_spins);
        std::ostringstream msg;
        msg << "initial_state: " << n_spins << " spins exceed the cap of " << cap
            << " (state vector alone needs " << bytes / (1024.0 * 1024.0) << " MiB)";
        throw ResourceError(msg.str());
    }
    if (n_spins > kDefaultSpinCap && memory_warning) {
        std::ostringstream msg;
        msg << "state vector of " << n_spins << " spins uses "
            << 16.0 * std::pow(2.0, n_spins) / (1024.0 * 1024.0)
            << " MiB; integrator working set is ~10x that";
        *memory_warning = msg.str();
    }

    const Eigen::Index dim = Eigen::Index{1} << n_spins;
    SpinState psi;
    psi.n_spins = n_spins;
    psi.amplitudes.resize(dim);
    // |up_y>   = (|0> + i|1>)/sqrt2 per site -> amp(n) = i^popcount(n) / 2^(N/2)
    // |down_y> = (|0> - i|1>)/sqrt2 per site -> amp(n) = (-i)^popcount(n) / 2^(N/2)
    const double scale = std::pow(2.0, -0.5 * n_spins);
    const Complex unit = (dir == SpinDirection::up_y) ? Complex(0, 1) : Complex(0, -1);
    const Complex powers[4] = {Complex(1, 0), unit, unit * unit, unit * unit * unit};
    for (Eigen::Index n = 0; n < dim; ++n) {
        const int p = std::popcount(static_cast<std::uint64_t>(n)) & 3;
        psi.amplitudes[n] = scale * powers[p];
    }
    return psi;
}

QuenchSchedule linear_schedule(double b0, double total_time, HamiltonianSign sign) {
    if (!(b0 >= 0.0) || !(total_time > 0.0))
        throw InvalidInputError("linear_schedule: need b0 >= 0 and T > 0");
    QuenchSchedule s;
    s.kind = ScheduleKind::linear;
    s.b0 = b0;
    s.total_time = total_time;
    s.sign = sign;
    return s;
}

QuenchSchedule exponential_schedule(double b0, double total_time, HamiltonianSign sign,
                                    double tau) {
    if (!(b0 >= 0.0) || !(total_time > 0.0))
        throw InvalidInputError("exponential_schedule: need b0 >= 0 and T > 0");
    QuenchSchedule s;
    s.kind = ScheduleKind::exponential;
    s.b0 = b0;
    s.total_time = total_time;
    s.tau = (tau > 0.0) ? tau : total_time / 5.0;
    s.sign = sign;
    return s;
}

double schedule_value(const QuenchSchedule& s, double t) {
    if (t < 0.0 || t > s.total_time)
        throw InvalidInputError("schedule_value: t outside [0, T]");
    switch (s.kind) {
        case ScheduleKind::linear:
            return s.b0 * (1.0 - t / s.total_time);
        case ScheduleKind::exponential: {
            // B(T) = 0 exactly by construction
            return s.b0 * (std::exp(-t / s.tau) - std::exp(-s.total_time / s.tau));
        }
        case ScheduleKind::local_adiabatic:
            if (s.la_table.empty())
                throw InvalidInputError("schedule_value: local-adiabatic table missing");
            if (t <= s.la_table.x_front()) return s.b0;
            if (t >= s.la_table.x_back()) return 0.0;
            return s.la_table(t);
    }
    throw InternalError("schedule_value: unknown schedule kind");
}

// ---------------------------------------------------------------------------
// matrix-free Hamiltonian action

HamiltonianAction::HamiltonianAction(const CouplingMatrix& j,
                                     const Eigen::VectorXd& field_profile) {
    const int n = j.size();
    if (n < 1 || n > kHardSpinCap)
        throw InvalidInputError("HamiltonianAction: unsupported spin count");
    if (field_profile.size() != 0 && field_profile.size() != n)
        throw InvalidInputError("HamiltonianAction: field profile size mismatch");
    n_ = n;
    field_ = field_profile.size() ? field_profile : Eigen::VectorXd::Ones(n);
    for (int i = 0; i < n; ++i) {
        for (int k = i + 1; k < n; ++k) {
            const double w = j.values(i, k);
            if (w != 0.0) {
                pair_masks_.push_back((1u << i) | (1u << k));
                pair_weights_.push_back(w);
            }
        }
    }
}

void HamiltonianAction::apply(const Eigen::VectorXcd& in, Eigen::VectorXcd& out,
                              double b) const {
    const Eigen::Index d = dim();
    out.setZero(d);
    const Complex* src = in.data();
    Complex* dst = out.data();

    // sigma_x sigma_x pair flips: out[n] += w * in[n ^ mask]; runs of length
    // lowbit(mask) are contiguous in both arrays
    for (std::size_t p = 0; p < pair_masks_.size(); ++p) {
        const std::uint32_t mask = pair_masks_[p];
        const double w = pair_weights_[p];
        const Eigen::Index run = mask & (~mask + 1u);
        for (Eigen::Index base = 0; base < d; base += run) {
            const Eigen::Index partner = base ^ static_cast<Eigen::Index>(mask);
            for (Eigen::Index k = 0; k < run; ++k) dst[base + k] += w * src[partner + k];
        }
    }

    // sigma_y single flips with phase: for each ion i,
    //   out[lo] += -i b_i in[hi],  out[hi] += +i b_i in[lo]
    if (b != 0.0) {
        for (int i = 0; i < n_; ++i) {
            const double bi = b * field_[i];
            if (bi == 0.0) continue;
            const Eigen::Index step = Eigen::Index{1} << i;
            for (Eigen::Index base = 0; base < d; base += 2 * step) {
                for (Eigen::Index k = 0; k < step; ++k) {
                    const Eigen::Index lo = base + k;
                    const Eigen::Index hi = lo + step;
                    const Complex slo = src[lo], shi = src[hi];
                    dst[lo] += Complex(bi * shi.imag(), -bi * shi.real());  // -i b in[hi]
                    dst[hi] += Complex(-bi * slo.imag(), bi * slo.real());  // +i b in[lo]
                }
            }
        }
    }
}

double HamiltonianAction::norm_bound(double b) const {
    double sum = 0.0;
    for (double w : pair_weights_) sum += std::abs(w);
    for (int i = 0; i < n_; ++i) sum += std::abs(b * field_[i]);
    return sum;
}

void apply_global_parity(SpinState& psi) {
    // P|n> = i^N (-1)^popcount(n) |~n>
    const int n = psi.n_spins;
    const Eigen::Index d = psi.dim();
    const Eigen::Index full = d - 1;
    const Complex in_pow[4] = {Complex(1, 0), Complex(0, 1), Complex(-1, 0), Complex(0, -1)};
    const Complex global = in_pow[n & 3];
    Eigen::VectorXcd out(d);
    for (Eigen::Index m = 0; m < d; ++m) {
        const Eigen::Index nbar = m ^ full;
        const int sgn = (std::popcount(static_cast<std::uint64_t>(nbar)) & 1) ? -1 : 1;
        out[m] = global * static_cast<double>(sgn) * psi.amplitudes[nbar];
    }
    psi.amplitudes.swap(out);
}

namespace {

// projector onto the parity sector `sector` (+1 or -1)
void project_parity(Eigen::VectorXcd& v, int n_spins, int sector) {
    SpinState tmp;
    tmp.n_spins = n_spins;
    tmp.amplitudes = v;
    apply_global_parity(tmp);
    v = 0.5 * (v + static_cast<double>(sector) * tmp.amplitudes);
}

int protocol_sector(int n_spins, HamiltonianSign sign) {
    // FM starts from |up_y...> (parity +1), AFM from |down_y...>
    // (parity (-1)^N)
    if (sign == HamiltonianSign::fm) return +1;
    return (n_spins % 2 == 0) ? +1 : -1;
}

double max_abs_coupling(const CouplingMatrix& j) {
    double m = 0.0;
    for (int a = 0; a < j.size(); ++a)
        for (int b = a + 1; b < j.size(); ++b) m = std::max(m, std::abs(j.values(a, b)));
    return m;
}

}  // namespace

GapResult energy_gap(const CouplingMatrix& j, double b, HamiltonianSign sign) {
    const int n = j.size();
    if (n < 1 || n > kHardSpinCap)
        throw InvalidInputError("energy_gap: spin count outside supported range");

    GapResult out;
    if (n == 1) {
        // single spin in a transverse field: levels +-B (parity sectors are
        // one-dimensional, so the full gap is the meaningful one)
        out.gap = 2.0 * std::abs(b);
        return out;
    }

    HamiltonianAction h(j, {});
    const double hsign = (sign == HamiltonianSign::fm) ? -1.0 : 1.0;
    const int sector = protocol_sector(n, sign);

    MatVec apply = [&](const Eigen::VectorXcd& in, Eigen::VectorXcd& o) {
        h.apply(in, o, b);
        if (hsign < 0) o = -o;
    };
    auto project = [&](Eigen::VectorXcd& v) { project_parity(v, n, sector); };

    LanczosOptions opt;
    opt.n_eigenvalues = 2;
    opt.max_subspace = std::min<int>(static_cast<int>(h.dim()), 320);
    LanczosResult res = lanczos_lowest(apply, h.dim(), opt, project);
    out.gap = res.eigenvalues[1] - res.eigenvalues[0];

    const double jscale = max_abs_coupling(j);
    if (jscale > 0.0 && out.gap < 1e-6 * jscale) out.near_degenerate = true;
    return out;
}

GapProfile compute_gap_profile(const CouplingMatrix& j, double b0, HamiltonianSign sign,
                               int grid_points) {
    if (!(b0 > 0.0)) throw InvalidInputError("gap profile: b0 must be > 0");
    if (grid_points < 16) throw InvalidInputError("gap profile: need >= 16 grid points");

    // log-spaced on [b0*1e-3, b0] plus B = 0; Delta varies fastest at small B
    std::vector<double> grid;
    grid.push_back(0.0);
    const double lo = b0 * 1e-3;
    for (int i = 0; i < grid_points; ++i)
        grid.push_back(lo * std::pow(b0 / lo, static_cast<double>(i) / (grid_points - 1)));
    grid.back() = b0;  // exact endpoint

    GapProfile out;
    out.field_grid.resize(static_cast<Eigen::Index>(grid.size()));
    out.gaps.resize(static_cast<Eigen::Index>(grid.size()));
    // store descending in B
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double b = grid[grid.size() - 1 - i];
        GapResult g = energy_gap(j, b, sign);
        if (!(g.gap > 0.0))
            throw NonConvergenceError("gap profile: vanishing gap at B = " +
                                      std::to_string(b));
        out.field_grid[static_cast<Eigen::Index>(i)] = b;
        out.gaps[static_cast<Eigen::Index>(i)] = g.gap;
    }
    return out;
}

QuenchSchedule local_adiabatic_schedule(const GapProfile& profile, double b0,
                                        double total_time, HamiltonianSign sign) {
    if (!(b0 > 0.0) || !(total_time > 0.0))
        throw InvalidInputError("local_adiabatic_schedule: need b0 > 0 and T > 0");
    const auto m = profile.field_grid.size();
    if (m < 2 || std::abs(profile.field_grid[0] - b0) > 1e-9 * b0 ||
        profile.field_grid[m - 1] != 0.0)
        throw InvalidInputError("local_adiabatic_schedule: profile must cover [0, b0]");

    // ascending-B knots for the interpolant of 1/Delta^2
    std::vector<double> b_asc(static_cast<std::size_t>(m)), f_asc(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        b_asc[static_cast<std::size_t>(m - 1 - i)] = profile.field_grid[i];
        const double d = profile.gaps[i];
        f_asc[static_cast<std::size_t>(m - 1 - i)] = 1.0 / (d * d);
    }
    PchipInterpolant inv_gap_sq(b_asc, f_asc);

    // S(B) = int_B^{b0} dB'/Delta^2; composite Simpson per knot interval
    auto segment_integral = [&](double a, double b) {
        const int half = 64;
        const double h = (b - a) / (2 * half);
        double acc = inv_gap_sq(a) + inv_gap_sq(b);
        for (int k = 1; k < 2 * half; ++k)
            acc += inv_gap_sq(a + k * h) * ((k & 1) ? 4.0 : 2.0);
        return acc * h / 3.0;
    };
    std::vector<double> s_from_zero(static_cast<std::size_t>(m), 0.0);
    for (std::size_t i = 1; i < static_cast<std::size_t>(m); ++i)
        s_from_zero[i] = s_from_zero[i - 1] + segment_integral(b_asc[i - 1], b_asc[i]);
    const double s_total = s_from_zero.back();
    if (!(s_total > 0.0))
        throw InternalError("local_adiabatic_schedule: degenerate quadrature");

    // time at each knot: t(B) = (S_total - S_from_zero(B)) * T / S_total
    std::vector<double> t_knots(static_cast<std::size_t>(m)), b_knots(static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < static_cast<std::size_t>(m); ++i) {
        const std::size_t src = static_cast<std::size_t>(m) - 1 - i;  // descending B
        t_knots[i] = (s_total - s_from_zero[src]) * total_time / s_total;
        b_knots[i] = b_asc[src];
    }
    t_knots.front() = 0.0;
    t_knots.back() = total_time;
    for (std::size_t i = 1; i < t_knots.size(); ++i) {
        if (!(t_knots[i] > t_knots[i - 1]) || !(b_knots[i] < b_knots[i - 1]))
            throw InternalError("local_adiabatic_schedule: non-monotone path");
    }

    QuenchSchedule s;
    s.kind = ScheduleKind::local_adiabatic;
    s.b0 = b0;
    s.total_time = total_time;
    s.sign = sign;
    s.la_table = PchipInterpolant(std::move(t_knots), std::move(b_knots));
    return s;
}

QuenchSchedule local_adiabatic_schedule(const CouplingMatrix& j, double b0,
                                        double total_time, int grid_points,
                                        HamiltonianSign sign) {
    return local_adiabatic_schedule(compute_gap_profile(j, b0, sign, grid_points), b0,
                                    total_time, sign);
}

// ---------------------------------------------------------------------------
// adaptive Runge-Kutta 5(4), Dormand-Prince coefficients, FSAL

namespace {

struct Dp54 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                            a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

}  // namespace

EvolveResult evolve(const SpinState& initial, const CouplingMatrix& j,
                    const QuenchSchedule& schedule, double tolerance,
                    std::vector<double> snapshot_times) {
    EvolveOptions opt;
    opt.tolerance = tolerance;
    return evolve(initial, j, schedule, opt, std::move(snapshot_times));
}

EvolveResult evolve(const SpinState& initial, const CouplingMatrix& j,
                    const QuenchSchedule& schedule, const EvolveOptions& options,
                    std::vector<double> snapshot_times) {
    const double tol = options.tolerance;
    if (!(tol >= 1e-12 && tol <= 1e-6))
        throw InvalidInputError("evolve: tolerance must lie in [1e-12, 1e-6]");
    if (initial.n_spins != j.size())
        throw InvalidInputError("evolve: state/coupling dimension mismatch");
    if (initial.dim() != (Eigen::Index{1} << initial.n_spins))
        throw InvalidInputError("evolve: state vector has wrong length");
    const double t_end = schedule.total_time;
    if (!(t_end > 0.0)) throw InvalidInputError("evolve: schedule has no duration");
    for (double ts : snapshot_times)
        if (ts < 0.0 || ts > t_end)
            throw InvalidInputError("evolve: snapshot time outside [0, T]");

    std::sort(snapshot_times.begin(), snapshot_times.end());
    snapshot_times.erase(std::unique(snapshot_times.begin(), snapshot_times.end()),
                         snapshot_times.end());
    if (snapshot_times.empty() || snapshot_times.back() != t_end)
        snapshot_times.push_back(t_end);

    HamiltonianAction h(j, schedule.field_profile);
    const double dir = (schedule.sign == HamiltonianSign::fm) ? 1.0 : -1.0;
    // d psi/dt = -i * s * H psi, s = +1 (AFM) or -1 (FM): multiply H psi by
    // (-i*s); with dir = -s this is (+i*dir)
    const Complex rot = Complex(0.0, 1.0) * dir;

    const Eigen::Index d = h.dim();
    Eigen::VectorXcd y = initial.amplitudes;
    Eigen::VectorXcd k1(d), k2(d), k3(d), k4(d), k5(d), k6(d), k7(d), ytmp(d), ynew(d),
        yerr(d);

    auto rhs = [&](double t, const Eigen::VectorXcd& in, Eigen::VectorXcd& out) {
        const double tt = std::clamp(t, 0.0, t_end);
        const double b = schedule_value(schedule, tt);
        h.apply(in, out, b);
        out *= rot;
    };

    EvolveResult result;
    result.snapshots.reserve(snapshot_times.size() + 1);

    double t = 0.0;
    double norm_prev = y.norm();
    const double norm_initial = norm_prev;
    double drift_spent = 0.0;

    // initial step from the field scale at t=0
    const double w0 = std::max(h.norm_bound(schedule_value(schedule, 0.0)), 1e-30);
    double hstep = std::min(0.05 / w0, t_end);
    const double h_min = std::max(1e-15 * t_end, 1e-300);

    rhs(t, y, k1);
    bool fsal_valid = true;

    std::size_t next_snap = 0;
    while (next_snap < snapshot_times.size() && snapshot_times[next_snap] <= 0.0) {
        result.snapshots.push_back({0.0, SpinState{initial.n_spins, y}});
        ++next_snap;
    }

    const double atol = 1e-14;
    double h_prop = hstep;  // controller's proposal, before snapshot clipping
    while (next_snap < snapshot_times.size()) {
        const double target = snapshot_times[next_snap];
        bool clipped = false;
        hstep = h_prop;
        if (t + hstep >= target) {
            hstep = target - t;
            clipped = true;
        }
        if (hstep < h_min && !clipped) {
            std::ostringstream msg;
            msg << "evolve: step size underflow at t = " << t << " s (h = " << hstep
                << ")";
            throw StiffnessError(msg.str());
        }

        if (!fsal_valid) rhs(t, y, k1);
        ytmp = y + hstep * (Dp54::a21 * k1);
        rhs(t + Dp54::c2 * hstep, ytmp, k2);
        ytmp = y + hstep * (Dp54::a31 * k1 + Dp54::a32 * k2);
        rhs(t + Dp54::c3 * hstep, ytmp, k3);
        ytmp = y + hstep * (Dp54::a41 * k1 + Dp54::a42 * k2 + Dp54::a43 * k3);
        rhs(t + Dp54::c4 * hstep, ytmp, k4);
        ytmp = y + hstep * (Dp54::a51 * k1 + Dp54::a52 * k2 + Dp54::a53 * k3 +
                            Dp54::a54 * k4);
        rhs(t + Dp54::c5 * hstep, ytmp, k5);
        ytmp = y + hstep * (Dp54::a61 * k1 + Dp54::a62 * k2 + Dp54::a63 * k3 +
                            Dp54::a64 * k4 + Dp54::a65 * k5);
        rhs(t + hstep, ytmp, k6);
        ynew = y + hstep * (Dp54::b1 * k1 + Dp54::b3 * k3 + Dp54::b4 * k4 +
                            Dp54::b5 * k5 + Dp54::b6 * k6);
        rhs(t + hstep, ynew, k7);
        yerr = hstep * (Dp54::e1 * k1 + Dp54::e3 * k3 + Dp54::e4 * k4 + Dp54::e5 * k5 +
                        Dp54::e6 * k6 + Dp54::e7 * k7);

        // scaled RMS error over complex components
        double acc = 0.0;
        for (Eigen::Index i = 0; i < d; ++i) {
            const double sc =
                atol + tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            const double e = std::abs(yerr[i]) / sc;
            acc += e * e;
        }
        const double err = std::sqrt(acc / static_cast<double>(d));

        // unitarity budget: norm change per step must fit the remaining
        // drift allowance pro-rated by the step's share of the run
        const double norm_new = ynew.norm();
        const double dnorm = std::abs(norm_new - norm_prev);
        const double remaining = std::max(t_end - t, hstep);
        const double budget = std::max(options.norm_drift_budget, 1e-15);
        const double allowed =
            0.5 * std::max(budget - drift_spent, 0.1 * budget) * (hstep / remaining);
        const bool norm_ok = dnorm <= std::max(allowed, 4e-16 * std::sqrt(double(d)));

        if (err <= 1.0 && norm_ok) {
            t = clipped ? target : t + hstep;
            y.swap(ynew);
            k1.swap(k7);
            fsal_valid = true;
            drift_spent += dnorm;
            norm_prev = norm_new;
            ++result.accepted_steps;
            if (clipped) {
                result.snapshots.push_back({target, SpinState{initial.n_spins, y}});
                ++next_snap;
            }
            const double grow = (err > 1e-12) ? 0.9 * std::pow(err, -0.2) : 5.0;
            h_prop = hstep * std::clamp(grow, 0.2, 5.0);
        } else {
            ++result.rejected_steps;
            fsal_valid = true;  // k1 still matches (t, y)
            double shrink = 0.9 * std::pow(std::max(err, 1e-12), -0.2);
            if (!norm_ok && dnorm > 0.0) {
                // sixth-order norm error model
                shrink = std::min(shrink, 0.9 * std::pow(allowed / dnorm, 1.0 / 6.0));
            }
            h_prop = hstep * std::clamp(shrink, 0.05, 0.9);
        }
        h_prop = std::min(h_prop, t_end);
    }

    result.norm_drift = std::abs(y.norm() - norm_initial);
    if (result.norm_drift > options.norm_drift_budget) {
        std::ostringstream msg;
        msg << "norm drift " << result.norm_drift << " exceeded budget "
            << options.norm_drift_budget;
        result.warnings.push_back(msg.str());
    }
    return result;
}

// ---------------------------------------------------------------------------
// snapshot file format

void write_state_snapshot(const std::string& path, const SpinState& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write snapshot: " + path);
    char header[16] = {};
    std::memcpy(header, "KZSV", 4);
    const std::uint16_t version = 1;
    const std::uint16_t n = static_cast<std::uint16_t>(state.n_spins);
    std::memcpy(header + 4, &version, 2);
    std::memcpy(header + 6, &n, 2);
    out.write(header, sizeof(header));
    out.write(reinterpret_cast<const char*>(state.amplitudes.data()),
              static_cast<std::streamsize>(sizeof(Complex) * state.dim()));
    if (!out) throw IoError("write failed: " + path);
}

SpinState read_state_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open snapshot: " + path);
    char header[16] = {};
    in.read(header, sizeof(header));
    if (!in || std::memcmp(header, "KZSV", 4) != 0)
        throw MalformedDataError("snapshot " + path + ": bad magic");
    std::uint16_t version = 0, n = 0;
    std::memcpy(&version, header + 4, 2);
    std::memcpy(&n, header + 6, 2);
    if (version != 1)
        throw MalformedDataError("snapshot " + path + ": unsupported version");
    if (n < 1 || n > kHardSpinCap)
        throw MalformedDataError("snapshot " + path + ": bad spin count");
    SpinState psi;
    psi.n_spins = n;
    psi.amplitudes.resize(Eigen::Index{1} << n);
    in.read(reinterpret_cast<char*>(psi.amplitudes.data()),
            static_cast<std::streamsize>(sizeof(Complex) * psi.dim()));
    if (!in) throw MalformedDataError("snapshot " + path + ": truncated data");
    return psi;
}

}  // namespace kzmsim
