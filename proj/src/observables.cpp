#include "kzmsim/observables.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kzmsim/errors.hpp"
#include "kzmsim/fit.hpp"
#include "kzmsim/rng.hpp"

namespace kzmsim {

using Complex = std::complex<double>;

Eigen::VectorXd sigma_x_expectations(const SpinState& psi) {
    const int n = psi.n_spins;
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) {
        const Eigen::Index bit = Eigen::Index{1} << i;
        double acc = 0.0;
        for (Eigen::Index m = 0; m < psi.dim(); ++m)
            acc += (std::conj(psi.amplitudes[m]) * psi.amplitudes[m ^ bit]).real();
        out[i] = acc;
    }
    return out;
}

double sigma_xx_expectation(const SpinState& psi, int i, int j) {
    if (i == j) return 1.0;
    const Eigen::Index mask = (Eigen::Index{1} << i) | (Eigen::Index{1} << j);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < psi.dim(); ++m)
        acc += (std::conj(psi.amplitudes[m]) * psi.amplitudes[m ^ mask]).real();
    return acc;
}

double sigma_y_expectation(const SpinState& psi, int i) {
    const Eigen::Index bit = Eigen::Index{1} << i;
    double acc = 0.0;
    for (Eigen::Index m = 0; m < psi.dim(); ++m) {
        // <m|sigma_y^i|m^bit>: +i into bit=1 targets, -i into bit=0 targets
        const Complex coeff = (m & bit) ? Complex(0, 1) : Complex(0, -1);
        acc += (std::conj(psi.amplitudes[m]) * coeff * psi.amplitudes[m ^ bit]).real();
    }
    return acc;
}

// ---------------------------------------------------------------------------
// measurement sampling

namespace {

// in-place single-qubit rotation mapping the measurement basis to z
void rotate_for_basis(Eigen::VectorXcd& amps, int n, MeasurementBasis basis) {
    if (basis == MeasurementBasis::z) return;
    // x: Hadamard; y: rows (1,-i)/sqrt2, (1,+i)/sqrt2  (maps |up_y> -> |0>)
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int q = 0; q < n; ++q) {
        const Eigen::Index step = Eigen::Index{1} << q;
        for (Eigen::Index base = 0; base < amps.size(); base += 2 * step) {
            for (Eigen::Index k = 0; k < step; ++k) {
                const Eigen::Index lo = base + k, hi = lo + step;
                const Complex a = amps[lo], b = amps[hi];
                if (basis == MeasurementBasis::x) {
                    amps[lo] = inv_sqrt2 * (a + b);
                    amps[hi] = inv_sqrt2 * (a - b);
                } else {
                    amps[lo] = inv_sqrt2 * (a - Complex(0, 1) * b);
                    amps[hi] = inv_sqrt2 * (a + Complex(0, 1) * b);
                }
            }
        }
    }
}

}  // namespace

ShotSet sample_measurements(const SpinState& psi, MeasurementBasis basis,
                            const MeasurementModel& model) {
    if (model.shots < 1) throw InvalidInputError("sample_measurements: shots must be >= 1");
    if (!(model.flip_prob >= 0.0 && model.flip_prob <= 0.5))
        throw InvalidInputError("sample_measurements: flip_prob must lie in [0, 0.5]");

    Eigen::VectorXcd rotated = psi.amplitudes;
    rotate_for_basis(rotated, psi.n_spins, basis);

    // cumulative distribution over configurations
    const Eigen::Index d = rotated.size();
    std::vector<double> cdf(static_cast<std::size_t>(d));
    double acc = 0.0;
    for (Eigen::Index m = 0; m < d; ++m) {
        acc += std::norm(rotated[m]);
        cdf[static_cast<std::size_t>(m)] = acc;
    }
    const double total = acc;

    ShotSet out;
    out.basis = basis;
    out.n_ions = psi.n_spins;
    out.outcomes.resize(static_cast<std::size_t>(model.shots) * psi.n_spins);

    for (int s = 0; s < model.shots; ++s) {
        CounterRng rng(model.rng_seed, static_cast<std::uint64_t>(s));
        const double u = rng.next_double() * total;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        Eigen::Index m = static_cast<Eigen::Index>(std::distance(cdf.begin(), it));
        if (m >= d) m = d - 1;
        for (int q = 0; q < psi.n_spins; ++q) {
            // bit 0 -> outcome +1
            int v = ((m >> q) & 1) ? -1 : +1;
            if (model.flip_prob > 0.0 && rng.next_double() < model.flip_prob) v = -v;
            out.outcomes[static_cast<std::size_t>(s) * psi.n_spins + q] =
                static_cast<std::int8_t>(v);
        }
    }
    return out;
}

void write_shot_file(const std::string& path, const ShotSet& shots,
                     std::optional<double> quench_time) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write shot file: " + path);
    const char* basis = shots.basis == MeasurementBasis::x   ? "x"
                        : shots.basis == MeasurementBasis::y ? "y"
                                                             : "z";
    out << "# basis=" << basis << " N=" << shots.n_ions << " shots=" << shots.shot_count();
    if (quench_time) {
        out.precision(17);
        out << " T_s=" << *quench_time;
    }
    out << "\n";
    for (int s = 0; s < shots.shot_count(); ++s) {
        for (int q = 0; q < shots.n_ions; ++q) {
            if (q) out << ",";
            out << static_cast<int>(shots.at(s, q));
        }
        out << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

LoadedShots load_shot_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open shot file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
        throw MalformedDataError("shot file " + path + ": missing header");

    LoadedShots out;
    int n = -1, m = -1;
    {
        std::istringstream ss(line.substr(2));
        std::string token;
        while (ss >> token) {
            const auto eq = token.find('=');
            if (eq == std::string::npos)
                throw MalformedDataError("shot file " + path + ": bad header token " + token);
            const std::string key = token.substr(0, eq);
            const std::string val = token.substr(eq + 1);
            if (key == "basis") {
                if (val == "x") out.shots.basis = MeasurementBasis::x;
                else if (val == "y") out.shots.basis = MeasurementBasis::y;
                else if (val == "z") out.shots.basis = MeasurementBasis::z;
                else throw MalformedDataError("shot file " + path + ": bad basis " + val);
            } else if (key == "N") {
                n = std::stoi(val);
            } else if (key == "shots") {
                m = std::stoi(val);
            } else if (key == "T_s") {
                out.quench_time = std::stod(val);
            }
            // unknown keys are ignored for forward compatibility
        }
    }
    if (n < 1 || m < 0)
        throw MalformedDataError("shot file " + path + ": header must carry N and shots");
    out.shots.n_ions = n;
    out.shots.outcomes.reserve(static_cast<std::size_t>(std::max(m, 0)) * n);

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        int count = 0;
        while (std::getline(ss, cell, ',')) {
            int v;
            try {
                v = std::stoi(cell);
            } catch (const std::exception&) {
                throw MalformedDataError("shot file " + path + " line " +
                                         std::to_string(lineno) + ": bad value '" + cell + "'");
            }
            if (v != 1 && v != -1)
                throw MalformedDataError("shot file " + path + " line " +
                                         std::to_string(lineno) + ": outcomes must be +-1");
            out.shots.outcomes.push_back(static_cast<std::int8_t>(v));
            ++count;
        }
        if (count != n)
            throw MalformedDataError("shot file " + path + " line " + std::to_string(lineno) +
                                     ": expected " + std::to_string(n) + " ions, got " +
                                     std::to_string(count));
    }
    if (m >= 0 && out.shots.shot_count() != m)
        throw MalformedDataError("shot file " + path + ": header claims " + std::to_string(m) +
                                 " shots, file has " + std::to_string(out.shots.shot_count()));
    return out;
}

// ---------------------------------------------------------------------------
// defect density

ValueWithError defect_density(const SpinState& psi) {
    const int n = psi.n_spins;
    if (n < 2) throw InvalidInputError("defect_density: need N >= 2");
    double acc = 0.0;
    for (int i = 0; i + 1 < n; ++i) acc += 1.0 - sigma_xx_expectation(psi, i, i + 1);
    return {acc / (2.0 * (n - 1)), 0.0};
}

ValueWithError defect_density(const ShotSet& shots) {
    const int n = shots.n_ions;
    if (n < 2) throw InvalidInputError("defect_density: need N >= 2");
    const int m = shots.shot_count();
    if (m < 1) throw InvalidInputError("defect_density: empty shot set");
    double sum = 0.0, sum2 = 0.0;
    for (int s = 0; s < m; ++s) {
        double rho = 0.0;
        for (int i = 0; i + 1 < n; ++i)
            rho += 1.0 - static_cast<double>(shots.at(s, i) * shots.at(s, i + 1));
        rho /= 2.0 * (n - 1);
        sum += rho;
        sum2 += rho * rho;
    }
    const double mean = sum / m;
    double err = 0.0;
    if (m > 1) err = std::sqrt(std::max(sum2 / m - mean * mean, 0.0) / (m - 1));
    return {mean, err};
}

// ---------------------------------------------------------------------------
// correlation profiles

int default_edge_discard(int n_ions) {
    switch (n_ions) {
        case 13: return 1;
        case 36: return 4;
        case 40: return 4;
        case 55: return 8;
        case 61: return 8;
        default: return static_cast<int>(std::lround(0.13 * n_ions));
    }
}

namespace {

struct KeptRange {
    int first, last, count;
};

KeptRange kept_range(int n_ions, int edge_discard) {
    if (edge_discard < 0) throw InvalidInputError("correlation_profile: negative discard");
    const int first = edge_discard;
    const int last = n_ions - 1 - edge_discard;
    const int count = last - first + 1;
    if (count < 3)
        throw InvalidInputError("correlation_profile: fewer than 3 ions kept after discard");
    return {first, last, count};
}

}  // namespace

CorrelationProfile correlation_profile(const SpinState& psi, int edge_discard, int r_max) {
    const KeptRange kept = kept_range(psi.n_spins, edge_discard);
    if (r_max <= 0) r_max = kept.count / 2;
    r_max = std::min(r_max, kept.count - 1);

    const Eigen::VectorXd one_point = sigma_x_expectations(psi);
    CorrelationProfile out;
    out.first_kept = kept.first;
    out.last_kept = kept.last;
    for (int r = 1; r <= r_max; ++r) {
        double acc = 0.0;
        int cnt = 0;
        for (int i = kept.first; i + r <= kept.last; ++i) {
            acc += sigma_xx_expectation(psi, i, i + r) - one_point[i] * one_point[i + r];
            ++cnt;
        }
        out.distances.push_back(r);
        out.g.push_back(acc / cnt);
        out.pair_counts.push_back(cnt);
        out.stderrs.push_back(0.0);
    }
    return out;
}

namespace {

// mean outcomes and pair products over a subset of shot indices
CorrelationProfile profile_from_indices(const ShotSet& shots, const std::vector<int>& idx,
                                        const KeptRange& kept, int r_max) {
    const int n = shots.n_ions;
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    for (int s : idx)
        for (int q = kept.first; q <= kept.last; ++q)
            mean[static_cast<std::size_t>(q)] += shots.at(s, q);
    for (int q = kept.first; q <= kept.last; ++q)
        mean[static_cast<std::size_t>(q)] /= static_cast<double>(idx.size());

    CorrelationProfile out;
    out.first_kept = kept.first;
    out.last_kept = kept.last;
    for (int r = 1; r <= r_max; ++r) {
        double acc = 0.0;
        int cnt = 0;
        for (int i = kept.first; i + r <= kept.last; ++i) {
            double pair = 0.0;
            for (int s : idx) pair += shots.at(s, i) * shots.at(s, i + r);
            pair /= static_cast<double>(idx.size());
            acc += pair - mean[static_cast<std::size_t>(i)] *
                              mean[static_cast<std::size_t>(i + r)];
            ++cnt;
        }
        out.distances.push_back(r);
        out.g.push_back(acc / cnt);
        out.pair_counts.push_back(cnt);
        out.stderrs.push_back(0.0);
    }
    return out;
}

}  // namespace

CorrelationProfile correlation_profile(const ShotSet& shots, int edge_discard, int r_max,
                                       std::uint64_t bootstrap_seed) {
    const int m = shots.shot_count();
    if (m < 1) throw InvalidInputError("correlation_profile: empty shot set");
    const KeptRange kept = kept_range(shots.n_ions, edge_discard);
    if (r_max <= 0) r_max = kept.count / 2;
    r_max = std::min(r_max, kept.count - 1);

    std::vector<int> all(static_cast<std::size_t>(m));
    for (int s = 0; s < m; ++s) all[static_cast<std::size_t>(s)] = s;
    CorrelationProfile out = profile_from_indices(shots, all, kept, r_max);

    // bootstrap over shots for the error bars (covariance between the
    // one- and two-point terms is folded in automatically)
    const int resamples = 200;
    std::vector<double> acc(out.g.size(), 0.0), acc2(out.g.size(), 0.0);
    std::vector<int> idx(static_cast<std::size_t>(m));
    for (int b = 0; b < resamples; ++b) {
        CounterRng rng(bootstrap_seed, 0x626f6f74ULL + static_cast<std::uint64_t>(b));
        for (int s = 0; s < m; ++s)
            idx[static_cast<std::size_t>(s)] =
                static_cast<int>(rng.next_below(static_cast<std::uint64_t>(m)));
        CorrelationProfile p = profile_from_indices(shots, idx, kept, r_max);
        for (std::size_t k = 0; k < p.g.size(); ++k) {
            acc[k] += p.g[k];
            acc2[k] += p.g[k] * p.g[k];
        }
    }
    for (std::size_t k = 0; k < out.g.size(); ++k) {
        const double mu = acc[k] / resamples;
        out.stderrs[k] = std::sqrt(std::max(acc2[k] / resamples - mu * mu, 0.0));
    }
    return out;
}

CorrLengthFit fit_correlation_length(const CorrelationProfile& profile) {
    const auto npts = profile.distances.size();
    if (npts < 3)
        throw InvalidInputError("fit_correlation_length: need at least 3 distances");

    Eigen::VectorXd r(static_cast<Eigen::Index>(npts)), g(static_cast<Eigen::Index>(npts)),
        w(static_cast<Eigen::Index>(npts));
    for (std::size_t k = 0; k < npts; ++k) {
        r[static_cast<Eigen::Index>(k)] = profile.distances[k];
        g[static_cast<Eigen::Index>(k)] = profile.g[k];
        w[static_cast<Eigen::Index>(k)] = std::sqrt(static_cast<double>(profile.pair_counts[k]));
    }

    CorrLengthFit out;
    out.r_min = profile.distances.front();
    out.r_max = profile.distances.back();

    // degenerate when the profile carries no decay signal
    const double spread = g.maxCoeff() - g.minCoeff();
    const double scale = g.cwiseAbs().maxCoeff();
    if (spread <= 1e-14 * std::max(scale, 1.0)) {
        out.outcome = FitOutcome::degenerate;
        out.b = g.mean();
        return out;
    }

    // parameters p = (A, B, ln R)
    auto residual = [&](const Eigen::VectorXd& p, Eigen::VectorXd& res) {
        const double rl = std::exp(p[2]);
        for (Eigen::Index k = 0; k < r.size(); ++k)
            res[k] = w[k] * (p[0] * std::exp(-r[k] / rl) + p[1] - g[k]);
    };
    const double a0 = g[0] - g[g.size() - 1];
    Eigen::VectorXd p0(3);
    p0 << (a0 != 0.0 ? a0 : spread), g[g.size() - 1], std::log(std::max(1.0, 0.5 * out.r_max));
    LmResult lm = levenberg_marquardt(residual, p0, static_cast<int>(npts));
    if (!lm.converged) {
        std::ostringstream msg;
        msg << "fit_correlation_length: no convergence (chi2 = " << lm.chi2
            << ", best A = " << lm.params[0] << ", B = " << lm.params[1]
            << ", R = " << std::exp(lm.params[2]) << ")";
        throw NonConvergenceError(msg.str());
    }
    out.a = lm.params[0];
    out.b = lm.params[1];
    out.r_length = std::exp(lm.params[2]);
    // delta method for the error of R = exp(p2); pair-count weights are not
    // absolute sigmas, so scale by the reduced chi2 when there are spare dof
    double var_p2 = lm.covariance(2, 2);
    if (npts > 3) var_p2 *= lm.chi2 / static_cast<double>(npts - 3);
    out.r_err = std::isfinite(var_p2) && var_p2 >= 0.0
                    ? out.r_length * std::sqrt(var_p2)
                    : std::numeric_limits<double>::quiet_NaN();
    if (out.r_length > 10.0 * out.r_max) out.outcome = FitOutcome::unresolved_length;
    return out;
}

void write_correlation_csv(const std::string& path, const CorrelationProfile& profile) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write correlation file: " + path);
    out << "r,G,N_r,stderr\n";
    out.precision(17);
    for (std::size_t k = 0; k < profile.distances.size(); ++k)
        out << profile.distances[k] << "," << profile.g[k] << "," << profile.pair_counts[k]
            << "," << profile.stderrs[k] << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace kzmsim
