#include "kzmsim/coupling.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "kzmsim/errors.hpp"
#include "kzmsim/fit.hpp"
#include "kzmsim/units.hpp"

namespace kzmsim {

double LaserParams::lamb_dicke(double omega_k, double ion_mass) const {
    if (!(omega_k > 0.0)) throw InvalidInputError("lamb_dicke: omega_k must be > 0");
    return wavevector_difference * std::sqrt(kHbar / (2.0 * ion_mass * omega_k));
}

double LaserParams::sideband_gap(const ModeSpectrum& modes) const {
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < modes.frequencies.size(); ++k)
        gap = std::min(gap, std::abs(detuning - modes.frequencies[k]));
    return gap;
}

Eigen::VectorXd rabi_profile(const BeamProfile& beam, const IonChain& chain) {
    if (!(beam.fwhm > 0.0)) throw InvalidInputError("rabi_profile: fwhm must be > 0");
    const double c = 4.0 * std::log(2.0) / (beam.fwhm * beam.fwhm);
    Eigen::VectorXd rabi(chain.positions.size());
    for (Eigen::Index i = 0; i < rabi.size(); ++i) {
        const double d = chain.positions[i] - beam.center;
        rabi[i] = beam.peak_rabi * std::exp(-c * d * d);
    }
    return rabi;
}

CouplingMatrix ising_couplings(const Eigen::VectorXd& rabi, const ModeSpectrum& modes,
                               const LaserParams& laser, double ion_mass) {
    const auto n = rabi.size();
    if (modes.frequencies.size() != n || modes.mode_vectors.rows() != n)
        throw InvalidInputError("ising_couplings: mode/Rabi dimension mismatch");

    for (Eigen::Index k = 0; k < n; ++k) {
        const double d = std::abs(laser.detuning - modes.frequencies[k]);
        if (d < laser.resonance_guard) {
            std::ostringstream msg;
            msg << "ising_couplings: detuning within " << laser.resonance_guard
                << " rad/s of mode " << k << " (omega_k = " << modes.frequencies[k]
                << " rad/s)";
            throw NearResonanceError(msg.str());
        }
    }

    // per-mode weight eta_k^2 omega_k / (delta^2 - omega_k^2)
    Eigen::VectorXd weight(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const double wk = modes.frequencies[k];
        const double eta = laser.lamb_dicke(wk, ion_mass);
        weight[k] = eta * eta * wk /
                    (laser.detuning * laser.detuning - wk * wk);
    }

    CouplingMatrix j;
    j.values.setZero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index jj = i + 1; jj < n; ++jj) {
            double sum = 0.0;
            for (Eigen::Index k = 0; k < n; ++k)
                sum += weight[k] * modes.mode_vectors(i, k) * modes.mode_vectors(jj, k);
            const double value = rabi[i] * rabi[jj] * sum;
            j.values(i, jj) = value;
            j.values(jj, i) = value;
        }
    }
    return j;
}

CouplingMatrix power_law_couplings(int n, double j0, double alpha) {
    if (n < 1) throw InvalidInputError("power_law_couplings: n must be >= 1");
    CouplingMatrix j;
    j.values.setZero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int k = i + 1; k < n; ++k) {
            const double value = j0 / std::pow(static_cast<double>(k - i), alpha);
            j.values(i, k) = value;
            j.values(k, i) = value;
        }
    }
    return j;
}

PowerLawFit fit_power_law(const CouplingMatrix& j, PowerLawWeighting weighting,
                          PowerLawSignPolicy sign_policy) {
    const int n = j.size();
    if (n < 3) throw InvalidInputError("fit_power_law: need N >= 3");

    PowerLawFit out;
    std::vector<double> xs, ys;
    for (int i = 0; i < n; ++i) {
        for (int k = i + 1; k < n; ++k) {
            const double v = j.values(i, k);
            if (v == 0.0) {
                std::ostringstream msg;
                msg << "fit_power_law: J(" << i << "," << k << ") is zero";
                throw InvalidInputError(msg.str());
            }
            if (v < 0.0) out.flipped_pairs.emplace_back(i, k);
            xs.push_back(std::log(static_cast<double>(k - i)));
            ys.push_back(std::log(std::abs(v)));
        }
    }
    if (!out.flipped_pairs.empty()) {
        if (sign_policy == PowerLawSignPolicy::strict_error) {
            std::ostringstream msg;
            msg << "fit_power_law: " << out.flipped_pairs.size()
                << " pair(s) with non-positive coupling, first (";
            msg << out.flipped_pairs.front().first << ","
                << out.flipped_pairs.front().second << ")";
            throw InvalidInputError(msg.str());
        }
        out.used_magnitudes = true;
    }

    Eigen::VectorXd x, y, w;
    if (weighting == PowerLawWeighting::per_distance) {
        // average log-magnitudes at each distance first
        std::vector<double> sum(static_cast<size_t>(n), 0.0);
        std::vector<int> cnt(static_cast<size_t>(n), 0);
        for (std::size_t p = 0; p < xs.size(); ++p) {
            const int r = static_cast<int>(std::lround(std::exp(xs[p])));
            sum[static_cast<size_t>(r)] += ys[p];
            cnt[static_cast<size_t>(r)] += 1;
        }
        std::vector<double> xr, yr;
        for (int r = 1; r < n; ++r) {
            if (cnt[static_cast<size_t>(r)] > 0) {
                xr.push_back(std::log(static_cast<double>(r)));
                yr.push_back(sum[static_cast<size_t>(r)] / cnt[static_cast<size_t>(r)]);
            }
        }
        x = Eigen::Map<Eigen::VectorXd>(xr.data(), static_cast<Eigen::Index>(xr.size()));
        y = Eigen::Map<Eigen::VectorXd>(yr.data(), static_cast<Eigen::Index>(yr.size()));
    } else {
        x = Eigen::Map<Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    }
    w = Eigen::VectorXd::Ones(x.size());

    LinearFitResult lin = linear_fit(x, y, w, /*absolute_sigma=*/false);
    out.alpha = -lin.slope;
    out.alpha_err = lin.slope_err;
    out.j0 = std::exp(lin.intercept);
    out.j0_err = lin.err_defined ? out.j0 * lin.intercept_err : 0.0;
    out.log_rms_residual = std::sqrt(lin.chi2 / static_cast<double>(x.size()));
    return out;
}

double kac_norm(int n, double alpha) {
    if (n < 2) throw InvalidInputError("kac_norm: need N >= 2");
    double sum = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) sum += 1.0 / std::pow(static_cast<double>(std::abs(i - j)), alpha);
    return sum / (n - 1);
}

Eigen::VectorXd spin_flip_resonances(const CouplingMatrix& j) {
    const int n = j.size();
    Eigen::VectorXd de(n);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int k = 0; k < n; ++k)
            if (k != i) sum += j.values(i, k);
        de[i] = 2.0 * sum;
    }
    return de;
}

double phonon_error_estimate(double eta, double rabi, double sideband_gap) {
    if (!(sideband_gap > 0.0))
        throw InvalidInputError("phonon_error_estimate: sideband gap must be > 0");
    const double amp = eta * rabi / (2.0 * sideband_gap);
    return std::min(amp * amp, 1.0);
}

void write_coupling_csv(const std::string& path, const CouplingMatrix& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write coupling file: " + path);
    out << "# N=" << j.size() << "\n";
    out << "i,j,J_rad_per_s\n";
    out.precision(17);
    for (int i = 0; i < j.size(); ++i)
        for (int k = i + 1; k < j.size(); ++k)
            out << i << "," << k << "," << j.values(i, k) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

CouplingMatrix load_coupling_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open coupling file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# N=", 0) != 0)
        throw MalformedDataError("coupling file " + path + ": missing `# N=` header");
    const int n = std::stoi(line.substr(4));
    if (n < 1) throw MalformedDataError("coupling file " + path + ": bad N");
    if (!std::getline(in, line) || line != "i,j,J_rad_per_s")
        throw MalformedDataError("coupling file " + path + ": missing column header");

    CouplingMatrix j;
    j.values.setZero(n, n);
    int lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        int a, b;
        double v;
        char c1, c2;
        if (!(ss >> a >> c1 >> b >> c2 >> v) || c1 != ',' || c2 != ',')
            throw MalformedDataError("coupling file " + path + " line " +
                                     std::to_string(lineno) + ": bad row");
        if (a < 0 || b < 0 || a >= n || b >= n || a == b)
            throw MalformedDataError("coupling file " + path + " line " +
                                     std::to_string(lineno) + ": index out of range");
        j.values(a, b) = v;
        j.values(b, a) = v;
    }
    return j;
}

}  // namespace kzmsim
