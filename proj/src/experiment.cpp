#include "kzmsim/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "kzmsim/errors.hpp"
#include "kzmsim/rng.hpp"
#include "kzmsim/units.hpp"

namespace fs = std::filesystem;

namespace kzmsim {

namespace {

std::string kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::two_ion_local_adiabatic: return "two_ion_local_adiabatic";
        case ExperimentKind::kzm_sweep: return "kzm_sweep";
        case ExperimentKind::afm_sweep: return "afm_sweep";
        case ExperimentKind::calibration: return "calibration";
    }
    return "?";
}

ExperimentKind kind_from_name(const std::string& s) {
    if (s == "two_ion_local_adiabatic") return ExperimentKind::two_ion_local_adiabatic;
    if (s == "kzm_sweep") return ExperimentKind::kzm_sweep;
    if (s == "afm_sweep") return ExperimentKind::afm_sweep;
    if (s == "calibration") return ExperimentKind::calibration;
    throw SchemaError("unknown experiment kind: " + s);
}

std::string schedule_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::linear: return "linear";
        case ScheduleKind::exponential: return "exponential";
        case ScheduleKind::local_adiabatic: return "local_adiabatic";
    }
    return "?";
}

ScheduleKind schedule_from_name(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "exponential") return ScheduleKind::exponential;
    if (s == "local_adiabatic") return ScheduleKind::local_adiabatic;
    throw SchemaError("unknown schedule kind: " + s);
}

std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ",";
        out << format_double(v[i]);
    }
    return out.str();
}

std::string join_ints(const std::vector<int>& v) {
    std::ostringstream out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out << ",";
        out << v[i];
    }
    return out.str();
}

std::uint64_t fingerprint(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// config parsing

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    return from_doc(KvDoc::load(path));
}

ExperimentConfig ExperimentConfig::from_doc(const KvDoc& doc) {
    const long schema = doc.get_int_or("", "schema_version", kConfigSchemaVersion);
    if (schema != kConfigSchemaVersion)
        throw SchemaError("unsupported schema_version " + std::to_string(schema));

    ExperimentConfig cfg;
    cfg.kind = kind_from_name(doc.get("experiment", "kind"));
    cfg.output_dir = doc.get_or("experiment", "output_dir", "out");
    cfg.seed = static_cast<std::uint64_t>(doc.get_int_or("experiment", "seed", 1));
    cfg.threads = static_cast<int>(doc.get_int_or("experiment", "threads", 0));

    const std::string conv = doc.get_or("units", "frequency_convention", "x2pi");
    double fconv;
    if (conv == "x2pi") fconv = kTwoPi;
    else if (conv == "angular") fconv = 1.0;
    else throw SchemaError("[units] frequency_convention must be x2pi or angular");
    auto freq = [&](const std::string& sec, const std::string& key, double fallback_hz,
                    bool required = false) {
        if (required) return fconv * doc.get_double(sec, key);
        return doc.has(sec, key) ? fconv * doc.get_double(sec, key)
                                 : kTwoPi * fallback_hz;
    };

    // per-kind coupling defaults (paper operating points)
    double def_j0_hz = 0.0, def_alpha = 1.0;
    int def_n = 0;
    switch (cfg.kind) {
        case ExperimentKind::two_ion_local_adiabatic:
            def_j0_hz = -450.0; def_alpha = 1.0; def_n = 2;
            break;
        case ExperimentKind::kzm_sweep:
            def_j0_hz = 153.0; def_alpha = 1.19; def_n = 13;
            break;
        case ExperimentKind::afm_sweep:
            def_j0_hz = 67.0; def_alpha = 1.05; def_n = 13;
            break;
        case ExperimentKind::calibration:
            break;
    }

    const std::string src = doc.get_or(
        "coupling", "source",
        cfg.kind == ExperimentKind::calibration ? "trap_laser" : "power_law");
    if (src == "power_law") cfg.source = CouplingSourceKind::power_law;
    else if (src == "trap_laser") cfg.source = CouplingSourceKind::trap_laser;
    else throw SchemaError("[coupling] source must be power_law or trap_laser");

    if (cfg.source == CouplingSourceKind::power_law) {
        cfg.ion_count = static_cast<int>(doc.get_int_or("coupling", "ion_count", def_n));
        if (cfg.ion_count < 2) throw SchemaError("[coupling] ion_count must be >= 2");
        cfg.j0 = freq("coupling", "j0", def_j0_hz);
        cfg.alpha = doc.get_double_or("coupling", "alpha", def_alpha);
    } else {
        cfg.ion_count = static_cast<int>(doc.get_int("coupling", "ion_count"));
        cfg.trap.ion_count = cfg.ion_count;
        cfg.trap.axial_freq = freq("coupling", "axial_freq", 0.0, true);
        cfg.trap.transverse_freq = freq("coupling", "transverse_freq", 0.0, true);
        if (doc.has("coupling", "transverse_profile")) {
            auto prof = doc.get_double_list("coupling", "transverse_profile");
            cfg.trap.transverse_profile.assign(prof.begin(), prof.end());
            for (auto& w : cfg.trap.transverse_profile) w *= fconv;
        }
        cfg.trap.ion_mass =
            doc.get_double_or("coupling", "ion_mass_amu", 170.9363302) * kAtomicMassUnit;
        cfg.trap.charge = doc.get_double_or("coupling", "charge_e", 1.0) * kElementaryCharge;
        cfg.trap.quartic = doc.get_double_or("coupling", "quartic", 0.0);
        cfg.detuning_offset = freq("coupling", "detuning_offset", 15e3);
        const double lambda = doc.get_double_or("coupling", "raman_wavelength_nm", 355.0) * 1e-9;
        const double factor =
            doc.get_double_or("coupling", "wavevector_factor", std::sqrt(2.0));
        cfg.wavevector_difference =
            doc.has("coupling", "delta_k_per_m")
                ? doc.get_double("coupling", "delta_k_per_m")
                : factor * kTwoPi / lambda;
        cfg.beam.fwhm = doc.get_double_or("coupling", "beam_fwhm_um", 144.0) * 1e-6;
        cfg.beam.center = doc.get_double_or("coupling", "beam_center_um", 0.0) * 1e-6;
        cfg.beam.peak_rabi = freq("coupling", "peak_rabi", 100e3);
        cfg.resonance_guard = freq("coupling", "resonance_guard", 100.0);
        cfg.spectrum_file = doc.get_or("coupling", "spectrum_file", "");
        const std::string fm = doc.get_or("coupling", "spectrum_fit_model", "axial_quartic");
        if (fm == "axial_quartic") cfg.spectrum_fit_model = SpectrumFitModel::axial_quartic;
        else if (fm == "raw_positions") cfg.spectrum_fit_model = SpectrumFitModel::raw_positions;
        else throw SchemaError("[coupling] spectrum_fit_model must be axial_quartic or raw_positions");
    }

    // schedule
    const std::string def_sched =
        cfg.kind == ExperimentKind::two_ion_local_adiabatic ? "local_adiabatic"
                                                            : "exponential";
    cfg.schedule_kind = schedule_from_name(doc.get_or("schedule", "kind", def_sched));
    const std::string def_proto =
        cfg.kind == ExperimentKind::afm_sweep ? "afm" : "fm";
    const std::string proto = doc.get_or("schedule", "protocol", def_proto);
    if (proto == "fm") cfg.protocol = HamiltonianSign::fm;
    else if (proto == "afm") cfg.protocol = HamiltonianSign::afm;
    else throw SchemaError("[schedule] protocol must be fm or afm");

    // a negative J0 is the FM-frame quote of an AFM hardware coupling; the
    // sign lives in the protocol, the matrix stays positive
    if (cfg.j0 < 0.0) {
        if (doc.has("schedule", "protocol") && cfg.protocol == HamiltonianSign::afm)
            throw SchemaError("negative j0 contradicts the afm protocol");
        cfg.protocol = HamiltonianSign::fm;
        cfg.j0 = -cfg.j0;
    }

    cfg.b0_over_j0 = doc.get_double_or(
        "schedule", "b0_over_j0",
        cfg.kind == ExperimentKind::two_ion_local_adiabatic ? 6.0 : 42.5);
    if (!(cfg.b0_over_j0 > 0.0)) throw SchemaError("[schedule] b0_over_j0 must be > 0");
    if (cfg.b0_over_j0 < 1.0)
        cfg.warnings.push_back(
            "B0 below |J0|: the polarized initial state is far from the ground state");
    cfg.tau_over_t = doc.get_double_or("schedule", "tau_over_t", 0.2);
    if (!(cfg.tau_over_t > 0.0)) throw SchemaError("[schedule] tau_over_t must be > 0");
    cfg.gap_grid_points = static_cast<int>(doc.get_int_or("schedule", "gap_grid_points", 64));

    if (doc.has("schedule", "t_list_ms")) {
        for (double t : doc.get_double_list("schedule", "t_list_ms"))
            cfg.t_list_s.push_back(t * 1e-3);
    } else if (doc.has("schedule", "t_list_s")) {
        cfg.t_list_s = doc.get_double_list("schedule", "t_list_s");
    }
    for (double t : cfg.t_list_s)
        if (!(t > 0.0)) throw SchemaError("[schedule] quench times must be positive");

    // measurement
    const std::string mode = doc.get_or("measurement", "mode", "exact");
    if (mode == "exact") cfg.measure = MeasureMode::exact;
    else if (mode == "sampled") cfg.measure = MeasureMode::sampled;
    else throw SchemaError("[measurement] mode must be exact or sampled");
    cfg.shots = static_cast<int>(doc.get_int_or("measurement", "shots", 4096));
    if (cfg.shots < 1) throw SchemaError("[measurement] shots must be >= 1");
    cfg.flip_prob = doc.get_double_or("measurement", "flip_prob", 0.0);
    if (!(cfg.flip_prob >= 0.0 && cfg.flip_prob <= 0.5))
        throw SchemaError("[measurement] flip_prob must lie in [0, 0.5]");
    cfg.edge_discard = static_cast<int>(doc.get_int_or("measurement", "edge_discard", -1));
    cfg.write_shots = doc.get_bool_or("measurement", "write_shots", false);

    // engine
    cfg.tolerance = doc.get_double_or("engine", "tolerance", 1e-9);
    cfg.max_spins = static_cast<int>(doc.get_int_or("engine", "max_spins", kDefaultSpinCap));
    if (cfg.max_spins > kHardSpinCap)
        throw SchemaError("[engine] max_spins beyond the hard cap of " +
                          std::to_string(kHardSpinCap));

    if (cfg.kind != ExperimentKind::calibration && cfg.ion_count > cfg.max_spins)
        throw SchemaError("ion_count " + std::to_string(cfg.ion_count) +
                          " exceeds [engine] max_spins " + std::to_string(cfg.max_spins));

    // J0T grid bounds (resolved into a T list once |J0| is known)
    cfg.j0t_min = doc.get_double_or("schedule", "j0t_min", 0.0);
    cfg.j0t_max = doc.get_double_or("schedule", "j0t_max", 0.0);
    cfg.points_per_decade =
        static_cast<int>(doc.get_int_or("schedule", "points_per_decade", 8));
    if (cfg.j0t_min == 0.0 && cfg.j0t_max == 0.0) {
        switch (cfg.kind) {
            case ExperimentKind::two_ion_local_adiabatic:
                cfg.j0t_min = 1e-3; cfg.j0t_max = 4.0; break;
            case ExperimentKind::kzm_sweep:
                cfg.j0t_min = 0.7; cfg.j0t_max = 3.5; break;
            case ExperimentKind::afm_sweep:
                cfg.j0t_min = 0.8; cfg.j0t_max = 8.5; break;
            case ExperimentKind::calibration:
                break;
        }
    }
    if (cfg.kind != ExperimentKind::calibration && cfg.t_list_s.empty()) {
        if (!(cfg.j0t_max > cfg.j0t_min && cfg.j0t_min > 0.0))
            throw SchemaError("[schedule] need a t_list or a valid j0t range");
    }
    return cfg;
}

KvDoc ExperimentConfig::to_doc() const {
    KvDoc doc;
    doc.set_int("", "schema_version", kConfigSchemaVersion);
    doc.set("experiment", "kind", kind_name(kind));
    doc.set("experiment", "output_dir", output_dir);
    doc.set_int("experiment", "seed", static_cast<long>(seed));
    doc.set_int("experiment", "threads", threads);
    doc.set("units", "frequency_convention", "angular");

    doc.set("coupling", "source",
            source == CouplingSourceKind::power_law ? "power_law" : "trap_laser");
    doc.set_int("coupling", "ion_count", ion_count);
    if (source == CouplingSourceKind::power_law) {
        doc.set_double("coupling", "j0", j0);
        doc.set_double("coupling", "alpha", alpha);
    } else {
        doc.set_double("coupling", "axial_freq", trap.axial_freq);
        doc.set_double("coupling", "transverse_freq", trap.transverse_freq);
        if (!trap.transverse_profile.empty())
            doc.set("coupling", "transverse_profile",
                    join_doubles(trap.transverse_profile));
        doc.set_double("coupling", "ion_mass_amu", trap.ion_mass / kAtomicMassUnit);
        doc.set_double("coupling", "charge_e", trap.charge / kElementaryCharge);
        doc.set_double("coupling", "quartic", trap.quartic);
        doc.set_double("coupling", "detuning_offset", detuning_offset);
        doc.set_double("coupling", "delta_k_per_m", wavevector_difference);
        doc.set_double("coupling", "beam_fwhm_um", beam.fwhm * 1e6);
        doc.set_double("coupling", "beam_center_um", beam.center * 1e6);
        doc.set_double("coupling", "peak_rabi", beam.peak_rabi);
        doc.set_double("coupling", "resonance_guard", resonance_guard);
        if (!spectrum_file.empty()) doc.set("coupling", "spectrum_file", spectrum_file);
        doc.set("coupling", "spectrum_fit_model",
                spectrum_fit_model == SpectrumFitModel::axial_quartic ? "axial_quartic"
                                                                      : "raw_positions");
    }

    doc.set("schedule", "kind", schedule_name(schedule_kind));
    doc.set("schedule", "protocol", protocol == HamiltonianSign::fm ? "fm" : "afm");
    doc.set_double("schedule", "b0_over_j0", b0_over_j0);
    doc.set_double("schedule", "tau_over_t", tau_over_t);
    doc.set_int("schedule", "gap_grid_points", gap_grid_points);
    if (!t_list_s.empty()) doc.set("schedule", "t_list_s", join_doubles(t_list_s));
    else {
        doc.set_double("schedule", "j0t_min", j0t_min);
        doc.set_double("schedule", "j0t_max", j0t_max);
        doc.set_int("schedule", "points_per_decade", points_per_decade);
    }

    doc.set("measurement", "mode", measure == MeasureMode::exact ? "exact" : "sampled");
    doc.set_int("measurement", "shots", shots);
    doc.set_double("measurement", "flip_prob", flip_prob);
    doc.set_int("measurement", "edge_discard", edge_discard);
    doc.set("measurement", "write_shots", write_shots ? "true" : "false");

    doc.set_double("engine", "tolerance", tolerance);
    doc.set_int("engine", "max_spins", max_spins);
    return doc;
}

// ---------------------------------------------------------------------------
// coupling resolution

ResolvedCoupling resolve_coupling(const ExperimentConfig& cfg) {
    ResolvedCoupling out;
    if (cfg.source == CouplingSourceKind::power_law) {
        out.matrix = power_law_couplings(cfg.ion_count, cfg.j0, cfg.alpha);
        out.j0_magnitude = std::abs(cfg.j0);
        out.alpha = cfg.alpha;
        return out;
    }

    CalibrationResult cal;
    if (!cfg.spectrum_file.empty()) {
        const std::vector<double> measured = load_spectrum_file(cfg.spectrum_file);
        TrapParams guess = cfg.trap;
        // pin the transverse frequency to the top measured mode, as for a
        // center-of-mass calibration
        if (guess.transverse_profile.empty() && !measured.empty())
            guess.transverse_freq = *std::max_element(measured.begin(), measured.end());
        SpectrumFit fit =
            fit_positions_from_spectrum(measured, guess, cfg.spectrum_fit_model);
        cal.chain = fit.chain;
        cal.spectrum_fit_rms = fit.rms_residual;
        cal.modes = transverse_modes(cal.chain, fit.fitted_trap);
    } else {
        cal.chain = equilibrium_positions(cfg.trap);
        cal.modes = transverse_modes(cal.chain, cfg.trap);
    }

    LaserParams laser;
    laser.wavevector_difference = cfg.wavevector_difference;
    laser.detuning = cal.modes.frequencies.maxCoeff() + cfg.detuning_offset;
    laser.resonance_guard = cfg.resonance_guard;

    const Eigen::VectorXd rabi = rabi_profile(cfg.beam, cal.chain);
    cal.couplings = ising_couplings(rabi, cal.modes, laser, cfg.trap.ion_mass);
    cal.power_fit = fit_power_law(cal.couplings);
    cal.resonances = spin_flip_resonances(cal.couplings);
    cal.kac = kac_norm(cfg.ion_count, cal.power_fit.alpha);
    const double eta_top = laser.lamb_dicke(cal.modes.frequencies[0], cfg.trap.ion_mass);
    cal.phonon_error =
        phonon_error_estimate(eta_top, rabi.maxCoeff(), laser.sideband_gap(cal.modes));

    out.matrix = cal.couplings;
    out.j0_magnitude = cal.power_fit.j0;
    out.alpha = cal.power_fit.alpha;
    out.calibration = std::move(cal);
    return out;
}

// ---------------------------------------------------------------------------
// per-point serialization (manifest + resume files)

namespace {

void point_to_doc(const TPointResult& p, KvDoc& doc, const std::string& sec) {
    doc.set_double(sec, "T_s", p.t_s);
    doc.set_double(sec, "J0T", p.j0t);
    doc.set_double(sec, "rho", p.rho.value);
    doc.set_double(sec, "rho_err", p.rho.error);
    doc.set_double(sec, "norm_drift", p.norm_drift);
    doc.set_int(sec, "steps", p.steps);
    if (!p.profile.distances.empty()) {
        doc.set(sec, "r_list", join_ints(p.profile.distances));
        doc.set(sec, "G_list", join_doubles(p.profile.g));
        doc.set(sec, "Nr_list", join_ints(p.profile.pair_counts));
        doc.set(sec, "stderr_list", join_doubles(p.profile.stderrs));
        doc.set_int(sec, "first_kept", p.profile.first_kept);
        doc.set_int(sec, "last_kept", p.profile.last_kept);
    }
    if (p.corr_fit) {
        doc.set_double(sec, "R", p.corr_fit->r_length);
        doc.set_double(sec, "R_err", p.corr_fit->r_err);
        doc.set_double(sec, "fit_A", p.corr_fit->a);
        doc.set_double(sec, "fit_B", p.corr_fit->b);
        const char* oc = p.corr_fit->outcome == FitOutcome::converged ? "converged"
                         : p.corr_fit->outcome == FitOutcome::unresolved_length
                             ? "unresolved_length"
                             : "degenerate";
        doc.set(sec, "fit_outcome", oc);
    }
    if (!p.note.empty()) doc.set(sec, "note", p.note);
    for (std::size_t i = 0; i < p.warnings.size(); ++i)
        doc.set(sec, "warning." + std::to_string(i), p.warnings[i]);
}

std::vector<double> split_doubles(const std::string& s) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::istringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoi(cell));
    return out;
}

TPointResult point_from_doc(const KvDoc& doc, const std::string& sec, int index) {
    TPointResult p;
    p.index = index;
    p.t_s = doc.get_double(sec, "T_s");
    p.j0t = doc.get_double(sec, "J0T");
    p.rho.value = doc.get_double(sec, "rho");
    p.rho.error = doc.get_double(sec, "rho_err");
    p.norm_drift = doc.get_double_or(sec, "norm_drift", 0.0);
    p.steps = doc.get_int_or(sec, "steps", 0);
    if (doc.has(sec, "r_list")) {
        p.profile.distances = split_ints(doc.get(sec, "r_list"));
        p.profile.g = split_doubles(doc.get(sec, "G_list"));
        p.profile.pair_counts = split_ints(doc.get(sec, "Nr_list"));
        p.profile.stderrs = split_doubles(doc.get(sec, "stderr_list"));
        p.profile.first_kept = static_cast<int>(doc.get_int_or(sec, "first_kept", 0));
        p.profile.last_kept = static_cast<int>(doc.get_int_or(sec, "last_kept", 0));
    }
    if (doc.has(sec, "R")) {
        CorrLengthFit f;
        f.r_length = doc.get_double(sec, "R");
        f.r_err = doc.get_double(sec, "R_err");
        f.a = doc.get_double_or(sec, "fit_A", 0.0);
        f.b = doc.get_double_or(sec, "fit_B", 0.0);
        const std::string oc = doc.get_or(sec, "fit_outcome", "converged");
        f.outcome = oc == "unresolved_length" ? FitOutcome::unresolved_length
                    : oc == "degenerate"      ? FitOutcome::degenerate
                                              : FitOutcome::converged;
        if (!p.profile.distances.empty()) {
            f.r_min = p.profile.distances.front();
            f.r_max = p.profile.distances.back();
        }
        p.corr_fit = f;
    }
    p.note = doc.get_or(sec, "note", "");
    for (int i = 0;; ++i) {
        auto w = doc.find(sec, "warning." + std::to_string(i));
        if (!w) break;
        p.warnings.push_back(*w);
    }
    return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// manifest serialization

KvDoc RunManifest::to_doc() const {
    KvDoc doc;
    doc.set("manifest", "toolkit_version", kToolkitVersion);
    doc.set("manifest", "kind", kind_name(config.kind));
    doc.set_int("manifest", "seed", static_cast<long>(config.seed));
    doc.set_double("manifest", "wall_seconds", wall_seconds);
    for (std::size_t i = 0; i < notes.size(); ++i)
        doc.set("manifest", "note." + std::to_string(i), notes[i]);

    const KvDoc cfg_doc = config.to_doc();
    for (const auto& sec : cfg_doc.sections()) {
        const std::string name = sec.name.empty() ? "config" : "config." + sec.name;
        for (const auto& e : sec.entries) doc.set(name, e.key, e.value);
    }

    doc.set_int("result", "point_count", static_cast<long>(points.size()));
    for (const auto& p : points)
        point_to_doc(p, doc, "result.point." + std::to_string(p.index));

    if (slope) {
        doc.set_int("result.slope", "N", config.ion_count);
        doc.set_double("result.slope", "mu", slope->mu);
        doc.set_double("result.slope", "sigma_mu", slope->mu_err);
        doc.set_double("result.slope", "intercept", slope->intercept);
        doc.set_double("result.slope", "reduced_chi2", slope->reduced_chi2);
    }
    if (rho_tail_slope) {
        doc.set_double("result.rho_tail", "slope", rho_tail_slope->mu);
        doc.set_double("result.rho_tail", "sigma", rho_tail_slope->mu_err);
    }
    if (calibration) {
        const auto& c = *calibration;
        doc.set_double("result.calibration", "J0_rad_per_s", c.power_fit.j0);
        doc.set_double("result.calibration", "J0_err", c.power_fit.j0_err);
        doc.set_double("result.calibration", "alpha", c.power_fit.alpha);
        doc.set_double("result.calibration", "alpha_err", c.power_fit.alpha_err);
        doc.set_double("result.calibration", "log_rms_residual", c.power_fit.log_rms_residual);
        doc.set_double("result.calibration", "kac_norm", c.kac);
        doc.set_double("result.calibration", "phonon_error", c.phonon_error);
        doc.set_double("result.calibration", "spectrum_fit_rms", c.spectrum_fit_rms);
        std::vector<double> pos(c.chain.positions.data(),
                                c.chain.positions.data() + c.chain.positions.size());
        for (auto& v : pos) v *= 1e6;
        doc.set("result.calibration", "positions_um", join_doubles(pos));
        std::vector<double> freqs(c.modes.frequencies.data(),
                                  c.modes.frequencies.data() + c.modes.frequencies.size());
        doc.set("result.calibration", "mode_freqs_rad_per_s", join_doubles(freqs));
        std::vector<double> res(c.resonances.data(),
                                c.resonances.data() + c.resonances.size());
        doc.set("result.calibration", "resonances_rad_per_s", join_doubles(res));
    }
    return doc;
}

KvDoc config_from_manifest(const KvDoc& manifest) {
    KvDoc cfg;
    for (const auto& sec : manifest.sections()) {
        if (sec.name == "config") {
            for (const auto& e : sec.entries) cfg.set("", e.key, e.value);
        } else if (sec.name.rfind("config.", 0) == 0) {
            const std::string name = sec.name.substr(7);
            for (const auto& e : sec.entries) cfg.set(name, e.key, e.value);
        }
    }
    return cfg;
}

RunManifest manifest_from_doc(const KvDoc& doc) {
    RunManifest m;
    m.config = ExperimentConfig::from_doc(config_from_manifest(doc));
    const long count = doc.get_int_or("result", "point_count", 0);
    for (long i = 0; i < count; ++i) {
        const std::string sec = "result.point." + std::to_string(i);
        if (!doc.has_section(sec))
            throw SchemaError("manifest: missing section [" + sec + "]");
        m.points.push_back(point_from_doc(doc, sec, static_cast<int>(i)));
    }
    if (doc.has_section("result.slope")) {
        SlopeFit s;
        s.mu = doc.get_double("result.slope", "mu");
        s.mu_err = doc.get_double("result.slope", "sigma_mu");
        s.intercept = doc.get_double_or("result.slope", "intercept", 0.0);
        s.reduced_chi2 = doc.get_double_or("result.slope", "reduced_chi2", 0.0);
        s.err_defined = std::isfinite(s.mu_err);
        m.slope = s;
    }
    if (doc.has_section("result.rho_tail")) {
        SlopeFit s;
        s.mu = doc.get_double("result.rho_tail", "slope");
        s.mu_err = doc.get_double_or("result.rho_tail", "sigma", 0.0);
        m.rho_tail_slope = s;
    }
    m.wall_seconds = doc.get_double_or("manifest", "wall_seconds", 0.0);
    for (int i = 0;; ++i) {
        auto n = doc.find("manifest", "note." + std::to_string(i));
        if (!n) break;
        m.notes.push_back(*n);
    }
    return m;
}

// ---------------------------------------------------------------------------
// sweep execution

namespace {

std::vector<double> resolve_t_list(const ExperimentConfig& cfg, double j0_mag) {
    if (!cfg.t_list_s.empty()) return cfg.t_list_s;
    const double lo = cfg.j0t_min / j0_mag;
    const double hi = cfg.j0t_max / j0_mag;
    const double decades = std::log10(hi / lo);
    const int n = std::max(2, static_cast<int>(std::lround(cfg.points_per_decade * decades)) + 1);
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] =
            lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    return out;
}

TPointResult run_single_point(const ExperimentConfig& cfg, const CouplingMatrix& j,
                              double j0_mag, const std::optional<GapProfile>& gaps,
                              int index, double t_s) {
    TPointResult p;
    p.index = index;
    p.t_s = t_s;
    p.j0t = j0_mag * t_s;

    const double b0 = cfg.b0_over_j0 * j0_mag;
    QuenchSchedule sched;
    switch (cfg.schedule_kind) {
        case ScheduleKind::linear:
            sched = linear_schedule(b0, t_s, cfg.protocol);
            break;
        case ScheduleKind::exponential:
            sched = exponential_schedule(b0, t_s, cfg.protocol, cfg.tau_over_t * t_s);
            break;
        case ScheduleKind::local_adiabatic:
            sched = local_adiabatic_schedule(*gaps, b0, t_s, cfg.protocol);
            break;
    }

    std::string memwarn;
    const SpinDirection dir = cfg.protocol == HamiltonianSign::fm ? SpinDirection::up_y
                                                                  : SpinDirection::down_y;
    SpinState psi0 = initial_state(cfg.ion_count, dir, cfg.max_spins, &memwarn);
    if (!memwarn.empty()) p.warnings.push_back(memwarn);

    EvolveResult ev = evolve(psi0, j, sched, cfg.tolerance);
    p.norm_drift = ev.norm_drift;
    p.steps = ev.accepted_steps;
    for (auto& w : ev.warnings) p.warnings.push_back(w);
    const SpinState& final_state = ev.snapshots.back().state;

    const int discard =
        cfg.edge_discard >= 0 ? cfg.edge_discard : default_edge_discard(cfg.ion_count);

    if (cfg.measure == MeasureMode::exact) {
        p.rho = defect_density(final_state);
        try {
            p.profile = correlation_profile(final_state, discard);
        } catch (const InvalidInputError& e) {
            p.note = std::string("correlation profile skipped: ") + e.what();
        }
    } else {
        MeasurementModel model;
        model.shots = cfg.shots;
        model.flip_prob = cfg.flip_prob;
        model.rng_seed = detail::mix64(cfg.seed ^ detail::mix64(
                                           static_cast<std::uint64_t>(index) + 1));
        ShotSet shots = sample_measurements(final_state, MeasurementBasis::x, model);
        if (cfg.write_shots) {
            const fs::path path = fs::path(cfg.output_dir) /
                                  ("shots_T" + std::to_string(index) + ".csv");
            write_shot_file(path.string(), shots, t_s);
        }
        p.rho = defect_density(shots);
        try {
            p.profile = correlation_profile(shots, discard, 0, model.rng_seed);
        } catch (const InvalidInputError& e) {
            p.note = std::string("correlation profile skipped: ") + e.what();
        }
    }

    if (p.profile.distances.size() >= 3) {
        try {
            p.corr_fit = fit_correlation_length(p.profile);
        } catch (const NonConvergenceError& e) {
            p.note = std::string("correlation-length fit failed: ") + e.what();
        }
    } else if (p.note.empty() && !p.profile.distances.empty()) {
        p.note = "correlation-length fit skipped: fewer than 3 distances";
    }
    return p;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& cfg, bool resume) {
    const auto t_start = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.config = cfg;
    for (const auto& w : cfg.warnings) manifest.notes.push_back(w);

    fs::create_directories(cfg.output_dir);

    ResolvedCoupling coupling = resolve_coupling(cfg);
    manifest.calibration = coupling.calibration;

    if (cfg.kind == ExperimentKind::calibration) {
        if (!manifest.calibration)
            throw SchemaError("calibration experiment requires the trap_laser source");
        const auto& cal = *manifest.calibration;
        write_coupling_csv((fs::path(cfg.output_dir) / "coupling.csv").string(),
                           cal.couplings);
        write_positions_csv((fs::path(cfg.output_dir) / "positions.csv").string(),
                            cal.chain);
        {
            std::ofstream res((fs::path(cfg.output_dir) / "resonances.csv").string());
            if (!res) throw IoError("cannot write resonances.csv");
            res << "index,DeltaE_rad_per_s\n";
            res.precision(17);
            for (Eigen::Index i = 0; i < cal.resonances.size(); ++i)
                res << i << "," << cal.resonances[i] << "\n";
        }
        manifest.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
                .count();
        manifest.to_doc().save_atomic(
            (fs::path(cfg.output_dir) / "manifest.kv").string());
        return manifest;
    }

    // quench sweep
    ExperimentConfig run_cfg = cfg;
    run_cfg.t_list_s = resolve_t_list(cfg, coupling.j0_magnitude);
    manifest.config = run_cfg;
    const std::vector<double>& t_list = run_cfg.t_list_s;

    std::optional<GapProfile> gaps;
    if (cfg.schedule_kind == ScheduleKind::local_adiabatic) {
        const double b0 = cfg.b0_over_j0 * coupling.j0_magnitude;
        gaps = compute_gap_profile(coupling.matrix, b0, cfg.protocol, cfg.gap_grid_points);
    }

    const std::string cfg_print = run_cfg.to_doc().serialize();
    const std::uint64_t cfg_hash = fingerprint(cfg_print);
    const fs::path partial_dir = fs::path(cfg.output_dir) / "partial";
    fs::create_directories(partial_dir);

    std::vector<std::optional<TPointResult>> results(t_list.size());
    std::vector<std::string> errors(t_list.size());

    if (resume) {
        for (std::size_t i = 0; i < t_list.size(); ++i) {
            const fs::path f = partial_dir / ("point_" + std::to_string(i) + ".kv");
            if (!fs::exists(f)) continue;
            try {
                KvDoc doc = KvDoc::load(f.string());
                if (static_cast<std::uint64_t>(doc.get_int_or("point", "config_hash", 0)) !=
                    cfg_hash)
                    continue;  // stale result from a different config
                results[i] = point_from_doc(doc, "point", static_cast<int>(i));
                manifest.notes.push_back("resumed point " + std::to_string(i) +
                                         " from partial results");
            } catch (const Error&) {
                // unreadable partial file: recompute
            }
        }
    }

    std::atomic<std::size_t> cursor{0};
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = std::min<std::size_t>(
        cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : hw, t_list.size());

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= t_list.size()) return;
            if (results[i]) continue;  // resumed
            try {
                TPointResult p = run_single_point(run_cfg, coupling.matrix,
                                                  coupling.j0_magnitude, gaps,
                                                  static_cast<int>(i), t_list[i]);
                KvDoc doc;
                doc.set_int("point", "config_hash", static_cast<long>(cfg_hash));
                point_to_doc(p, doc, "point");
                doc.save_atomic(
                    (partial_dir / ("point_" + std::to_string(i) + ".kv")).string());
                results[i] = std::move(p);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < workers; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < t_list.size(); ++i) {
        if (!errors[i].empty())
            throw Error("run failed at T = " + format_double(t_list[i]) + " s (point " +
                        std::to_string(i) + "): " + errors[i]);
        manifest.points.push_back(std::move(*results[i]));
    }

    // R ~ T^mu slope over the points with a resolved correlation length
    std::vector<ScalingPoint> slope_points;
    for (const auto& p : manifest.points) {
        if (p.corr_fit && p.corr_fit->outcome == FitOutcome::converged &&
            p.corr_fit->r_length > 0.0) {
            ScalingPoint sp;
            sp.n_ions = cfg.ion_count;
            sp.j0t = p.j0t;
            sp.r_length = p.corr_fit->r_length;
            sp.r_err = std::isfinite(p.corr_fit->r_err) ? p.corr_fit->r_err : 0.0;
            slope_points.push_back(sp);
        }
    }
    if (slope_points.size() >= 2) {
        try {
            manifest.slope = fit_kzm_slope(slope_points);
        } catch (const InvalidInputError& e) {
            manifest.notes.push_back(std::string("slope fit skipped: ") + e.what());
        }
    } else {
        manifest.notes.push_back("slope fit skipped: fewer than 2 resolved lengths");
    }

    // defect-density tail slope over the largest simulated decade
    {
        double jt_max = 0.0;
        for (const auto& p : manifest.points) jt_max = std::max(jt_max, p.j0t);
        std::vector<ScalingPoint> tail;
        for (const auto& p : manifest.points) {
            if (p.j0t >= jt_max / 10.0 && p.rho.value > 0.0) {
                ScalingPoint sp;
                sp.n_ions = cfg.ion_count;
                sp.j0t = p.j0t;
                sp.r_length = p.rho.value;  // reuse the ln-ln fit machinery
                sp.r_err = 0.0;
                tail.push_back(sp);
            }
        }
        if (tail.size() >= 3) {
            try {
                manifest.rho_tail_slope = fit_kzm_slope(tail);
            } catch (const InvalidInputError&) {
            }
        }
    }

    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    manifest.to_doc().save_atomic((fs::path(cfg.output_dir) / "manifest.kv").string());
    return manifest;
}

// ---------------------------------------------------------------------------
// external shot ingestion

RunManifest ingest_shots(const std::vector<std::string>& paths,
                         const ExperimentConfig& cfg) {
    if (paths.empty()) throw InvalidInputError("ingest_shots: no input files");
    const auto t_start = std::chrono::steady_clock::now();

    RunManifest manifest;
    manifest.config = cfg;

    ResolvedCoupling coupling = resolve_coupling(cfg);

    struct Loaded {
        std::string path;
        LoadedShots data;
    };
    std::vector<Loaded> files;
    int n_ions = -1;
    for (const auto& p : paths) {
        Loaded l{p, load_shot_file(p)};
        if (n_ions < 0) n_ions = l.data.shots.n_ions;
        else if (n_ions != l.data.shots.n_ions)
            throw SchemaError("ingest_shots: inconsistent ion counts across files (" +
                              std::to_string(n_ions) + " vs " +
                              std::to_string(l.data.shots.n_ions) + " in " + p + ")");
        files.push_back(std::move(l));
    }
    if (n_ions != cfg.ion_count)
        manifest.notes.push_back("shot files carry N=" + std::to_string(n_ions) +
                                 ", config says N=" + std::to_string(cfg.ion_count) +
                                 "; using the files");

    // quench times: per-file header, or positional from the config list
    for (std::size_t i = 0; i < files.size(); ++i) {
        double t_s = 0.0;
        if (files[i].data.quench_time) t_s = *files[i].data.quench_time;
        else if (i < cfg.t_list_s.size()) t_s = cfg.t_list_s[i];
        else
            throw SchemaError("ingest_shots: no quench time for " + files[i].path +
                              " (missing T_s header and no [schedule] t_list entry)");

        TPointResult p;
        p.index = static_cast<int>(i);
        p.t_s = t_s;
        p.j0t = coupling.j0_magnitude * t_s;
        const ShotSet& shots = files[i].data.shots;
        const int discard =
            cfg.edge_discard >= 0 ? cfg.edge_discard : default_edge_discard(n_ions);
        p.rho = defect_density(shots);
        try {
            p.profile = correlation_profile(
                shots, discard, 0,
                detail::mix64(cfg.seed ^ detail::mix64(static_cast<std::uint64_t>(i) + 1)));
            if (p.profile.distances.size() >= 3) p.corr_fit = fit_correlation_length(p.profile);
        } catch (const Error& e) {
            p.note = e.what();
        }
        p.warnings.push_back("source_file: " + files[i].path);
        manifest.points.push_back(std::move(p));
    }
    std::sort(manifest.points.begin(), manifest.points.end(),
              [](const TPointResult& a, const TPointResult& b) { return a.t_s < b.t_s; });
    for (std::size_t i = 0; i < manifest.points.size(); ++i)
        manifest.points[i].index = static_cast<int>(i);

    std::vector<ScalingPoint> slope_points;
    for (const auto& p : manifest.points) {
        if (p.corr_fit && p.corr_fit->outcome == FitOutcome::converged) {
            ScalingPoint sp;
            sp.n_ions = n_ions;
            sp.j0t = p.j0t;
            sp.r_length = p.corr_fit->r_length;
            sp.r_err = std::isfinite(p.corr_fit->r_err) ? p.corr_fit->r_err : 0.0;
            slope_points.push_back(sp);
        }
    }
    if (slope_points.size() >= 2) {
        try {
            manifest.slope = fit_kzm_slope(slope_points);
        } catch (const InvalidInputError& e) {
            manifest.notes.push_back(std::string("slope fit skipped: ") + e.what());
        }
    }

    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    fs::create_directories(cfg.output_dir);
    manifest.to_doc().save_atomic((fs::path(cfg.output_dir) / "manifest.kv").string());
    return manifest;
}

}  // namespace kzmsim
