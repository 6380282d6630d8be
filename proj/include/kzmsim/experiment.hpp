// Experiment orchestration: config parsing, single runs and T sweeps,
// persistence (manifest + partial results for resume), and shot-file
// ingestion for analyzing external data.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kzmsim/chain.hpp"
#include "kzmsim/coupling.hpp"
#include "kzmsim/engine.hpp"
#include "kzmsim/kvdoc.hpp"
#include "kzmsim/observables.hpp"
#include "kzmsim/scaling.hpp"
#include "kzmsim/units.hpp"

namespace kzmsim {

inline constexpr const char* kToolkitVersion = "1.0.0";
inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind { two_ion_local_adiabatic, kzm_sweep, afm_sweep, calibration };
enum class CouplingSourceKind { power_law, trap_laser };
enum class MeasureMode { exact, sampled };

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::kzm_sweep;
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency

    // coupling source (exactly one)
    CouplingSourceKind source = CouplingSourceKind::power_law;
    int ion_count = 0;
    double j0 = 0.0;     // rad/s, magnitude used for J0T and B0 scaling
    double alpha = 1.0;  // power-law exponent
    // trap + laser route
    TrapParams trap;
    double detuning_offset = 0.0;      // rad/s above the top mode
    double wavevector_difference = 0.0;  // 1/m
    BeamProfile beam;
    double resonance_guard = hz_to_angular(100.0);
    std::string spectrum_file;  // calibration only; fit positions when set
    SpectrumFitModel spectrum_fit_model = SpectrumFitModel::axial_quartic;

    // schedule
    ScheduleKind schedule_kind = ScheduleKind::exponential;
    HamiltonianSign protocol = HamiltonianSign::fm;
    double b0_over_j0 = 42.5;
    double tau_over_t = 0.2;
    int gap_grid_points = 64;
    std::vector<double> t_list_s;  // resolved sweep times, seconds
    // |J0| T grid, used when t_list_s is empty (resolved after the coupling)
    double j0t_min = 0.0, j0t_max = 0.0;
    int points_per_decade = 8;

    // measurement
    MeasureMode measure = MeasureMode::exact;
    int shots = 4096;
    double flip_prob = 0.0;
    int edge_discard = -1;  // -1 = paper table / 0.13 N rule
    bool write_shots = false;

    // engine
    double tolerance = 1e-9;
    int max_spins = kDefaultSpinCap;

    std::vector<std::string> warnings;  // collected while parsing

    static ExperimentConfig from_doc(const KvDoc& doc);
    static ExperimentConfig from_file(const std::string& path);
    // normalized echo with every default resolved
    KvDoc to_doc() const;
};

struct TPointResult {
    int index = 0;
    double t_s = 0.0;
    double j0t = 0.0;
    ValueWithError rho;
    CorrelationProfile profile;  // empty when too few ions kept
    std::optional<CorrLengthFit> corr_fit;
    std::string note;  // fit outcome / skip reason
    double norm_drift = 0.0;
    long steps = 0;
    std::vector<std::string> warnings;
};

struct CalibrationResult {
    IonChain chain;
    ModeSpectrum modes;
    CouplingMatrix couplings;
    PowerLawFit power_fit;
    Eigen::VectorXd resonances;   // DeltaE_i, rad/s
    double kac = 0.0;
    double phonon_error = 0.0;
    double spectrum_fit_rms = 0.0;  // rad/s, when a spectrum file was fitted
};

struct RunManifest {
    ExperimentConfig config;
    std::vector<TPointResult> points;
    std::optional<SlopeFit> slope;            // ln R vs ln |J0|T
    std::optional<SlopeFit> rho_tail_slope;   // ln rho vs ln |J0|T, largest decade
    std::optional<CalibrationResult> calibration;
    double wall_seconds = 0.0;
    std::vector<std::string> notes;

    KvDoc to_doc() const;
};

// Build the coupling matrix (and |J0|, alpha) the config describes.
struct ResolvedCoupling {
    CouplingMatrix matrix;
    double j0_magnitude = 0.0;
    double alpha = 0.0;
    std::optional<CalibrationResult> calibration;  // trap_laser route only
};
ResolvedCoupling resolve_coupling(const ExperimentConfig& cfg);

// Execute the configured experiment. Per-T runs execute on a bounded worker
// pool; completed points are persisted under <output_dir>/partial/ and
// reused when `resume` is set. The manifest is written atomically to
// <output_dir>/manifest.kv.
RunManifest run_experiment(const ExperimentConfig& cfg, bool resume = false);

// Analyze externally supplied shot files with the same estimator path as
// sampled simulation runs (bootstrap error bars). Quench times come from the
// optional T_s header key, or positionally from cfg.t_list_s.
RunManifest ingest_shots(const std::vector<std::string>& paths, const ExperimentConfig& cfg);

// Extract the embedded config sections of a manifest document.
KvDoc config_from_manifest(const KvDoc& manifest);
RunManifest manifest_from_doc(const KvDoc& doc);

}  // namespace kzmsim
