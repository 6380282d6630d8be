// kzmsim command line: simulate (run an experiment config), analyze
// (ingest shot files), fit-fss (finite-size extrapolation of slopes), and
// report (re-emit tables/plots from a manifest).
//
// Exit codes: 0 success, 2 invalid config/input, 3 numerical failure,
// 4 I/O failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kzmsim/errors.hpp"
#include "kzmsim/experiment.hpp"
#include "kzmsim/report.hpp"
#include "kzmsim/scaling.hpp"

namespace fs = std::filesystem;
using namespace kzmsim;

namespace {

int classify_exit(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return 4;
    if (dynamic_cast<const SchemaError*>(&e) || dynamic_cast<const InvalidInputError*>(&e) ||
        dynamic_cast<const MalformedDataError*>(&e))
        return 2;
    if (dynamic_cast<const Error*>(&e)) return 3;
    return 3;
}

// expand a trailing `*` glob in the filename component
std::vector<std::string> expand_glob(const std::string& pattern) {
    if (pattern.find('*') == std::string::npos) return {pattern};
    const fs::path p(pattern);
    const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    const std::string name = p.filename().string();
    const auto star = name.find('*');
    const std::string prefix = name.substr(0, star);
    const std::string suffix = name.substr(star + 1);
    std::vector<std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string f = entry.path().filename().string();
        if (f.size() >= prefix.size() + suffix.size() && f.rfind(prefix, 0) == 0 &&
            f.compare(f.size() - suffix.size(), suffix.size(), suffix) == 0)
            out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void print_sweep_summary(const RunManifest& m) {
    std::cout << "points: " << m.points.size() << "\n";
    for (const auto& p : m.points) {
        std::cout << "  T = " << p.t_s << " s  |J0|T = " << p.j0t
                  << "  rho = " << p.rho.value;
        if (p.corr_fit)
            std::cout << "  R = " << p.corr_fit->r_length << " +- " << p.corr_fit->r_err;
        std::cout << "\n";
    }
    if (m.slope)
        std::cout << "slope mu = " << m.slope->mu << " +- " << m.slope->mu_err << "\n";
    if (m.rho_tail_slope)
        std::cout << "rho tail slope = " << m.rho_tail_slope->mu << "\n";
    for (const auto& n : m.notes) std::cout << "note: " << n << "\n";
    std::cout << "manifest: " << (fs::path(m.config.output_dir) / "manifest.kv").string()
              << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trapped-ion Kibble-Zurek simulation toolkit"};
    app.require_subcommand(1);

    // --- simulate ---
    auto* sim = app.add_subcommand("simulate", "run an experiment config");
    std::string sim_config;
    long sim_seed = -1;
    int sim_threads = -1;
    bool sim_resume = false;
    bool sim_svg = false;
    sim->add_option("--config", sim_config, "experiment config file")->required();
    sim->add_option("--seed", sim_seed, "override the config seed");
    sim->add_option("--threads", sim_threads, "worker threads for the T sweep");
    sim->add_flag("--resume", sim_resume, "reuse completed per-T partial results");
    sim->add_flag("--svg", sim_svg, "also render SVG plots");

    // --- analyze ---
    auto* ana = app.add_subcommand("analyze", "analyze shot files");
    std::vector<std::string> ana_shots;
    std::string ana_config;
    bool ana_svg = false;
    ana->add_option("--shots", ana_shots, "shot file(s); a trailing * globs")->required();
    ana->add_option("--config", ana_config, "experiment config file")->required();
    ana->add_flag("--svg", ana_svg, "also render SVG plots");

    // --- fit-fss ---
    auto* fss = app.add_subcommand("fit-fss", "finite-size extrapolation of slopes");
    std::string fss_csv;
    fss->add_option("--slopes", fss_csv, "CSV with N,mu,sigma_mu rows")->required();

    // --- report ---
    auto* rep = app.add_subcommand("report", "emit tables/plots from a manifest");
    std::string rep_manifest;
    bool rep_svg = false;
    rep->add_option("--manifest", rep_manifest, "manifest file")->required();
    rep->add_flag("--svg", rep_svg, "also render SVG plots");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            ExperimentConfig cfg = ExperimentConfig::from_file(sim_config);
            if (sim_seed >= 0) cfg.seed = static_cast<std::uint64_t>(sim_seed);
            if (sim_threads >= 0) cfg.threads = sim_threads;
            RunManifest m = run_experiment(cfg, sim_resume);
            if (cfg.kind == ExperimentKind::calibration) {
                const auto& c = *m.calibration;
                std::cout << "J0 = " << c.power_fit.j0 << " rad/s (= 2pi x "
                          << angular_to_hz(c.power_fit.j0) << " Hz) +- "
                          << c.power_fit.j0_err << "\n";
                std::cout << "alpha = " << c.power_fit.alpha << " +- "
                          << c.power_fit.alpha_err << "\n";
                std::cout << "kac norm = " << c.kac
                          << ", phonon error estimate = " << c.phonon_error << "\n";
            } else {
                ReportOutcome rep_out = emit_report(m, /*csv=*/true, sim_svg);
                print_sweep_summary(m);
                for (const auto& n : rep_out.notices) std::cout << "note: " << n << "\n";
            }
            return 0;
        }
        if (*ana) {
            std::vector<std::string> files;
            for (const auto& pat : ana_shots)
                for (auto& f : expand_glob(pat)) files.push_back(f);
            if (files.empty()) throw InvalidInputError("analyze: no shot files matched");
            ExperimentConfig cfg = ExperimentConfig::from_file(ana_config);
            RunManifest m = ingest_shots(files, cfg);
            ReportOutcome rep_out = emit_report(m, /*csv=*/true, ana_svg);
            print_sweep_summary(m);
            for (const auto& n : rep_out.notices) std::cout << "note: " << n << "\n";
            return 0;
        }
        if (*fss) {
            std::ifstream in(fss_csv);
            if (!in) throw IoError("cannot open: " + fss_csv);
            std::string line;
            std::vector<MuPoint> points;
            int lineno = 0;
            while (std::getline(in, line)) {
                ++lineno;
                if (line.empty() || line[0] == '#' || line.rfind("N,", 0) == 0) continue;
                std::istringstream ss(line);
                MuPoint p;
                char c1, c2;
                if (!(ss >> p.n_ions >> c1 >> p.mu >> c2 >> p.sigma_mu) || c1 != ',' ||
                    c2 != ',')
                    throw MalformedDataError(fss_csv + " line " + std::to_string(lineno) +
                                             ": expected N,mu,sigma_mu");
                points.push_back(p);
            }
            FssFit fit = finite_size_extrapolation(points);
            std::cout << "mu_inf = " << fit.mu_inf << " +- " << fit.mu_inf_err << "\n";
            if (fit.outcome == FssOutcome::degenerate_flat) {
                std::cout << "flat input: a pinned to 0, mu_inf is the weighted mean\n";
            } else {
                std::cout << "a = " << fit.a << " +- " << fit.a_err << "\n";
                std::cout << "b = " << fit.b << " +- " << fit.b_err << "\n";
                std::cout << "chi2 = " << fit.chi2 << "\n";
            }
            return 0;
        }
        if (*rep) {
            RunManifest m = manifest_from_doc(KvDoc::load(rep_manifest));
            ReportOutcome rep_out = emit_report(m, /*csv=*/true, rep_svg);
            for (const auto& f : rep_out.files) std::cout << "wrote " << f << "\n";
            for (const auto& n : rep_out.notices) std::cout << "note: " << n << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_exit(e);
    }
    return 0;
}
