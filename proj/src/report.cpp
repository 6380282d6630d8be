#include "kzmsim/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kzmsim/errors.hpp"

namespace fs = std::filesystem;

namespace kzmsim {

namespace {

// -------------------------------------------------------------------------
// minimal SVG line-plot writer

struct Series {
    std::vector<double> x, y;
    std::string color;
    bool markers = false;
    bool line = true;
    std::string label;
};

struct Plot {
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;
    std::vector<Series> series;
};

constexpr double kW = 640, kH = 440;
constexpr double kL = 70, kR = 20, kT = 36, kB = 52;

double tx(double v, double lo, double hi, bool log) {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return kL + (a - l) / (h - l) * (kW - kL - kR);
}

double ty(double v, double lo, double hi, bool log) {
    const double a = log ? std::log10(v) : v;
    const double l = log ? std::log10(lo) : lo;
    const double h = log ? std::log10(hi) : hi;
    return kH - kB - (a - l) / (h - l) * (kH - kT - kB);
}

std::vector<double> axis_ticks(double lo, double hi, bool log) {
    std::vector<double> ticks;
    if (log) {
        const int e0 = static_cast<int>(std::floor(std::log10(lo)));
        const int e1 = static_cast<int>(std::ceil(std::log10(hi)));
        for (int e = e0; e <= e1; ++e) {
            const double v = std::pow(10.0, e);
            if (v >= lo * 0.999 && v <= hi * 1.001) ticks.push_back(v);
        }
        if (ticks.size() < 2) { ticks = {lo, hi}; }
    } else {
        const double span = hi - lo;
        const double raw = span / 5.0;
        const double mag = std::pow(10.0, std::floor(std::log10(raw)));
        double step = mag;
        for (double m : {1.0, 2.0, 5.0, 10.0})
            if (raw <= m * mag) { step = m * mag; break; }
        for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * span; v += step)
            ticks.push_back(v);
    }
    return ticks;
}

std::string fmt_tick(double v) {
    std::ostringstream s;
    if (v != 0.0 && (std::abs(v) >= 1e4 || std::abs(v) < 1e-3)) s << std::scientific;
    s.precision(3);
    s << v;
    return s.str();
}

void write_svg(const std::string& path, const Plot& plot) {
    double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
    bool first = true;
    for (const auto& s : plot.series) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (plot.logx && !(s.x[i] > 0)) continue;
            if (plot.logy && !(s.y[i] > 0)) continue;
            if (first) {
                xlo = xhi = s.x[i];
                ylo = yhi = s.y[i];
                first = false;
            }
            xlo = std::min(xlo, s.x[i]); xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]); yhi = std::max(yhi, s.y[i]);
        }
    }
    if (first) throw InvalidInputError("svg plot: no finite points");
    if (plot.logx) { xlo /= 1.3; xhi *= 1.3; }
    else { const double m = 0.06 * (xhi - xlo + 1e-30); xlo -= m; xhi += m; }
    if (plot.logy) { ylo /= 1.5; yhi *= 1.5; }
    else { const double m = 0.08 * (yhi - ylo + 1e-30); ylo -= m; yhi += m; }
    if (xhi <= xlo) xhi = xlo + 1;
    if (yhi <= ylo) yhi = ylo + 1;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write plot: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\""
        << kH << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\" "
           "font-family=\"sans-serif\">" << plot.title << "</text>\n";

    // axes
    out << "<rect x=\"" << kL << "\" y=\"" << kT << "\" width=\"" << kW - kL - kR
        << "\" height=\"" << kH - kT - kB
        << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (double v : axis_ticks(xlo, xhi, plot.logx)) {
        const double px = tx(v, xlo, xhi, plot.logx);
        out << "<line x1=\"" << px << "\" y1=\"" << kH - kB << "\" x2=\"" << px
            << "\" y2=\"" << kH - kB + 5 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << px << "\" y=\"" << kH - kB + 18
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
            << fmt_tick(v) << "</text>\n";
    }
    for (double v : axis_ticks(ylo, yhi, plot.logy)) {
        const double py = ty(v, ylo, yhi, plot.logy);
        out << "<line x1=\"" << kL - 5 << "\" y1=\"" << py << "\" x2=\"" << kL
            << "\" y2=\"" << py << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << kL - 8 << "\" y=\"" << py + 4
            << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">"
            << fmt_tick(v) << "</text>\n";
    }
    out << "<text x=\"" << (kL + kW - kR) / 2 << "\" y=\"" << kH - 12
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
        << plot.xlabel << "</text>\n";
    out << "<text x=\"16\" y=\"" << (kT + kH - kB) / 2
        << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
           "transform=\"rotate(-90 16 " << (kT + kH - kB) / 2 << ")\">"
        << plot.ylabel << "</text>\n";

    double legend_y = kT + 14;
    for (const auto& s : plot.series) {
        std::ostringstream pts;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (plot.logx && !(s.x[i] > 0)) continue;
            if (plot.logy && !(s.y[i] > 0)) continue;
            pts << tx(s.x[i], xlo, xhi, plot.logx) << ","
                << ty(s.y[i], ylo, yhi, plot.logy) << " ";
        }
        if (s.line)
            out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
                << s.color << "\" stroke-width=\"1.5\"/>\n";
        if (s.markers) {
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (plot.logx && !(s.x[i] > 0)) continue;
                if (plot.logy && !(s.y[i] > 0)) continue;
                out << "<circle cx=\"" << tx(s.x[i], xlo, xhi, plot.logx) << "\" cy=\""
                    << ty(s.y[i], ylo, yhi, plot.logy) << "\" r=\"3\" fill=\"" << s.color
                    << "\"/>\n";
            }
        }
        if (!s.label.empty()) {
            out << "<line x1=\"" << kW - kR - 150 << "\" y1=\"" << legend_y << "\" x2=\""
                << kW - kR - 130 << "\" y2=\"" << legend_y << "\" stroke=\"" << s.color
                << "\" stroke-width=\"2\"/>\n";
            out << "<text x=\"" << kW - kR - 125 << "\" y=\"" << legend_y + 4
                << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label
                << "</text>\n";
            legend_y += 16;
        }
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path);
}

std::string color_for(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    return palette[i % 8];
}

}  // namespace

ReportOutcome emit_report(const RunManifest& manifest, bool csv, bool svg) {
    ReportOutcome out;
    const fs::path dir(manifest.config.output_dir);
    fs::create_directories(dir);

    if (manifest.config.kind == ExperimentKind::calibration) {
        out.notices.push_back(
            "calibration manifests carry no sweep; coupling/positions/resonances "
            "CSVs are written by the run itself");
        return out;
    }
    if (manifest.points.empty()) {
        out.notices.push_back("empty sweep: nothing to report");
        return out;
    }

    auto add = [&](const fs::path& p) { out.files.push_back(p.string()); };

    if (csv) {
        {
            std::ofstream f(dir / "rho_vs_T.csv");
            if (!f) throw IoError("cannot write rho_vs_T.csv");
            f << "T_s,J0T,rho,rho_err\n";
            f.precision(17);
            for (const auto& p : manifest.points)
                f << p.t_s << "," << p.j0t << "," << p.rho.value << "," << p.rho.error
                  << "\n";
            add(dir / "rho_vs_T.csv");
        }
        {
            std::ofstream f(dir / "R_vs_T.csv");
            if (!f) throw IoError("cannot write R_vs_T.csv");
            f << "T_s,J0T,R,R_err\n";
            f.precision(17);
            for (const auto& p : manifest.points) {
                if (!p.corr_fit || p.corr_fit->outcome == FitOutcome::degenerate) continue;
                f << p.t_s << "," << p.j0t << "," << p.corr_fit->r_length << ","
                  << p.corr_fit->r_err << "\n";
            }
            add(dir / "R_vs_T.csv");
        }
        for (const auto& p : manifest.points) {
            if (p.profile.distances.empty()) continue;
            const fs::path f = dir / ("G_of_r_T" + std::to_string(p.index) + ".csv");
            write_correlation_csv(f.string(), p.profile);
            add(f);
        }
        {
            std::ofstream f(dir / "slopes.csv");
            if (!f) throw IoError("cannot write slopes.csv");
            f << "N,mu,sigma_mu\n";
            f.precision(17);
            if (manifest.slope)
                f << manifest.config.ion_count << "," << manifest.slope->mu << ","
                  << manifest.slope->mu_err << "\n";
            add(dir / "slopes.csv");
        }
    }

    if (svg) {
        // defect density vs quench time (log-log); tail guide when fitted
        {
            Plot plot;
            plot.title = "defect density vs quench time";
            plot.xlabel = "|J0| T";
            plot.ylabel = "rho";
            plot.logx = plot.logy = true;
            Series data;
            data.color = color_for(0);
            data.markers = true;
            data.label = "rho(T)";
            for (const auto& p : manifest.points) {
                data.x.push_back(p.j0t);
                data.y.push_back(p.rho.value);
            }
            plot.series.push_back(data);
            if (manifest.rho_tail_slope) {
                Series guide;
                guide.color = "#555555";
                guide.label = "tail fit";
                const auto& s = *manifest.rho_tail_slope;
                const double x0 = data.x.back() / 10.0, x1 = data.x.back();
                for (double x : {x0, x1}) {
                    guide.x.push_back(x);
                    guide.y.push_back(std::exp(s.intercept + s.mu * std::log(x)));
                }
                plot.series.push_back(guide);
            }
            const fs::path f = dir / "rho_vs_T.svg";
            write_svg(f.string(), plot);
            add(f);
        }

        // G(r) overlays with exponential fits
        bool any_profile = false;
        {
            Plot plot;
            plot.title = "connected correlation profiles";
            plot.xlabel = "r";
            plot.ylabel = "|G(r)|";
            plot.logy = true;
            std::size_t ci = 0;
            for (const auto& p : manifest.points) {
                if (p.profile.distances.empty()) continue;
                any_profile = true;
                Series s;
                s.color = color_for(ci);
                s.markers = true;
                s.line = false;
                {
                    std::ostringstream lab;
                    lab.precision(3);
                    lab << "|J0|T=" << p.j0t;
                    s.label = lab.str();
                }
                for (std::size_t k = 0; k < p.profile.distances.size(); ++k) {
                    s.x.push_back(p.profile.distances[k]);
                    s.y.push_back(std::abs(p.profile.g[k]));
                }
                plot.series.push_back(s);
                if (p.corr_fit && p.corr_fit->outcome == FitOutcome::converged) {
                    Series fit;
                    fit.color = color_for(ci);
                    for (double r = p.profile.distances.front();
                         r <= p.profile.distances.back() + 1e-9; r += 0.1) {
                        fit.x.push_back(r);
                        fit.y.push_back(std::abs(p.corr_fit->a * std::exp(-r / p.corr_fit->r_length) +
                                                 p.corr_fit->b));
                    }
                    plot.series.push_back(fit);
                }
                ++ci;
            }
            if (any_profile) {
                const fs::path f = dir / "G_of_r.svg";
                write_svg(f.string(), plot);
                add(f);
            } else {
                out.notices.push_back("G(r) plot skipped: no correlation profiles");
            }
        }

        // R vs T (log-log) with the fitted power law
        {
            Series data;
            data.color = color_for(0);
            data.markers = true;
            data.line = false;
            data.label = "R";
            for (const auto& p : manifest.points) {
                if (!p.corr_fit || p.corr_fit->outcome != FitOutcome::converged) continue;
                data.x.push_back(p.j0t);
                data.y.push_back(p.corr_fit->r_length);
            }
            if (data.x.size() >= 2) {
                Plot plot;
                plot.title = "correlation length vs quench time";
                plot.xlabel = "|J0| T";
                plot.ylabel = "R";
                plot.logx = plot.logy = true;
                plot.series.push_back(data);
                if (manifest.slope) {
                    Series fitline;
                    fitline.color = "#555555";
                    {
                        std::ostringstream lab;
                        lab.precision(3);
                        lab << "mu=" << manifest.slope->mu;
                        fitline.label = lab.str();
                    }
                    for (double x : {data.x.front(), data.x.back()}) {
                        fitline.x.push_back(x);
                        fitline.y.push_back(std::exp(manifest.slope->intercept +
                                                     manifest.slope->mu * std::log(x)));
                    }
                    plot.series.push_back(fitline);
                }
                const fs::path f = dir / "R_vs_T.svg";
                write_svg(f.string(), plot);
                add(f);
            } else {
                out.notices.push_back(
                    "R-vs-T plot skipped: fewer than 2 resolved correlation lengths");
            }
        }
    }
    return out;
}

}  // namespace kzmsim
