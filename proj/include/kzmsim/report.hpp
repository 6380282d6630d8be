// Report emission: the CSV tables and static SVG plots derived from a run
// manifest (defect density vs quench time, correlation profiles with fits,
// correlation length vs quench time with the fitted slope).

#pragma once

#include <string>
#include <vector>

#include "kzmsim/experiment.hpp"

namespace kzmsim {

struct ReportOutcome {
    std::vector<std::string> files;     // paths written
    std::vector<std::string> notices;   // skipped outputs and why
};

// Writes into manifest.config.output_dir:
//   rho_vs_T.csv   T_s,J0T,rho,rho_err
//   R_vs_T.csv     T_s,J0T,R,R_err
//   G_of_r_T<i>.csv r,G,N_r,stderr       (one per sweep point)
//   slopes.csv     N,mu,sigma_mu
// and, with `svg`, rho_vs_T.svg, R_vs_T.svg, G_of_r.svg.
ReportOutcome emit_report(const RunManifest& manifest, bool csv, bool svg);

}  // namespace kzmsim
