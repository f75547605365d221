#pragma once

#include <chrono>
#include <iomanip>
#include <sstream>

#include "perilayer/expansion.hpp"

namespace perilayer {

// ---------------------------------------------------------------------------
// Convergence-study harness: cell -> macro -> nearfield -> expansion -> direct
// over a sequence of delta values, with empirical orders of convergence.

struct StudyConfig {
  DomainSpec domain;
  PeriodicityCell cell;
  CutoffProfile chi_profile;
  std::vector<double> deltas{0.25, 0.125, 0.0625};
  double bulk_h = 1.0 / 24;      // direct-solve bulk mesh size h0
  double macro_h = 1.0 / 24;     // limit-mesh size
  double alpha = 0.15;
  double l_band = 8.0;
  double band_h = 1.0 / 64;
  int max_order = 2;
  double sector_r_max = 16.0;
  double sector_h_near = 1.0 / 8;
  std::vector<double> levels{2.0 / 3.0, 1.0, 4.0 / 3.0};
  std::string out_dir;

  void validate() const {
    domain.validate();
    cell.validate();
    if (deltas.empty()) throw config_error("study: empty delta list");
    for (size_t i = 0; i + 1 < deltas.size(); ++i)
      if (!(deltas[i] > deltas[i + 1]))
        throw config_error("study: deltas must be strictly decreasing");
    for (double d : deltas) {
      const double q = 2.0 * domain.half_length / d;
      if (std::abs(q - std::lround(q)) > 1e-9)
        throw config_error("study: 2L/delta must be an integer for every delta");
    }
    if (!(alpha > 0.0) ||
        alpha >= 0.5 * std::min(domain.height_bottom, domain.height_top))
      throw config_error("study: alpha must satisfy 0 < alpha < min(H_B, H_T)/2");
  }
};

struct EocFit {
  double slope = 0.0;
  double half_width = 0.0;  // 1-sigma of the slope from the fit residuals
  bool degenerate = false;
};

/// Least-squares slope of log(error) against log(delta).
inline EocFit fit_eoc(const std::vector<double>& deltas,
                      const std::vector<double>& errors) {
  if (deltas.size() != errors.size() || deltas.size() < 3)
    throw config_error("fit_eoc: need at least 3 rows");
  const int n = static_cast<int>(deltas.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<double> lx(n), ly(n);
  for (int i = 0; i < n; ++i) {
    lx[i] = std::log(deltas[i]);
    ly[i] = std::log(std::max(errors[i], 1e-300));
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  const double det = n * sxx - sx * sx;
  EocFit out;
  out.slope = (n * sxy - sx * sy) / det;
  const double intercept = (sy * sxx - sx * sxy) / det;
  double ss = 0.0, sdx = 0.0;
  const double xbar = sx / n;
  for (int i = 0; i < n; ++i) {
    const double r = ly[i] - (intercept + out.slope * lx[i]);
    ss += r * r;
    sdx += (lx[i] - xbar) * (lx[i] - xbar);
  }
  out.half_width = n > 2 ? std::sqrt(ss / (n - 2) / sdx) : 0.0;
  // No meaningful decay, or noise comparable to the slope itself: flagged.
  out.degenerate =
      std::abs(out.slope) < 0.1 || out.half_width > 0.5 * std::abs(out.slope);
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline artifacts shared by every delta run (delta-independent).

struct PipelineArtifacts {
  PipelineArtifacts() = default;
  // Composites and the locator point into the members; never moved or copied.
  PipelineArtifacts(const PipelineArtifacts&) = delete;
  PipelineArtifacts& operator=(const PipelineArtifacts&) = delete;
  PipelineArtifacts(PipelineArtifacts&&) = delete;
  PipelineArtifacts& operator=(PipelineArtifacts&&) = delete;

  CellSolution cell;
  std::unique_ptr<MacroContext> macro_ctx;
  MacroField u00;
  MacroCorrection correction;
  MacroField s_plus, s_minus;
  NearFieldResult nf_plus, nf_minus;
  MatchedConstants matched;
  MacroField u20;
  std::shared_ptr<PointLocator> band_locator;

  CompositeApprox composite(double order) const {
    CompositeApprox c;
    c.ctx = macro_ctx.get();
    c.u00 = &u00;
    c.u01 = &correction.u01;
    c.u20 = &u20;
    c.traces = &correction.traces;
    c.band_mesh = &cell.band.mesh;
    c.w1n = &cell.profiles_n[1].field;
    c.band_locator = band_locator;
    c.l_band = cell.band.l_band;
    c.chi_profile = cell.band.chi_profile;
    c.order = order;
    c.trace_u01_mean = u01_trace;
    c.has_u01_trace = true;
    return c;
  }

  SmoothingSpline u01_trace;
};

struct StageLog {
  std::vector<std::pair<std::string, double>> timings;  // stage -> seconds

  template <typename F>
  auto timed(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    auto result = f();
    timings.emplace_back(
        name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                  .count());
    return result;
  }
};

inline std::unique_ptr<PipelineArtifacts> build_artifacts(const StudyConfig& cfg,
                                                          StageLog* log = nullptr) {
  StageLog local;
  StageLog& sl = log ? *log : local;
  auto owned = std::make_unique<PipelineArtifacts>();
  PipelineArtifacts& art = *owned;

  art.cell = sl.timed("cell", [&] {
    return transmission_constants(cfg.cell, cfg.chi_profile, cfg.l_band,
                                  cfg.band_h, cfg.max_order);
  });
  art.band_locator = std::make_shared<PointLocator>(art.cell.band.mesh);

  art.macro_ctx =
      std::make_unique<MacroContext>(cfg.domain, cfg.macro_h, cfg.chi_profile);
  art.u00 = sl.timed("limit", [&] { return solve_limit(*art.macro_ctx); });
  art.correction = sl.timed("correct", [&] {
    return solve_macro_correction(*art.macro_ctx, art.u00, art.cell.constants);
  });
  art.s_plus = sl.timed("singularity+", [&] {
    return solve_singularity(*art.macro_ctx, Corner::Plus);
  });
  art.s_minus = sl.timed("singularity-", [&] {
    return solve_singularity(*art.macro_ctx, Corner::Minus);
  });

  SectorSpec sp;
  sp.cell = cfg.cell;
  sp.r_max = cfg.sector_r_max;
  sp.h_near = cfg.sector_h_near;
  art.nf_plus = sl.timed("nearfield+", [&] {
    sp.corner = Corner::Plus;
    return solve_S1(sp, &art.cell.constants);
  });
  art.nf_minus = sl.timed("nearfield-", [&] {
    sp.corner = Corner::Minus;
    return solve_S1(sp, &art.cell.constants);
  });

  art.matched = match_low_order(
      art.correction.coeffs_plus.at(1), art.correction.coeffs_minus.at(1),
      art.nf_plus.l_minus1, art.nf_minus.l_minus1);
  art.u20 = build_u20(art.s_plus, art.s_minus, art.matched.lm1_u20_plus,
                      art.matched.lm1_u20_minus);
  art.u01_trace = build_u01_mean_trace(*art.macro_ctx, art.correction.u01,
                                       art.correction.traces);
  return owned;
}

// ---------------------------------------------------------------------------

struct ConvergenceRow {
  double delta = 0.0;
  double level = 0.0;  // N0
  double l2 = 0.0;
  double h1 = 0.0;
};

struct ConvergenceReport {
  std::vector<ConvergenceRow> rows;
  std::vector<double> levels;
  std::vector<EocFit> eoc;   // per level, same order as `levels`
  bool eoc_available = false;  // requires >= 3 delta values
  bool degenerate = false;     // empty-hole style report
  std::vector<std::pair<std::string, double>> metadata;  // constants etc.
  StageLog stages;

  std::string csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "delta,level,l2,h1\n";
    for (const auto& r : rows)
      os << r.delta << "," << r.level << "," << r.l2 << "," << r.h1 << "\n";
    return os.str();
  }

  std::string summary() const {
    std::ostringstream os;
    os.precision(6);
    os << "convergence study: " << rows.size() << " rows, levels =";
    for (double l : levels) os << " " << l;
    os << (degenerate ? " [degenerate]" : "") << "\n";
    if (eoc_available)
      for (size_t i = 0; i < levels.size(); ++i)
        os << "  level " << levels[i] << ": EOC = " << eoc[i].slope << " +- "
           << eoc[i].half_width << (eoc[i].degenerate ? " [flat]" : "") << "\n";
    else
      os << "  EOC: n/a (needs >= 3 delta values)\n";
    for (auto& [k, v] : metadata) os << "  " << k << " = " << v << "\n";
    return os.str();
  }
};

inline ConvergenceReport run_convergence(const StudyConfig& cfg,
                                         const PipelineArtifacts* prebuilt = nullptr) {
  cfg.validate();
  ConvergenceReport rep;
  rep.levels = cfg.levels;

  std::unique_ptr<PipelineArtifacts> own;
  const PipelineArtifacts* art = prebuilt;
  if (!art) {
    own = build_artifacts(cfg, &rep.stages);
    art = own.get();
  }

  const auto& tc = art->cell.constants;
  rep.metadata = {
      {"d_infinity", tc.d_infinity},
      {"n2t", tc.n_t[2]},
      {"n2n", tc.n_n[2]},
      {"d1n", tc.d_n[1]},
      {"l1_u00_plus", art->matched.l1_u00_plus},
      {"l1_u00_minus", art->matched.l1_u00_minus},
      {"Lm1_S1_plus", art->matched.Lm1_S1_plus},
      {"Lm1_S1_minus", art->matched.Lm1_S1_minus},
  };
  const double scale = std::max({std::abs(tc.d_infinity), std::abs(tc.n_t[2]),
                                 std::abs(tc.n_n[2])});
  rep.degenerate = scale < 1e-3;

  std::vector<CompositeApprox> composites;
  for (double level : cfg.levels) composites.push_back(art->composite(level));

  for (double delta : cfg.deltas) {
    const auto direct = solve_direct(cfg.domain, cfg.cell, delta, cfg.bulk_h);
    for (size_t li = 0; li < cfg.levels.size(); ++li) {
      const auto norms =
          approximation_error(direct, composites[li], delta, cfg.alpha);
      rep.rows.push_back({delta, cfg.levels[li], norms.l2, norms.h1});
    }
  }

  rep.eoc_available = cfg.deltas.size() >= 3;
  if (rep.eoc_available) {
    for (double level : cfg.levels) {
      std::vector<double> ds, errs;
      for (const auto& r : rep.rows)
        if (r.level == level) {
          ds.push_back(r.delta);
          errs.push_back(r.h1);
        }
      rep.eoc.push_back(fit_eoc(ds, errs));
      if (rep.degenerate) rep.eoc.back().degenerate = true;
    }
  }
  return rep;
}

}  // namespace perilayer
