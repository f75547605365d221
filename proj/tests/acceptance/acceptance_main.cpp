// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit status is nonzero if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "oracles/fd_band.hpp"
#include "perilayer/config.hpp"

using namespace perilayer;

namespace {

constexpr double kFrozenDInfinityDisk = 0.2472346216;  // FD, L=12, h=1/256

int g_failures = 0;

void report(int index, const std::string& name, bool pass,
            const std::string& detail, double seconds) {
  std::printf("[%s] criterion %d: %s (%s; %.1f s)\n", pass ? "PASS" : "FAIL",
              index, name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

template <typename F>
void criterion(int index, const std::string& name, F&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  bool pass = false;
  std::string detail;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    pass = false;
    detail = std::string("exception: ") + e.what();
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(index, name, pass, detail, secs);
}

DomainSpec bench_domain() {
  DomainSpec d;
  d.half_length = 1.0;
  d.half_length_top = 1.5;
  d.height_bottom = 0.75;
  d.height_top = 0.75;
  d.source.center = {0.0, 0.4};
  d.source.radius = 0.2;
  d.source.amplitude = 1.0;
  return d;
}

PeriodicityCell disk_cell() {
  PeriodicityCell cell;
  cell.hole = DiskHole{{0.5, 0.0}, 0.25};
  return cell;
}

StudyConfig bench_config() {
  StudyConfig cfg;
  cfg.domain = bench_domain();
  cfg.cell = disk_cell();
  cfg.deltas = {0.25, 0.125, 0.0625};
  cfg.bulk_h = 1.0 / 96;
  cfg.macro_h = 1.0 / 96;
  cfg.band_h = 1.0 / 64;
  cfg.l_band = 8.0;
  cfg.alpha = 0.15;
  cfg.sector_r_max = 16.0;
  cfg.sector_h_near = 1.0 / 16;
  cfg.levels = {2.0 / 3.0, 1.0, 4.0 / 3.0};
  return cfg;
}

// Shared expensive artifacts (computed once, reused across criteria).
const CellSolution& disk_cell_solution() {  // default resolution, quintic
  static const CellSolution sol =
      transmission_constants(disk_cell(), CutoffProfile{}, 8.0, 1.0 / 64, 2);
  return sol;
}

const PipelineArtifacts& bench_artifacts() {
  static const auto art = build_artifacts(bench_config());
  return *art;
}

struct ConstTriple {
  double d_inf, n2t, n2n;
};

ConstTriple triple(const TransmissionConstants& tc) {
  return {tc.d_infinity, tc.n_t[2], tc.n_n[2]};
}

double triple_gap(ConstTriple a, ConstTriple b) {
  return std::max({std::abs(a.d_inf - b.d_inf), std::abs(a.n2t - b.n2t),
                   std::abs(a.n2n - b.n2n)});
}

}  // namespace

int main() {
  std::printf("perilayer acceptance suite\n");

  criterion(1, "cell compatibility integrals", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& sol = disk_cell_solution();
    const Mesh& mesh = sol.band.mesh;
    const auto& D = sol.band.profile_d.values;
    const std::vector<double> ones(mesh.vertex_count(), 1.0);
    const CutoffProfile chi_profile;
    auto ip = [&](int p, bool jump, const std::vector<double>& v) {
      return ip_function_p1(
          mesh,
          [&, p, jump](Vec2 pt) {
            return jump ? celldetail::jump_g(chi_profile, p, pt.y)
                        : celldetail::mean_g(chi_profile, p, pt.y);
          },
          v);
    };
    const double dinf = sol.constants.d_infinity;
    const double tol = 1e-3 * std::max(1.0, std::abs(dinf));
    const double vals[8] = {ip(0, false, D),    ip(0, true, D),
                            ip(0, false, ones), ip(0, true, ones),
                            ip(1, false, D),    ip(1, true, D),
                            ip(1, false, ones), ip(1, true, ones)};
    const double expected[8] = {0.0, -2.0, 0.0, 0.0, dinf, 0.0, 0.0, 2.0};
    double worst = 0.0;
    for (int i = 0; i < 8; ++i)
      worst = std::max(worst, std::abs(vals[i] - expected[i]));
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::ostringstream os;
    os.precision(3);
    os << "max deviation " << worst << " vs tol " << tol << ", " << secs
       << " s (< 30 s)";
    detail = os.str();
    return worst <= tol && secs < 30.0;
  });

  criterion(2, "base-case profile identities", [&](std::string& detail) {
    const auto& sol = disk_cell_solution();
    const auto& ctx = sol.band;
    const Mesh& mesh = ctx.mesh;
    double w0_err = 0.0;
    for (int v = 0; v < mesh.vertex_count(); ++v)
      w0_err = std::max(w0_err,
                        std::abs(sol.profiles_t[0].field[v] -
                                 (1.0 - chi(ctx.chi_profile, mesh.vertices[v].y))));
    const double w1t = std::sqrt(ip_mass(mesh, sol.profiles_t[1].field.values,
                                         sol.profiles_t[1].field.values));
    std::vector<double> diff(mesh.vertex_count());
    for (int v = 0; v < mesh.vertex_count(); ++v)
      diff[v] = sol.profiles_n[1].field[v] - ctx.profile_dtilde[v];
    const double w1n_err = std::sqrt(ip_mass(mesh, diff, diff));
    const double dtil = std::sqrt(
        ip_mass(mesh, ctx.profile_dtilde.values, ctx.profile_dtilde.values));
    const double d1n_rel =
        std::abs(sol.constants.d_n[1] - 2.0 * sol.constants.d_infinity) /
        std::abs(2.0 * sol.constants.d_infinity);
    std::ostringstream os;
    os.precision(3);
    os << "|W0t-(1-chi)|_inf=" << w0_err << ", |W1t|=" << w1t
       << ", |W1n-Dt|/|Dt|=" << w1n_err / dtil << ", |D1n-2Dinf|rel=" << d1n_rel;
    detail = os.str();
    return w0_err < 1e-8 && w1t <= 1e-8 && w1n_err <= 1e-3 * dtil &&
           d1n_rel < 1e-6;
  });

  criterion(3, "empty-hole degeneracy", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sol =
        transmission_constants(PeriodicityCell{}, CutoffProfile{}, 8.0, 1.0 / 64, 2);
    const auto t = triple(sol.constants);
    StudyConfig cfg = bench_config();
    cfg.cell = PeriodicityCell{};
    cfg.deltas = {0.125};
    cfg.levels = {2.0 / 3.0};
    MacroContext ctx(cfg.domain, cfg.macro_h);
    const auto u00 = solve_limit(ctx);
    const auto direct = solve_direct(cfg.domain, cfg.cell, 0.125, cfg.bulk_h);
    Field difff(*direct.mesh);
    for (int v = 0; v < direct.mesh->vertex_count(); ++v)
      difff[v] = direct.field[v] -
                 evaluate_macro(ctx, u00, direct.mesh->vertices[v]);
    const double gap = subdomain_norms(difff, [](Vec2) { return true; }).h1;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::ostringstream os;
    os.precision(3);
    os << "|Dinf|=" << std::abs(t.d_inf) << ", |N2t|=" << std::abs(t.n2t)
       << ", |N2n|=" << std::abs(t.n2n) << ", |direct-u00|_H1=" << gap << " vs "
       << 5.0 * cfg.bulk_h << ", " << secs << " s (< 120 s)";
    detail = os.str();
    return std::abs(t.d_inf) <= 1e-3 && std::abs(t.n2t) <= 1e-3 &&
           std::abs(t.n2n) <= 1e-3 && gap <= 5.0 * cfg.bulk_h && secs < 120.0;
  });

  criterion(4, "chi-independence of the constants", [&](std::string& detail) {
    const auto q64 = triple(disk_cell_solution().constants);
    const auto c64 = triple(
        transmission_constants(disk_cell(), CutoffProfile{CutoffKind::Cosine},
                               8.0, 1.0 / 64, 2)
            .constants);
    const auto q32 = triple(
        transmission_constants(disk_cell(), CutoffProfile{}, 8.0, 1.0 / 32, 2)
            .constants);
    const auto c32 = triple(
        transmission_constants(disk_cell(), CutoffProfile{CutoffKind::Cosine},
                               8.0, 1.0 / 32, 2)
            .constants);
    const double scale =
        std::max({std::abs(q64.d_inf), std::abs(q64.n2t), std::abs(q64.n2n)});
    const double gap64 = triple_gap(q64, c64);
    const double gap32 = triple_gap(q32, c32);
    // Halving h at least halves the profile gap (30% slack, small absolute
    // floor for rounding noise); super-second-order shrink also passes.
    const bool halves = gap64 <= 0.65 * gap32 + 1e-12;
    std::ostringstream os;
    os.precision(3);
    os << "gap(1/64)=" << gap64 << " vs tol " << 1e-3 * scale
       << ", gap(1/32)=" << gap32 << ", ratio=" << gap64 / std::max(gap32, 1e-300);
    detail = os.str();
    return gap64 <= 1e-3 * scale && halves;
  });

  criterion(5, "independent FD oracle agreement for D_infinity",
            [&](std::string& detail) {
              BandSpec spec;
              spec.cell = disk_cell();
              spec.l_band = 8.0;
              spec.h = 1.0 / 128;
              const double fem = solve_profile_D(spec).d_infinity;
              const auto fd = oracle::fd_band_oracle(0.5, 0.0, 0.25, 8.0, 1.0 / 64);
              const double rel_fem =
                  std::abs(fem - kFrozenDInfinityDisk) / kFrozenDInfinityDisk;
              const double rel_fd =
                  std::abs(fd.d_infinity - kFrozenDInfinityDisk) /
                  kFrozenDInfinityDisk;
              std::ostringstream os;
              os.precision(4);
              os << "FEM " << fem << " vs frozen " << kFrozenDInfinityDisk
                 << " (rel " << rel_fem << "), oracle self-check rel " << rel_fd;
              detail = os.str();
              return rel_fem < 1e-3 && rel_fd < 1e-3;
            });

  criterion(6, "corner extraction and cone lifts", [&](std::string& detail) {
    const auto frame = CornerFrame::plus(1.0);
    const auto radii = default_extraction_radii(1.0);
    auto pos = [&](Vec2 p) {
      const auto [r, t] = frame.to_polar(p);
      return std::pow(r, 2.0 / 3.0) * std::sin(2.0 * t / 3.0);
    };
    auto neg = [&](Vec2 p) {
      const auto [r, t] = frame.to_polar(p);
      return std::pow(r, -2.0 / 3.0) * (-std::sin(2.0 * t / 3.0));
    };
    const auto cp = extract_corner_coeffs(pos, frame, {-2, -1, 1, 2, 3}, radii);
    const auto cn = extract_corner_coeffs(neg, frame, {-2, -1, 1, 2}, radii);
    double leak = std::max({std::abs(cp.at(2)), std::abs(cp.at(3)),
                            std::abs(cp.at(-1)), std::abs(cp.at(-2)),
                            std::abs(cn.at(1)), std::abs(cn.at(2)),
                            std::abs(cn.at(-2))});
    const double e1 = std::abs(cp.at(1) - 1.0), em1 = std::abs(cn.at(-1) - 1.0);

    // Cone-lift residuals of the 4x4 solve, all corners and both exponents.
    double lift_res = 0.0;
    for (Corner corner : {Corner::Plus, Corner::Minus}) {
      const CornerFrame f = corner == Corner::Plus ? CornerFrame::plus(1.0)
                                                   : CornerFrame::minus(1.0);
      for (double lambda : {-1.0 / 3.0, 1.0 / 3.0}) {
        const auto lift = cone_lift(f, lambda, 0.83, -0.41);
        const double ti = lift.interface_angle();
        const int up = corner == Corner::Plus ? 0 : 1;
        auto gv = [&](int reg) {
          return lift.coef[reg][0] * std::sin(lambda * ti) +
                 lift.coef[reg][1] * std::cos(lambda * ti);
        };
        auto gd = [&](int reg) {
          return lambda * (lift.coef[reg][0] * std::cos(lambda * ti) -
                           lift.coef[reg][1] * std::sin(lambda * ti));
        };
        lift_res = std::max(
            {lift_res, std::abs(lift.angular_value(f.theta_min())),
             std::abs(lift.angular_value(f.theta_max())),
             std::abs(gv(up) - gv(1 - up) - 0.83),
             std::abs(gd(up) - gd(1 - up) - (-0.41))});
      }
    }
    std::ostringstream os;
    os.precision(3);
    os << "coef errors " << std::max(e1, em1) << ", leakage " << leak
       << ", lift residual " << lift_res;
    detail = os.str();
    return e1 <= 1e-6 && em1 <= 1e-6 && leak <= 1e-6 && lift_res <= 1e-12;
  });

  criterion(7, "near-field sanity", [&](std::string& detail) {
    SectorSpec plain;
    plain.corner = Corner::Plus;
    plain.r_max = 8.0;
    plain.h_near = 1.0 / 8;
    const auto empty = solve_S1(plain);

    const auto& art = bench_artifacts();
    const double lp = art.nf_plus.l_minus1;
    const double lm = art.nf_minus.l_minus1;
    const double mirror_gap = std::abs(lp - lm) / std::max(std::abs(lp), 1e-12);
    std::ostringstream os;
    os.precision(3);
    os << "no-hole |L-1|=" << std::abs(empty.l_minus1) << ", L-1(S1+)=" << lp
       << ", L-1(S1-)=" << lm << ", mirror gap " << 100.0 * mirror_gap << "%";
    detail = os.str();
    return std::abs(empty.l_minus1) <= 1e-2 && mirror_gap <= 0.02;
  });

  ConvergenceReport bench_report;
  criterion(8, "convergence rates of the benchmark", [&](std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = bench_config();
    bench_report = run_convergence(cfg, &bench_artifacts());
    const auto& rep = bench_report;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    auto level_err = [&](double level, double delta, bool l2 = false) {
      for (const auto& r : rep.rows)
        if (std::abs(r.level - level) < 1e-9 && r.delta == delta)
          return l2 ? r.l2 : r.h1;
      return -1.0;
    };
    const double eoc0 = rep.eoc[0].slope, eoc1 = rep.eoc[1].slope;
    // The same fit in the L2 norm, for the detail line: in H1 the gap clause
    // is unattainable at these (alpha, delta) because Omega_alpha intersects
    // the corrector support for delta in {1/4, 1/8} (see the ledger).
    auto eoc_l2 = [&](double level) {
      std::vector<double> ds, es;
      for (double d : cfg.deltas) {
        ds.push_back(d);
        es.push_back(level_err(level, d, true));
      }
      return fit_eoc(ds, es).slope;
    };
    const double gap_h1 = eoc1 - eoc0;
    const double gap_l2 = eoc_l2(1.0) - eoc_l2(2.0 / 3.0);
    bool strictly_smaller = true, not_worse = true;
    for (double d : cfg.deltas) {
      if (!(level_err(1.0, d) < level_err(2.0 / 3.0, d))) strictly_smaller = false;
      if (level_err(4.0 / 3.0, d) > 1.05 * level_err(1.0, d)) not_worse = false;
    }
    const bool improves_finest =
        level_err(4.0 / 3.0, cfg.deltas.back()) < level_err(1.0, cfg.deltas.back());

    std::ostringstream os;
    os.precision(4);
    os << "EOC(u00)=" << eoc0 << " (>= 0.8), EOC(+delta(u01+Pi))=" << eoc1
       << ", H1 gap=" << gap_h1 << " (>= 0.3; L2 gap=" << gap_l2
       << "), strictly smaller: " << (strictly_smaller ? "yes" : "NO")
       << ", u20 non-worsening: " << (not_worse ? "yes" : "NO")
       << ", u20 improves at delta=1/16: " << (improves_finest ? "yes" : "NO")
       << ", " << secs << " s";
    detail = os.str();
    return eoc0 >= 0.8 && gap_h1 >= 0.3 && strictly_smaller && not_worse &&
           improves_finest && secs < 1800.0;
  });

  criterion(9, "determinism of the benchmark report", [&](std::string& detail) {
    const auto cfg = bench_config();
    const auto again = run_convergence(cfg);  // cold: rebuilds everything
    const bool same = again.csv() == bench_report.csv();
    detail = same ? "two cold runs byte-identical" : "reports differ";
    return same && !bench_report.rows.empty();
  });

  std::printf("%d/9 criteria passed\n", 9 - g_failures);
  return g_failures == 0 ? 0 : 1;
}
