// perilayer: effective transmission constants, matched corner expansions and
// convergence studies for the thin periodic Neumann layer meeting two
// re-entrant corners.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "perilayer/config.hpp"

namespace fs = std::filesystem;
using namespace perilayer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitAcceptance = 5;

struct Options {
  std::string config_path;
  std::string out_override;
  int threads = 1;
  bool seedless = false;  // reserved; no randomness exists anywhere
  bool fields = false;
  double delta = 0.0;  // 0 = first delta of the study list
};

fs::path out_dir(const RunConfig& cfg, const Options& opt) {
  return fs::path(opt.out_override.empty() ? cfg.out_dir : opt.out_override);
}

void write_manifest(const RunConfig& cfg, const Options& opt,
                    const std::string& command, const StageLog& stages) {
  write_text(out_dir(cfg, opt) / "manifest.txt",
             format_manifest(cfg, command, stages));
}

std::string read_file_if_exists(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Loads cached constants when the cell-relevant config hash matches;
// otherwise recomputes and writes the record.
TransmissionConstants obtain_constants(const RunConfig& cfg, const Options& opt,
                                       StageLog& log, CellSolution* full = nullptr) {
  const fs::path path = out_dir(cfg, opt) / "constants.txt";
  const std::string hash = cell_config_hash(cfg);
  if (!full) {
    TransmissionConstants cached;
    const std::string text = read_file_if_exists(path);
    if (!text.empty() && parse_constants(text, hash, cached)) {
      log.timings.emplace_back("cell(cached)", 0.0);
      return cached;
    }
  }
  CellSolution sol = log.timed("cell", [&] {
    return transmission_constants(cfg.study.cell, cfg.study.chi_profile,
                                  cfg.study.l_band, cfg.study.band_h,
                                  cfg.study.max_order);
  });
  const std::string text = format_constants(sol.constants, hash);
  if (read_file_if_exists(path) != text) write_text(path, text);
  TransmissionConstants tc = sol.constants;
  if (full) *full = std::move(sol);
  return tc;
}

std::string diagnostics_csv(const TransmissionConstants& tc) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,index,value\n";
  os << "offset_top,0," << tc.diagnostics.offset_top << "\n";
  os << "offset_bottom,0," << tc.diagnostics.offset_bottom << "\n";
  for (size_t i = 0; i < tc.diagnostics.compatibility.size(); ++i)
    os << "compatibility," << i << "," << tc.diagnostics.compatibility[i] << "\n";
  for (size_t i = 0; i < tc.diagnostics.decay.size(); ++i)
    os << "decay," << i << "," << tc.diagnostics.decay[i] << "\n";
  return os.str();
}

std::string coeffs_csv(const CornerCoeffs& plus, const CornerCoeffs& minus) {
  std::ostringstream os;
  os.precision(17);
  os << "corner,q,value\n";
  for (auto& [q, v] : plus.coeffs) os << "plus," << q << "," << v << "\n";
  for (auto& [q, v] : minus.coeffs) os << "minus," << q << "," << v << "\n";
  os << "plus,residual," << plus.fit_residual << "\n";
  os << "minus,residual," << minus.fit_residual << "\n";
  return os.str();
}

int run_cell(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  CellSolution sol;
  obtain_constants(cfg, opt, log, &sol);
  write_text(out_dir(cfg, opt) / "cell_diagnostics.csv",
             diagnostics_csv(sol.constants));
  if (opt.fields) {
    std::vector<std::pair<std::string, std::vector<double>>> fields;
    fields.emplace_back("D", sol.band.profile_d.values);
    fields.emplace_back("D_tilde", sol.band.profile_dtilde.values);
    for (size_t p = 0; p < sol.profiles_t.size(); ++p)
      fields.emplace_back("W" + std::to_string(p) + "t",
                          sol.profiles_t[p].field.values);
    for (size_t p = 1; p < sol.profiles_n.size(); ++p)
      fields.emplace_back("W" + std::to_string(p) + "n",
                          sol.profiles_n[p].field.values);
    write_vtk(sol.band.mesh, (out_dir(cfg, opt) / "band.vtk").string(), fields);
  }
  write_manifest(cfg, opt, "cell", log);
  std::cout << "cell: D_infinity = " << sol.constants.d_infinity
            << ", N2t = " << sol.constants.n_t[2]
            << ", N2n = " << sol.constants.n_n[2] << "\n";
  return kExitOk;
}

int run_limit(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  MacroContext ctx(cfg.study.domain, cfg.study.macro_h, cfg.study.chi_profile);
  const auto u00 = log.timed("limit", [&] { return solve_limit(ctx); });
  const double L = cfg.study.domain.half_length;
  const auto radii = default_extraction_radii(L);
  const auto cp = extract_corner_coeffs(ctx, u00, CornerFrame::plus(L), {1, 2}, radii);
  const auto cm = extract_corner_coeffs(ctx, u00, CornerFrame::minus(L), {1, 2}, radii);
  write_text(out_dir(cfg, opt) / "u00_coeffs.csv", coeffs_csv(cp, cm));
  write_vtk(ctx.mesh, (out_dir(cfg, opt) / "u00.vtk").string(),
            {{"u00", u00.field.values}});
  write_manifest(cfg, opt, "limit", log);
  std::cout << "limit: l1+ = " << cp.at(1) << ", l1- = " << cm.at(1) << "\n";
  return kExitOk;
}

int run_singularity(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  MacroContext ctx(cfg.study.domain, cfg.study.macro_h, cfg.study.chi_profile);
  const auto sp =
      log.timed("singularity+", [&] { return solve_singularity(ctx, Corner::Plus); });
  const auto sm =
      log.timed("singularity-", [&] { return solve_singularity(ctx, Corner::Minus); });
  const double L = cfg.study.domain.half_length;
  const auto radii = default_extraction_radii(L);
  const auto cp =
      extract_corner_coeffs(ctx, sp, CornerFrame::plus(L), {-1, 1, 2}, radii);
  const auto cm =
      extract_corner_coeffs(ctx, sm, CornerFrame::minus(L), {-1, 1, 2}, radii);
  write_text(out_dir(cfg, opt) / "singularity_coeffs.csv", coeffs_csv(cp, cm));
  write_vtk(ctx.mesh, (out_dir(cfg, opt) / "singularities.vtk").string(),
            {{"s_minus1_plus", sp.field.values},
             {"s_minus1_minus", sm.field.values}});
  write_manifest(cfg, opt, "singularity", log);
  std::cout << "singularity: l-1(s+) = " << cp.at(-1) << ", l-1(s-) = " << cm.at(-1)
            << "\n";
  return kExitOk;
}

int run_correct(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  const auto tc = obtain_constants(cfg, opt, log);
  MacroContext ctx(cfg.study.domain, cfg.study.macro_h, cfg.study.chi_profile);
  const auto u00 = log.timed("limit", [&] { return solve_limit(ctx); });
  const auto corr =
      log.timed("correct", [&] { return solve_macro_correction(ctx, u00, tc); });
  write_text(out_dir(cfg, opt) / "u00_coeffs.csv",
             coeffs_csv(corr.coeffs_plus, corr.coeffs_minus));
  write_vtk(ctx.mesh, (out_dir(cfg, opt) / "u01.vtk").string(),
            {{"u00", u00.field.values}, {"u01_regular", corr.u01.field.values}});
  write_manifest(cfg, opt, "correct", log);
  std::cout << "correct: wrote u01 (regular part) and corner coefficients\n";
  return kExitOk;
}

int run_nearfield(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  const auto tc = obtain_constants(cfg, opt, log);
  SectorSpec spec;
  spec.cell = cfg.study.cell;
  spec.r_max = cfg.study.sector_r_max;
  spec.h_near = cfg.study.sector_h_near;
  spec.corner = Corner::Plus;
  const auto rp = log.timed(
      "nearfield+", [&] { return solve_S1(spec, &tc, 1.0, cfg.nearfield_window); });
  spec.corner = Corner::Minus;
  const auto rm = log.timed(
      "nearfield-", [&] { return solve_S1(spec, &tc, 1.0, cfg.nearfield_window); });
  std::ostringstream os;
  os.precision(17);
  os << "corner,metric,value\n";
  os << "plus,L_minus1," << rp.l_minus1 << "\n";
  os << "plus,value_r," << rp.diagnostics.value_r << "\n";
  os << "plus,value_2r," << rp.diagnostics.value_2r << "\n";
  os << "plus,fit_residual," << rp.diagnostics.fit_residual << "\n";
  os << "minus,L_minus1," << rm.l_minus1 << "\n";
  os << "minus,value_r," << rm.diagnostics.value_r << "\n";
  os << "minus,value_2r," << rm.diagnostics.value_2r << "\n";
  os << "minus,fit_residual," << rm.diagnostics.fit_residual << "\n";
  write_text(out_dir(cfg, opt) / "nearfield.csv", os.str());
  write_manifest(cfg, opt, "nearfield", log);
  std::cout << "nearfield: L-1(S1+) = " << rp.l_minus1
            << ", L-1(S1-) = " << rm.l_minus1 << "\n";
  return kExitOk;
}

int run_direct(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  const double delta = opt.delta > 0.0 ? opt.delta : cfg.study.deltas.front();
  const auto sol = log.timed("direct", [&] {
    return solve_direct(cfg.study.domain, cfg.study.cell, delta, cfg.study.bulk_h);
  });
  std::ostringstream name;
  name << "direct_delta_" << delta << ".vtk";
  write_vtk(*sol.mesh, (out_dir(cfg, opt) / name.str()).string(),
            {{"u_delta", sol.field.values}});
  write_manifest(cfg, opt, "direct", log);
  std::cout << "direct: delta = " << delta << ", dofs = " << sol.report.reduced_dofs
            << "\n";
  return kExitOk;
}

int run_expand(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  const auto art_ptr = build_artifacts(cfg.study, &log);
  const auto& art = *art_ptr;
  std::ostringstream os;
  os.precision(17);
  os << "delta,level,l2,h1\n";
  for (double delta : cfg.study.deltas) {
    const auto direct = log.timed("direct", [&] {
      return solve_direct(cfg.study.domain, cfg.study.cell, delta,
                          cfg.study.bulk_h);
    });
    std::vector<std::pair<std::string, std::vector<double>>> fields;
    fields.emplace_back("u_delta", direct.field.values);
    for (double level : cfg.study.levels) {
      const auto comp = art.composite(level);
      std::vector<double> sampled(direct.mesh->vertex_count());
      for (int v = 0; v < direct.mesh->vertex_count(); ++v)
        sampled[v] = evaluate_composite(comp, delta, direct.mesh->vertices[v]);
      std::ostringstream fname;
      fname << "composite_N" << level;
      fields.emplace_back(fname.str(), sampled);
      const auto err = approximation_error(direct, comp, delta, cfg.study.alpha);
      os << delta << "," << level << "," << err.l2 << "," << err.h1 << "\n";
    }
    std::ostringstream vname;
    vname << "composite_delta_" << delta << ".vtk";
    write_vtk(*direct.mesh, (out_dir(cfg, opt) / vname.str()).string(), fields);
  }
  write_text(out_dir(cfg, opt) / "expand_errors.csv", os.str());
  write_manifest(cfg, opt, "expand", log);
  std::cout << "expand: wrote composite fields and error CSV\n";
  return kExitOk;
}

int run_study(const RunConfig& cfg, const Options& opt,
              const StudyThresholds& thresholds) {
  StageLog log;
  CellSolution cell;
  obtain_constants(cfg, opt, log, &cell);  // writes/refreshes constants.txt
  const auto rep = run_convergence(cfg.study);
  write_text(out_dir(cfg, opt) / "report.csv", rep.csv());
  write_text(out_dir(cfg, opt) / "summary.txt", rep.summary());
  write_manifest(cfg, opt, "study", rep.stages);
  std::cout << rep.summary();

  bool violated = false;
  auto level_index = [&](double level) -> int {
    if (!rep.eoc_available) return -1;
    for (size_t i = 0; i < rep.levels.size(); ++i)
      if (std::abs(rep.levels[i] - level) < 1e-9) return static_cast<int>(i);
    return -1;
  };
  if (thresholds.eoc_level0_min) {
    const int i = level_index(2.0 / 3.0);
    if (i < 0 || rep.eoc[i].slope < *thresholds.eoc_level0_min) violated = true;
  }
  if (thresholds.eoc_gap01_min) {
    const int i0 = level_index(2.0 / 3.0), i1 = level_index(1.0);
    if (i0 < 0 || i1 < 0 ||
        rep.eoc[i1].slope - rep.eoc[i0].slope < *thresholds.eoc_gap01_min)
      violated = true;
  }
  if (thresholds.u20_worsening_max) {
    for (const auto& r1 : rep.rows) {
      if (std::abs(r1.level - 1.0) > 1e-9) continue;
      for (const auto& r2 : rep.rows)
        if (r2.delta == r1.delta && std::abs(r2.level - 4.0 / 3.0) < 1e-9 &&
            r2.h1 > (1.0 + *thresholds.u20_worsening_max) * r1.h1)
          violated = true;
    }
  }
  if (violated) {
    std::cerr << "study: acceptance thresholds violated\n";
    return kExitAcceptance;
  }
  return kExitOk;
}

int run_export(const RunConfig& cfg, const Options& opt) {
  StageLog log;
  BandSpec band;
  band.cell = cfg.study.cell;
  band.l_band = cfg.study.l_band;
  band.h = cfg.study.band_h;
  write_vtk(mesh_band(band), (out_dir(cfg, opt) / "mesh_band.vtk").string());
  write_vtk(mesh_limit_split(cfg.study.domain, cfg.study.macro_h),
            (out_dir(cfg, opt) / "mesh_limit.vtk").string());
  SectorSpec sector;
  sector.cell = cfg.study.cell;
  sector.r_max = cfg.study.sector_r_max;
  sector.h_near = cfg.study.sector_h_near;
  sector.corner = Corner::Plus;
  write_vtk(mesh_sector(sector),
            (out_dir(cfg, opt) / "mesh_sector_plus.vtk").string());
  sector.corner = Corner::Minus;
  write_vtk(mesh_sector(sector),
            (out_dir(cfg, opt) / "mesh_sector_minus.vtk").string());
  write_vtk(mesh_perforated(cfg.study.domain, cfg.study.cell,
                            cfg.study.deltas.front(), cfg.study.bulk_h),
            (out_dir(cfg, opt) / "mesh_perforated.vtk").string());
  write_manifest(cfg, opt, "export", log);
  std::cout << "export: wrote mesh files to " << out_dir(cfg, opt).string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perilayer: thin periodic layers meeting re-entrant corners"};
  app.require_subcommand(1);

  Options opt;
  const std::vector<std::string> names{"cell",      "limit",     "singularity",
                                       "correct",   "nearfield", "direct",
                                       "expand",    "study",     "export"};
  std::map<std::string, CLI::App*> subs;
  for (const auto& n : names) {
    auto* sub = app.add_subcommand(n);
    sub->add_option("--config", opt.config_path, "configuration file")->required();
    sub->add_option("--out", opt.out_override, "output directory override");
    sub->add_option("--threads", opt.threads, "worker threads (default 1)");
    sub->add_flag("--seedless", opt.seedless, "reserved; runs carry no randomness");
    if (n == "cell") sub->add_flag("--fields", opt.fields, "export profile fields");
    if (n == "direct")
      sub->add_option("--delta", opt.delta, "layer width (default: first of study)");
    subs[n] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    StudyThresholds thresholds;
    const RunConfig cfg = load_config(opt.config_path, &thresholds);
    if (opt.threads > 1) Eigen::setNbThreads(opt.threads);

    if (subs["cell"]->parsed()) return run_cell(cfg, opt);
    if (subs["limit"]->parsed()) return run_limit(cfg, opt);
    if (subs["singularity"]->parsed()) return run_singularity(cfg, opt);
    if (subs["correct"]->parsed()) return run_correct(cfg, opt);
    if (subs["nearfield"]->parsed()) return run_nearfield(cfg, opt);
    if (subs["direct"]->parsed()) return run_direct(cfg, opt);
    if (subs["expand"]->parsed()) return run_expand(cfg, opt);
    if (subs["study"]->parsed()) return run_study(cfg, opt, thresholds);
    if (subs["export"]->parsed()) return run_export(cfg, opt);
    return kExitUsage;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const resonance_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const geometry_error& e) {
    std::cerr << "geometry error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const solver_error& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
