#pragma once

#include "perilayer/macro.hpp"

namespace perilayer {

// ---------------------------------------------------------------------------
// Near-field singularity S_1^{+-} on the truncated holed sector and the
// direct reference solver for u^delta.

struct NearFieldResult {
  Field field;             // run at r_max (the Richardson pair partner is
                           // discarded, only its fit enters the diagnostics)
  double l_minus1 = 0.0;   // Richardson-refined L_{-1}(S_1)
  struct Diagnostics {
    double value_r = 0.0;      // fit at r_max
    double value_2r = 0.0;     // fit at 2 r_max
    double leading_r = 0.0;    // fitted leading-mode amplitude at r_max
    double fit_residual = 0.0; // weighted rms residual of the arc fit
    std::vector<double> radii;
  } diagnostics;
};

namespace nearfielddetail {

struct ArcFit {
  double leading = 1.0;   // coefficient of r^{2/3} w_{1,0}
  double l_minus1 = 0.0;  // coefficient of r^{-2/3} w_{-1,0}
  double residual = 0.0;
};

// Weighted least squares of the sampled field against the modal basis
// {r^{2/3} w_{1,0}, r^{-1/3} w_{1,1}, r^{-2/3} w_{-1,0}, r^{-4/3} w_{-2,0}}
// on arcs r in {R/4, R/3, R/2}, excluding the angular window around the hole
// layer where the periodic correctors pollute the modal structure.
inline ArcFit fit_arcs(const Mesh& mesh, const Field& s, const CornerFrame& frame,
                       double r_max, const ConeLift* w11, double window_factor) {
  const PointLocator locator(mesh);
  const double theta_layer = frame.corner == Corner::Plus ? pi : 0.0;
  const std::vector<double> radii{r_max / 4.0, r_max / 3.0, r_max / 2.0};

  std::vector<std::function<double(double, double)>> basis;
  basis.emplace_back([&frame](double r, double t) {
    return std::pow(r, 2.0 / 3.0) * angular_mode(frame, 1, t);
  });
  if (w11)
    basis.emplace_back([w11](double r, double t) {
      return std::pow(r, -1.0 / 3.0) * w11->angular_value(t);
    });
  basis.emplace_back([&frame](double r, double t) {
    return std::pow(r, -2.0 / 3.0) * angular_mode(frame, -1, t);
  });
  basis.emplace_back([&frame](double r, double t) {
    return std::pow(r, -4.0 / 3.0) * angular_mode(frame, -2, t);
  });
  const int nb = static_cast<int>(basis.size());

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
  double wsum = 0.0, ysq = 0.0;
  const int nq = 600;
  for (double r : radii) {
    const double t0 = frame.theta_min(), t1 = frame.theta_max();
    for (int i = 0; i <= nq; ++i) {
      const double t = t0 + (t1 - t0) * i / nq;
      if (std::abs(t - theta_layer) < window_factor / r) continue;
      const double w = (t1 - t0) / nq;
      std::array<double, 3> bary;
      const Vec2 p = frame.origin + Vec2{r * std::cos(t), r * std::sin(t)};
      const int tri = locator.locate(p, &bary, 1e-7);
      if (tri < 0) throw config_error("fit_arcs: sample arc leaves the mesh");
      double fv = 0.0;
      for (int k = 0; k < 3; ++k) fv += bary[k] * s[mesh.triangles[tri][k]];
      Eigen::VectorXd row(nb);
      for (int k = 0; k < nb; ++k) row[k] = basis[k](r, t);
      M += w * row * row.transpose();
      rhs += w * fv * row;
      wsum += w;
      ysq += w * fv * fv;
    }
  }
  const Eigen::VectorXd c = M.ldlt().solve(rhs);

  ArcFit out;
  out.leading = c[0];
  out.l_minus1 = c[w11 ? 2 : 1];
  const double fit_sq = c.dot(M * c) - 2.0 * c.dot(rhs) + ysq;
  out.residual = std::sqrt(std::max(0.0, fit_sq) / wsum);
  const double leading_scale =
      std::abs(out.leading) * std::pow(r_max / 3.0, 2.0 / 3.0);
  if (out.residual > 0.1 * std::max(leading_scale, 1e-12))
    throw solver_error("fit_arcs: arc-fit residual exceeds 10% of the leading term");
  return out;
}

inline std::pair<Field, ArcFit> solve_one_radius(const SectorSpec& spec,
                                                 const TransmissionConstants* tc,
                                                 double arc_amplitude,
                                                 double window_factor) {
  const Mesh mesh = mesh_sector(spec);
  const CornerFrame frame{spec.corner, {0.0, 0.0}};

  auto sys = assemble(mesh);
  apply_dirichlet_zero(sys, EdgeTag::Dirichlet);
  apply_dirichlet(sys, EdgeTag::OuterArc, [&](Vec2 p) {
    const auto [r, t] = frame.to_polar(p);
    (void)r;
    return arc_amplitude * std::pow(spec.r_max, 2.0 / 3.0) *
           angular_mode(frame, 1, std::clamp(t, frame.theta_min(), frame.theta_max()));
  });
  Field s = solve(sys);

  std::optional<ConeLift> w11;
  if (tc) {
    const auto [a, b] = order1_jump_amplitudes(*tc, spec.corner, 1);
    if (std::abs(a) > 1e-14 || std::abs(b) > 1e-14)
      w11 = cone_lift(frame, singular_exponent(1) - 1.0, a, b);
  }
  const ArcFit fit = fit_arcs(mesh, s, frame, spec.r_max,
                              w11 ? &*w11 : nullptr, window_factor);
  return {std::move(s), fit};
}

}  // namespace nearfielddetail

/// Solves the S_1 problem on the truncated sector at r_max and 2 r_max with
/// the leading-growth Dirichlet data on the arc, fits the decaying modal
/// coefficient on interior arcs, and Richardson-extrapolates the O(R^{-4/3})
/// truncation bias of the arc condition.
inline NearFieldResult solve_S1(const SectorSpec& spec,
                                const TransmissionConstants* tc = nullptr,
                                double arc_amplitude = 1.0,
                                double window_factor = 3.0) {
  spec.validate();
  auto [field_r, fit_r] =
      nearfielddetail::solve_one_radius(spec, tc, arc_amplitude, window_factor);

  SectorSpec big = spec;
  big.r_max = 2.0 * spec.r_max;
  auto [field_2r, fit_2r] =
      nearfielddetail::solve_one_radius(big, tc, arc_amplitude, window_factor);

  NearFieldResult out;
  out.field = std::move(field_r);
  const double w = std::pow(2.0, 4.0 / 3.0);
  out.l_minus1 = (w * fit_2r.l_minus1 - fit_r.l_minus1) / (w - 1.0);
  out.diagnostics.value_r = fit_r.l_minus1;
  out.diagnostics.value_2r = fit_2r.l_minus1;
  out.diagnostics.leading_r = fit_r.leading;
  out.diagnostics.fit_residual = std::max(fit_r.residual, fit_2r.residual);
  out.diagnostics.radii = {spec.r_max / 4.0, spec.r_max / 3.0, spec.r_max / 2.0,
                           big.r_max / 4.0, big.r_max / 3.0, big.r_max / 2.0};
  return out;
}

/// Direct reference solution u^delta on the perforated domain. The solution
/// owns its mesh (shared pointer keeps Field::mesh stable across moves).
struct DirectSolution {
  std::shared_ptr<const Mesh> mesh;
  Field field;
  SolveReport report;
};

inline DirectSolution solve_direct(const DomainSpec& dom, const PeriodicityCell& cell,
                                   double delta, double h) {
  DirectSolution out;
  out.mesh = std::make_shared<const Mesh>(mesh_perforated(dom, cell, delta, h));
  const std::function<double(Vec2)> f = [&dom](Vec2 p) { return dom.source(p); };
  auto sys = assemble(*out.mesh, &f);
  apply_dirichlet_zero(sys, EdgeTag::Dirichlet);
  out.field = solve(sys, &out.report);

  // Energy identity |a(u,u) - (f,u)| <= 1e-8 a(u,u).
  const double energy = stiffness_energy(*out.mesh, out.field.values);
  const auto load = load_from_function(*out.mesh, f);
  double work = 0.0;
  for (int v = 0; v < out.mesh->vertex_count(); ++v) work += load[v] * out.field[v];
  if (energy > 0.0 && std::abs(energy - work) > 1e-8 * energy)
    throw solver_error("solve_direct: energy identity violated");
  return out;
}

}  // namespace perilayer
