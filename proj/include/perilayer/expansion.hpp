#pragma once

#include "perilayer/nearfield.hpp"

namespace perilayer {

// ---------------------------------------------------------------------------
// Matching bookkeeping at the implemented orders and evaluation of the
// composite approximation (macroscopic terms + boundary-layer corrector).

struct MatchedConstants {
  double l1_u00_plus = 0.0, l1_u00_minus = 0.0;    // l_1^{+-}(u00)
  double L1_U10_plus = 0.0, L1_U10_minus = 0.0;    // L_1(U_{1,0,+-})
  double Lm1_S1_plus = 0.0, Lm1_S1_minus = 0.0;    // L_{-1}(S_1^{+-})
  double lm1_u20_plus = 0.0, lm1_u20_minus = 0.0;  // l_{-1}^{+-}(u20)
  // Structural facts at these orders: u_{1,q} = 0 and U_{0,q,+-} = 0.
  static constexpr bool u1q_vanishes = true;
  static constexpr bool U0q_vanishes = true;
};

/// The low-order matching: L_1(U_{1,0,+-}) = l_1^{+-}(u00) and
/// l_{-1}^{+-}(u20) = L_1(U_{1,0,+-}) * L_{-1}(S_1^{+-}); all the floor(n/3)
/// and k-sums of the general conditions are empty at n <= 2, q = 0.
inline MatchedConstants match_low_order(double l1_plus, double l1_minus,
                                        double lm1_s1_plus, double lm1_s1_minus) {
  MatchedConstants m;
  m.l1_u00_plus = l1_plus;
  m.l1_u00_minus = l1_minus;
  m.L1_U10_plus = l1_plus;
  m.L1_U10_minus = l1_minus;
  m.Lm1_S1_plus = lm1_s1_plus;
  m.Lm1_S1_minus = lm1_s1_minus;
  m.lm1_u20_plus = m.L1_U10_plus * lm1_s1_plus;
  m.lm1_u20_minus = m.L1_U10_minus * lm1_s1_minus;
  return m;
}

/// Composite far-field approximation. All delta-dependence enters at
/// evaluation time; the stored terms are delta-independent.
struct CompositeApprox {
  const MacroContext* ctx = nullptr;
  const MacroField* u00 = nullptr;
  const MacroField* u01 = nullptr;  // may be null (level < 1)
  const MacroField* u20 = nullptr;  // may be null (level < 4/3)
  const TraceData* traces = nullptr;
  SmoothingSpline trace_u01_mean;   // <u01> on Gamma
  bool has_u01_trace = false;

  const Mesh* band_mesh = nullptr;             // for W_1^n interpolation
  const Field* w1n = nullptr;
  std::shared_ptr<PointLocator> band_locator;
  double l_band = 8.0;
  CutoffProfile chi_profile;
  double order = 5.0 / 3.0;  // N0 selector in {2/3, 1, 4/3, 5/3}

  bool with_u01() const { return order >= 1.0 - 1e-9 && u01; }
  bool with_u20() const { return order >= 4.0 / 3.0 - 1e-9 && u20; }
};

inline SmoothingSpline build_u01_mean_trace(const MacroContext& ctx,
                                            const MacroField& u01,
                                            const TraceData& td,
                                            int samples = 401,
                                            int spline_segments = 16) {
  std::vector<double> xs(samples), vals(samples);
  for (int i = 0; i < samples; ++i)
    xs[i] = td.window_lo + (td.window_hi - td.window_lo) * i / (samples - 1);
  const auto ut = trace_on_gamma(u01.field, GammaSide::Top, xs);
  const auto ub = trace_on_gamma(u01.field, GammaSide::Bottom, xs);
  for (int i = 0; i < samples; ++i) {
    vals[i] = 0.5 * (ut[i] + ub[i]);
    for (const auto& lift : u01.lifts) {
      const auto [r, theta] = lift.cone.frame.to_polar({xs[i], 0.0});
      (void)theta;
      const double cut = corner_cutoff(lift.profile, lift.cut_radius, r);
      if (cut == 0.0) continue;
      vals[i] += lift.coefficient * cut * std::pow(r, lift.cone.lambda) *
                 lift.cone.angular_mean_at_interface();
    }
  }
  return SmoothingSpline(xs, vals, td.window_lo, td.window_hi, spline_segments);
}

namespace expansiondetail {

inline double clamp_eval(const SmoothingSpline& s, double x) {
  return s.value(std::clamp(x, s.lo(), s.hi()));
}

// W_1^n by P1 interpolation on the band, X1 reduced mod 1 and the value
// clamped to zero beyond |X2| = L_band - 1 (profile tails are below the
// decay tolerance there).
inline double eval_w1n(const CompositeApprox& c, double X1, double X2) {
  if (!c.w1n || std::abs(X2) >= c.l_band - 1.0) return 0.0;
  double xf = X1 - std::floor(X1);
  std::array<double, 3> bary;
  int t = c.band_locator->locate({xf, X2}, &bary, 1e-7);
  if (t < 0) {
    // Points inside the canonical hole are only queried for |x2| ~ 0 probes;
    // treat as the profile's hole-boundary neighborhood average.
    t = c.band_locator->locate({xf, X2}, &bary, 0.3);
    if (t < 0) throw config_error("eval_w1n: point not in the band mesh");
  }
  const auto& tri = c.band_mesh->triangles[t];
  double v = 0.0;
  for (int k = 0; k < 3; ++k) v += bary[k] * (*c.w1n)[tri[k]];
  return v;
}

}  // namespace expansiondetail

/// Value of the composite approximation at x for layer width delta.
inline double evaluate_composite(const CompositeApprox& c, double delta, Vec2 x) {
  const double L = c.ctx->domain.half_length;
  double macro = evaluate_macro(*c.ctx, *c.u00, x);
  if (c.with_u01()) macro += delta * evaluate_macro(*c.ctx, *c.u01, x);
  if (c.with_u20())
    macro += std::pow(delta, 4.0 / 3.0) * evaluate_macro(*c.ctx, *c.u20, x);
  if (std::abs(x.x) >= L) return macro;

  const double X2 = x.y / delta;
  const double cut = chi(c.chi_profile, X2);
  double value = cut * macro;
  // Pi_{0,0} = <u00> W_0^t with W_0^t = 1 - chi(X2).
  const double w0t = 1.0 - cut;
  if (w0t > 0.0) {
    value += expansiondetail::clamp_eval(c.traces->mean_u, x.x) * w0t;
    if (c.with_u01() && c.has_u01_trace)
      value += delta * expansiondetail::clamp_eval(c.trace_u01_mean, x.x) * w0t;
  }
  // Pi_{0,1} also carries <d_x2 u00> W_1^n.
  if (c.with_u01()) {
    const double X1 = (x.x + L) / delta;
    const double w1n = expansiondetail::eval_w1n(c, X1, X2);
    if (w1n != 0.0)
      value += delta *
               c.traces->mean_dnu.value(
                   std::clamp(x.x, c.traces->window_lo, c.traces->window_hi)) *
               w1n;
  }
  return value;
}

/// Interpolates the composite onto the direct-solution mesh and measures the
/// difference on Omega_alpha = Omega^delta minus the corner-and-layer strip.
inline SubdomainNorms approximation_error(const DirectSolution& direct,
                                          const CompositeApprox& approx,
                                          double delta, double alpha) {
  const Mesh& mesh = *direct.mesh;
  const double L = approx.ctx->domain.half_length;
  Field diff(mesh);
  for (int v = 0; v < mesh.vertex_count(); ++v)
    diff[v] = direct.field[v] - evaluate_composite(approx, delta, mesh.vertices[v]);
  return subdomain_norms(diff, [&](Vec2 p) {
    return std::abs(p.y) >= alpha || std::abs(p.x) >= L + alpha;
  });
}

}  // namespace perilayer
