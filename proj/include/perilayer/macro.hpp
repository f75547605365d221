#pragma once

#include <map>

#include "perilayer/cell.hpp"
#include "perilayer/fem.hpp"
#include "perilayer/spline.hpp"

namespace perilayer {

// ---------------------------------------------------------------------------
// Macroscopic hierarchy on the split limit mesh: the limit field u00, corner
// coefficient extraction, closed-form cone lifts, the harmonic singularity
// fields s_{-1,0}^{+-}, the first transmission correction u01, and u20.

class resonance_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed-form harmonic lift r^lambda g0(theta) on a corner sector split by
/// the interface ray, g0 = A_i sin(lambda theta) + B_i cos(lambda theta) on
/// the two sub-sectors (1 = between theta_min and the interface ray, 2 =
/// beyond). Vanishes on both walls; carries prescribed jumps across the ray.
struct ConeLift {
  CornerFrame frame;
  double lambda = 0.0;
  double a = 0.0, b = 0.0;  // [g0] and [g0'] across the interface ray
  double coef[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // [region][A,B]

  double interface_angle() const { return frame.corner == Corner::Plus ? pi : 0.0; }

  double angular_dtheta(double theta) const {
    const int reg = region_of(theta);
    return lambda * (coef[reg][0] * std::cos(lambda * theta) -
                     coef[reg][1] * std::sin(lambda * theta));
  }

  int region_of(double theta) const {
    return theta <= interface_angle() ? 0 : 1;
  }

  double value(double r, double theta) const {
    return std::pow(r, lambda) * angular_value(theta);
  }

  double angular_value(double theta) const {
    const int reg = region_of(theta);
    return coef[reg][0] * std::sin(lambda * theta) +
           coef[reg][1] * std::cos(lambda * theta);
  }

  // Mean of g0 across the interface ray, (upper + lower)/2.
  double angular_mean_at_interface() const {
    const double ti = interface_angle();
    const double g1 = coef[0][0] * std::sin(lambda * ti) + coef[0][1] * std::cos(lambda * ti);
    const double g2 = coef[1][0] * std::sin(lambda * ti) + coef[1][1] * std::cos(lambda * ti);
    return 0.5 * (g1 + g2);
  }
};

/// Solves the 4x4 system for the piecewise angular profile with wall
/// conditions and interface jumps [g0] = a (upper minus lower trace) and
/// [g0'] = b. lambda in Lambda (log-resonant case) is rejected.
inline ConeLift cone_lift(const CornerFrame& frame, double lambda, double a, double b) {
  const double idx = 1.5 * lambda;  // lambda = 2m/3 <=> idx integer
  if (std::abs(idx - std::round(idx)) < 1e-12 && std::abs(idx) > 0.5)
    throw resonance_error("cone_lift: lambda in the resonant set");
  if (std::abs(lambda) < 1e-12)
    throw resonance_error("cone_lift: lambda = 0 not supported");

  ConeLift lift;
  lift.frame = frame;
  lift.lambda = lambda;
  lift.a = a;
  lift.b = b;

  const bool plus = frame.corner == Corner::Plus;
  const double wall1 = frame.theta_min();
  const double wall2 = frame.theta_max();
  const double ti = lift.interface_angle();
  // Region 0 = (wall1, ti), region 1 = (ti, wall2). The upper sub-sector
  // (x2 > 0) is region 0 for the plus corner and region 1 for the minus one.
  const int upper = plus ? 0 : 1;
  const int lower = 1 - upper;

  Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
  Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
  auto s = [&](double t) { return std::sin(lambda * t); };
  auto c = [&](double t) { return std::cos(lambda * t); };
  // Unknown layout: (A0, B0, A1, B1).
  M(0, 0) = s(wall1);
  M(0, 1) = c(wall1);
  M(1, 2) = s(wall2);
  M(1, 3) = c(wall2);
  M(2, 2 * upper + 0) = s(ti);
  M(2, 2 * upper + 1) = c(ti);
  M(2, 2 * lower + 0) = -s(ti);
  M(2, 2 * lower + 1) = -c(ti);
  rhs(2) = a;
  M(3, 2 * upper + 0) = c(ti);
  M(3, 2 * upper + 1) = -s(ti);
  M(3, 2 * lower + 0) = -c(ti);
  M(3, 2 * lower + 1) = s(ti);
  rhs(3) = b / lambda;

  const Eigen::FullPivLU<Eigen::Matrix4d> lu(M);
  if (!lu.isInvertible())
    throw resonance_error("cone_lift: singular angular system");
  const Eigen::Vector4d sol = lu.solve(rhs);
  lift.coef[0][0] = sol[0];
  lift.coef[0][1] = sol[1];
  lift.coef[1][0] = sol[2];
  lift.coef[1][1] = sol[3];
  return lift;
}

/// Eigen-mode lift r^{lambda_m} w_{m,0,+-}(theta) expressed as a ConeLift
/// (continuous across the interface; a = b = 0).
inline ConeLift mode_lift(const CornerFrame& frame, int m) {
  ConeLift lift;
  lift.frame = frame;
  lift.lambda = singular_exponent(m);
  if (frame.corner == Corner::Plus) {
    lift.coef[0][0] = lift.coef[1][0] = 1.0;
  } else {
    // sin(lambda (pi - theta)) = sin(lambda pi) cos(lambda theta)
    //                            - cos(lambda pi) sin(lambda theta)
    lift.coef[0][0] = lift.coef[1][0] = -std::cos(lift.lambda * pi);
    lift.coef[0][1] = lift.coef[1][1] = std::sin(lift.lambda * pi);
  }
  return lift;
}

// ---------------------------------------------------------------------------

enum class MacroLabel { U00, U01, SMinus1Plus, SMinus1Minus, U20 };

struct SingularLift {
  ConeLift cone;
  double coefficient = 0.0;
  double cut_radius = 1.0;  // chi_L support scale (the half-length L)
  CutoffProfile profile;
};

struct MacroField {
  Field field;  // FEM part (split limit mesh)
  MacroLabel label = MacroLabel::U00;
  std::vector<SingularLift> lifts;
};

struct MacroContext {
  DomainSpec domain;
  CutoffProfile chi_profile;
  Mesh mesh;
  std::unique_ptr<PointLocator> locator;

  MacroContext(const DomainSpec& dom, double h, CutoffProfile profile = {})
      : domain(dom), chi_profile(profile), mesh(mesh_limit_split(dom, h)) {
    locator = std::make_unique<PointLocator>(mesh);
  }
  // The locator points into this object's mesh; the context must stay put.
  MacroContext(const MacroContext&) = delete;
  MacroContext& operator=(const MacroContext&) = delete;
  MacroContext(MacroContext&&) = delete;
  MacroContext& operator=(MacroContext&&) = delete;
};

inline double evaluate_lifts(const MacroField& f, Vec2 p) {
  double s = 0.0;
  for (const auto& lift : f.lifts) {
    if (lift.coefficient == 0.0) continue;
    const auto [r, theta] = lift.cone.frame.to_polar(p);
    if (r <= 0.0) continue;
    const double cut = corner_cutoff(lift.profile, lift.cut_radius, r);
    if (cut == 0.0) continue;
    s += lift.coefficient * cut * lift.cone.value(r, theta);
  }
  return s;
}

/// Total field value: FEM interpolation plus the analytic lifts.
inline double evaluate_macro(const MacroContext& ctx, const MacroField& f, Vec2 p) {
  std::array<double, 3> bary;
  const int t = ctx.locator->locate(p, &bary, 1e-7);
  if (t < 0) throw config_error("evaluate_macro: point outside the mesh");
  // On Gamma the locator may land on either copy; acceptable for sampling
  // away from the interface, which is how extraction uses it.
  const auto& tri = ctx.mesh.triangles[t];
  double v = 0.0;
  for (int k = 0; k < 3; ++k) v += bary[k] * f.field[tri[k]];
  return v + evaluate_lifts(f, p);
}

// ---------------------------------------------------------------------------
// u00: the limit macroscopic field.

inline MacroField solve_limit(const MacroContext& ctx) {
  const std::function<double(Vec2)> f = [&](Vec2 p) { return ctx.domain.source(p); };
  auto sys = assemble(ctx.mesh, &f);
  apply_dirichlet_zero(sys, EdgeTag::Dirichlet);
  apply_interface_jump(sys, [](double) { return 0.0; }, [](double) { return 0.0; });
  MacroField out;
  out.field = solve(sys);
  out.label = MacroLabel::U00;
  // Node-wise zero jump across every pair.
  for (auto& [t, b] : ctx.mesh.interface_pairs)
    if (std::abs(out.field[t] - out.field[b]) > 1e-12)
      throw solver_error("solve_limit: interface jump leaked through the constraints");
  return out;
}

// ---------------------------------------------------------------------------
// Corner coefficient extraction.

struct CornerCoeffs {
  Corner corner = Corner::Plus;
  std::map<int, double> coeffs;  // q -> l_q
  std::vector<double> fit_radii;
  double fit_residual = 0.0;

  double at(int q) const {
    auto it = coeffs.find(q);
    return it == coeffs.end() ? 0.0 : it->second;
  }

  // Unreliable when the radial fit residual exceeds 5% of the largest
  // extracted coefficient.
  bool reliable() const {
    double largest = 0.0;
    for (auto& [q, v] : coeffs) largest = std::max(largest, std::abs(v));
    return fit_residual <= 0.05 * std::max(largest, 1e-300);
  }
};

/// Angular projection + radial least squares against r^{lambda_q}. Modes q
/// and -q share the angular profile (w_{-q} = -w_q), so each |q| group is
/// fitted jointly across the sample radii.
inline CornerCoeffs extract_corner_coeffs(
    const std::function<double(Vec2)>& field, const CornerFrame& frame,
    const std::vector<int>& q_range, const std::vector<double>& radii) {
  if (radii.size() < 2) throw config_error("extract_corner_coeffs: need >= 2 radii");
  for (int q : q_range)
    if (q == 0) throw config_error("extract_corner_coeffs: q = 0 is not a mode");

  CornerCoeffs out;
  out.corner = frame.corner;
  out.fit_radii = radii;

  // Angular quadrature nodes (composite Simpson).
  const int nq = 384;
  const double t0 = frame.theta_min(), t1 = frame.theta_max();
  std::vector<double> theta(nq + 1), wq(nq + 1);
  for (int i = 0; i <= nq; ++i) {
    theta[i] = t0 + (t1 - t0) * i / nq;
    wq[i] = (i == 0 || i == nq) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    wq[i] *= (t1 - t0) / nq / 3.0;
  }

  std::set<int> groups;
  for (int q : q_range) groups.insert(std::abs(q));

  // Projections p[g][radius] onto w_{|q|,0}.
  std::map<int, std::vector<double>> proj;
  for (int g : groups) proj[g].assign(radii.size(), 0.0);
  for (size_t ri = 0; ri < radii.size(); ++ri) {
    for (int i = 0; i <= nq; ++i) {
      const Vec2 p = frame.origin + Vec2{radii[ri] * std::cos(theta[i]),
                                         radii[ri] * std::sin(theta[i])};
      const double fv = field(p);
      for (int g : groups)
        proj[g][radii.size() == 0 ? 0 : ri] +=
            wq[i] * fv * angular_mode(frame, g, theta[i]);
    }
    for (int g : groups) proj[g][ri] *= 4.0 / (3.0 * pi);
  }

  double res2 = 0.0, tot2 = 0.0;
  for (int g : groups) {
    std::vector<int> qs;
    for (int q : q_range)
      if (std::abs(q) == g) qs.push_back(q);
    const int m = static_cast<int>(qs.size());
    Eigen::MatrixXd A(radii.size(), m);
    Eigen::VectorXd y(radii.size());
    for (size_t ri = 0; ri < radii.size(); ++ri) {
      y[ri] = proj[g][ri];
      for (int k = 0; k < m; ++k) {
        const double lambda = singular_exponent(qs[k]);
        const double sign = qs[k] > 0 ? 1.0 : -1.0;  // w_q = sign(q) w_{|q|}
        A(ri, k) = sign * std::pow(radii[ri], lambda);
      }
    }
    const Eigen::VectorXd c = (A.transpose() * A)
                                  .ldlt()
                                  .solve(A.transpose() * y);
    for (int k = 0; k < m; ++k) out.coeffs[qs[k]] = c[k];
    res2 += (A * c - y).squaredNorm();
    tot2 += y.squaredNorm();
  }
  out.fit_residual = std::sqrt(res2 / std::max(1e-300, static_cast<double>(radii.size())));
  (void)tot2;
  return out;
}

inline CornerCoeffs extract_corner_coeffs(const MacroContext& ctx,
                                          const MacroField& f,
                                          const CornerFrame& frame,
                                          const std::vector<int>& q_range,
                                          const std::vector<double>& radii) {
  return extract_corner_coeffs(
      [&](Vec2 p) { return evaluate_macro(ctx, f, p); }, frame, q_range, radii);
}

inline std::vector<double> default_extraction_radii(double half_length) {
  // 5 log-spaced radii in [0.1 L, 0.3 L].
  std::vector<double> r(5);
  for (int i = 0; i < 5; ++i)
    r[i] = 0.1 * half_length * std::pow(3.0, i / 4.0);
  return r;
}

// ---------------------------------------------------------------------------
// s_{-1,0}^{+-}: harmonic singularity with r^{-2/3} behavior at one corner.

inline MacroField solve_singularity(const MacroContext& ctx, Corner corner) {
  const double L = ctx.domain.half_length;
  const CornerFrame frame = corner == Corner::Plus ? CornerFrame::plus(L)
                                                   : CornerFrame::minus(L);
  SingularLift lift;
  lift.cone = mode_lift(frame, -1);
  lift.coefficient = 1.0;
  lift.cut_radius = L;
  lift.profile = ctx.chi_profile;

  // -Delta s~ = [Delta, chi_L] v on the annulus where chi_L varies.
  const std::function<double(Vec2)> load = [&](Vec2 p) {
    const auto [r, theta] = frame.to_polar(p);
    if (r <= 0.0) return 0.0;
    const double c1 = corner_cutoff_d1(ctx.chi_profile, L, r);
    if (c1 == 0.0 && corner_cutoff_d2(ctx.chi_profile, L, r) == 0.0) return 0.0;
    const double c2 = corner_cutoff_d2(ctx.chi_profile, L, r);
    const double lam = lift.cone.lambda;
    const double g = lift.cone.angular_value(theta);
    return (c2 + c1 / r) * std::pow(r, lam) * g +
           2.0 * c1 * lam * std::pow(r, lam - 1.0) * g;
  };
  auto sys = assemble(ctx.mesh, &load, LoadQuadrature::Degree4);
  apply_dirichlet_zero(sys, EdgeTag::Dirichlet);
  apply_interface_jump(sys, [](double) { return 0.0; }, [](double) { return 0.0; });

  MacroField out;
  out.field = solve(sys);
  out.label = corner == Corner::Plus ? MacroLabel::SMinus1Plus
                                     : MacroLabel::SMinus1Minus;
  out.lifts.push_back(lift);
  return out;
}

// ---------------------------------------------------------------------------
// u01: first transmission correction.

struct TraceData {
  SmoothingSpline mean_u;      // <u00> on Gamma
  SmoothingSpline mean_dnu;    // <d_x2 u00> on Gamma
  double window_lo = 0.0, window_hi = 0.0;
};

inline TraceData build_trace_data(const MacroContext& ctx, const MacroField& u00,
                                  int samples = 401, int spline_segments = 16) {
  const double L = ctx.domain.half_length;
  const double r_cut = 0.05 * L;
  TraceData td;
  td.window_lo = -L + r_cut;
  td.window_hi = L - r_cut;
  std::vector<double> xs(samples);
  for (int i = 0; i < samples; ++i)
    xs[i] = td.window_lo + (td.window_hi - td.window_lo) * i / (samples - 1);
  const auto ut = trace_on_gamma(u00.field, GammaSide::Top, xs);
  const auto ub = trace_on_gamma(u00.field, GammaSide::Bottom, xs);
  const auto dt = trace_normal_derivative(u00.field, GammaSide::Top, xs);
  const auto db = trace_normal_derivative(u00.field, GammaSide::Bottom, xs);
  std::vector<double> mu(samples), mdu(samples);
  for (int i = 0; i < samples; ++i) {
    mu[i] = 0.5 * (ut[i] + ub[i]);
    mdu[i] = 0.5 * (dt[i] + db[i]);
  }
  td.mean_u = SmoothingSpline(xs, mu, td.window_lo, td.window_hi, spline_segments);
  td.mean_dnu = SmoothingSpline(xs, mdu, td.window_lo, td.window_hi, spline_segments);
  return td;
}

// Jump amplitudes of the order-1 singular lifts: the cone lift for mode n at
// a corner carries [g0] = a_{n,1,+-} and [g0'] = b_{n,1,+-}, with
//   a_{n,1,+-} = -+ lambda_n D_1^t sin(lambda_n pi) - D_1^n lambda_n cos(lambda_n pi)
//   b_{n,1,+}  = -lambda_n (lambda_n - 1) (N_2^t sin + N_2^n cos)(lambda_n pi)
//   b_{n,1,-}  = +lambda_n (lambda_n - 1) (N_2^t sin - N_2^n cos)(lambda_n pi).
inline std::pair<double, double> order1_jump_amplitudes(
    const TransmissionConstants& tc, Corner corner, int n) {
  const double lam = singular_exponent(n);
  const double sn = std::sin(lam * pi), cn = std::cos(lam * pi);
  const double d1t = tc.d_t[1], d1n = tc.d_n[1];
  const double n2t = tc.n_t[2], n2n = tc.n_n[2];
  double a, b;
  if (corner == Corner::Plus) {
    a = -lam * d1t * sn - d1n * lam * cn;
    b = -lam * (lam - 1.0) * (n2t * sn + n2n * cn);
  } else {
    a = lam * d1t * sn - d1n * lam * cn;
    b = lam * (lam - 1.0) * (n2t * sn - n2n * cn);
  }
  return {a, b};
}

struct MacroCorrection {
  MacroField u01;
  CornerCoeffs coeffs_plus, coeffs_minus;  // l_n(u00)
  TraceData traces;
};

inline MacroCorrection solve_macro_correction(const MacroContext& ctx,
                                              const MacroField& u00,
                                              const TransmissionConstants& tc) {
  const double L = ctx.domain.half_length;
  MacroCorrection out;
  out.traces = build_trace_data(ctx, u00);
  const auto radii = default_extraction_radii(L);
  out.coeffs_plus = extract_corner_coeffs(ctx, u00, CornerFrame::plus(L), {1, 2}, radii);
  out.coeffs_minus = extract_corner_coeffs(ctx, u00, CornerFrame::minus(L), {1, 2}, radii);

  // Singular lifts for n = 1, 2 at each corner; exponents lambda_n - 1 are
  // never resonant (2n/3 - 1 is not an even third).
  MacroField& u01 = out.u01;
  u01.label = MacroLabel::U01;
  for (Corner corner : {Corner::Plus, Corner::Minus}) {
    const CornerFrame frame =
        corner == Corner::Plus ? CornerFrame::plus(L) : CornerFrame::minus(L);
    const auto& coeffs =
        corner == Corner::Plus ? out.coeffs_plus : out.coeffs_minus;
    for (int n : {1, 2}) {
      const auto [a, b] = order1_jump_amplitudes(tc, corner, n);
      SingularLift lift;
      lift.cone = cone_lift(frame, singular_exponent(n) - 1.0, a, b);
      lift.coefficient = coeffs.at(n);
      lift.cut_radius = L;
      lift.profile = ctx.chi_profile;
      u01.lifts.push_back(lift);
    }
  }

  // Jump data g = D_1^t d_x1<u00> + D_1^n <d_x2 u00> and
  // h = N_2^t d^2_x1<u00> + N_2^n d_x1<d_x2 u00>, minus the lift traces,
  // tapered to zero inside the corner windows.
  const auto& td = out.traces;
  auto lift_jump = [&](const SingularLift& lift, double x1, bool normal) {
    const auto [r, theta] = lift.cone.frame.to_polar({x1, 0.0});
    (void)theta;
    if (r <= 0.0) return 0.0;
    const double cut = corner_cutoff(lift.profile, lift.cut_radius, r);
    if (cut == 0.0) return 0.0;
    if (!normal)
      return lift.coefficient * cut * std::pow(r, lift.cone.lambda) * lift.cone.a;
    // [d_x2 v] = -+ r^{lambda-1} [g0'] for the plus/minus corner.
    const double sgn = lift.cone.frame.corner == Corner::Plus ? -1.0 : 1.0;
    return lift.coefficient * cut * sgn * std::pow(r, lift.cone.lambda - 1.0) *
           lift.cone.b;
  };
  auto raw_g = [&, d1t = tc.d_t[1], d1n = tc.d_n[1]](double x) {
    return d1t * td.mean_u.d1(x) + d1n * td.mean_dnu.value(x);
  };
  auto raw_h = [&, n2t = tc.n_t[2], n2n = tc.n_n[2]](double x) {
    return n2t * td.mean_u.d2(x) + n2n * td.mean_dnu.d1(x);
  };
  auto regular = [&](double x, bool normal) {
    // Clamp into the sampled window and taper linearly to the corner.
    double taper = 1.0;
    double xe = x;
    if (x < td.window_lo) {
      taper = std::max(0.0, (x + L) / (td.window_lo + L));
      xe = td.window_lo;
    } else if (x > td.window_hi) {
      taper = std::max(0.0, (L - x) / (L - td.window_hi));
      xe = td.window_hi;
    }
    double v = normal ? raw_h(xe) : raw_g(xe);
    for (const auto& lift : u01.lifts) v -= lift_jump(lift, xe, normal);
    if (!std::isfinite(v))
      throw solver_error("solve_macro_correction: non-finite residual jump data");
    return taper * v;
  };

  // Volume load from the lifted singular parts: sum of l_n [Delta, chi_L] v_n.
  const std::function<double(Vec2)> load = [&](Vec2 p) {
    double s = 0.0;
    for (const auto& lift : u01.lifts) {
      if (lift.coefficient == 0.0) continue;
      const auto [r, theta] = lift.cone.frame.to_polar(p);
      if (r <= 0.0) continue;
      const double c1 = corner_cutoff_d1(lift.profile, lift.cut_radius, r);
      const double c2 = corner_cutoff_d2(lift.profile, lift.cut_radius, r);
      if (c1 == 0.0 && c2 == 0.0) continue;
      const double lam = lift.cone.lambda;
      const double g = lift.cone.angular_value(theta);
      s += lift.coefficient * ((c2 + c1 / r) * std::pow(r, lam) * g +
                               2.0 * c1 * lam * std::pow(r, lam - 1.0) * g);
    }
    return s;
  };
  auto sys = assemble(ctx.mesh, &load, LoadQuadrature::Degree4);
  apply_dirichlet_zero(sys, EdgeTag::Dirichlet);
  apply_interface_jump(
      sys, [&](double x) { return regular(x, false); },
      [&](double x) { return regular(x, true); });
  u01.field = solve(sys);
  return out;
}

// ---------------------------------------------------------------------------
// u20 = sum_{+-} l1^{+-}(u00) L_{-1}(S_1^{+-}) s_{-1,0}^{+-}.

inline MacroField build_u20(const MacroField& s_plus, const MacroField& s_minus,
                            double coef_plus, double coef_minus) {
  MacroField out;
  out.label = MacroLabel::U20;
  out.field = s_plus.field;  // same mesh
  for (int i = 0; i < static_cast<int>(out.field.values.size()); ++i)
    out.field.values[i] =
        coef_plus * s_plus.field[i] + coef_minus * s_minus.field[i];
  for (auto lift : s_plus.lifts) {
    lift.coefficient *= coef_plus;
    out.lifts.push_back(lift);
  }
  for (auto lift : s_minus.lifts) {
    lift.coefficient *= coef_minus;
    out.lifts.push_back(lift);
  }
  return out;
}

}  // namespace perilayer
