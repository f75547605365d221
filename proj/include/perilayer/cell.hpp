#pragma once

#include <memory>

#include "perilayer/fem.hpp"
#include "perilayer/geometry.hpp"
#include "perilayer/mesh.hpp"

namespace perilayer {

// ---------------------------------------------------------------------------
// Boundary-layer cell problems on the truncated periodicity band: the kernel
// profile D with its far offset D_infinity, the profile functions W_p^t and
// W_p^n, and the transmission constants D_p, N_p of the order-by-order
// recursion.

enum class ProfileKind { Tangential, Normal, DTilde };

struct ProfileFunction {
  Field field;
  int p = 0;
  ProfileKind kind = ProfileKind::Tangential;
  double decay_report = 0.0;  // tail L2 mass / interior L2 mass
};

struct TransmissionConstants {
  double d_infinity = 0.0;
  std::vector<double> d_t, d_n, n_t, n_n;  // indexed p = 0..P
  int max_order = 0;

  struct Diagnostics {
    CutoffKind chi_kind = CutoffKind::QuinticSmoothstep;
    double l_band = 0.0;
    double h = 0.0;
    double offset_top = 0.0;     // zero-mean-gauge far offsets of D
    double offset_bottom = 0.0;
    std::vector<double> compatibility;  // per solve: |int rhs*{1,D}| / |rhs|
    std::vector<double> decay;          // per solve: tail mass report
  } diagnostics;
};

namespace celldetail {

inline double monomial(int p, double y) {  // y^p / p!
  if (p < 0) return 0.0;
  double m = 1.0;
  for (int k = 1; k <= p; ++k) m *= y / k;
  return m;
}

// Pointwise commutator data (closed form, support 1 < |X2| < 2):
// base_p(y) = 2 chi'(y) m_{p-1}(y) + chi''(y) m_p(y), so that
// <g_p> = base_p / 2 and [g_p] = sign(y) base_p.
inline double g_base(const CutoffProfile& chi_profile, int p, double y) {
  return 2.0 * chi_d1(chi_profile, y) * monomial(p - 1, y) +
         chi_d2(chi_profile, y) * monomial(p, y);
}

inline double mean_g(const CutoffProfile& chi_profile, int p, double y) {
  return 0.5 * g_base(chi_profile, p, y);
}

inline double jump_g(const CutoffProfile& chi_profile, int p, double y) {
  const double s = y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : 0.0);
  return s * g_base(chi_profile, p, y);
}

inline std::vector<double> dx1_elementwise(const Mesh& mesh,
                                           const std::vector<double>& u) {
  std::vector<double> out(mesh.triangle_count(), 0.0);
  std::array<Vec2, 3> g;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    femdetail::p1_gradients(mesh, t, g);
    const auto& tri = mesh.triangles[t];
    out[t] = u[tri[0]] * g[0].x + u[tri[1]] * g[1].x + u[tri[2]] * g[2].x;
  }
  return out;
}

inline double edge_average(const Mesh& mesh, const Field& u, EdgeTag tag) {
  double acc = 0.0, len_total = 0.0;
  for (auto& [e, t] : mesh.edge_tags) {
    if (t != tag) continue;
    const double len = norm(mesh.vertices[e.first] - mesh.vertices[e.second]);
    acc += 0.5 * len * (u[e.first] + u[e.second]);
    len_total += len;
  }
  if (len_total == 0.0) throw config_error("edge_average: tag not present");
  return acc / len_total;
}

inline double tail_ratio(const Mesh& mesh, const std::vector<double>& u,
                         double l_band) {
  Field f(mesh, u);
  const auto tail =
      subdomain_norms(f, [&](Vec2 p) { return std::abs(p.y) > l_band - 1.0; });
  const auto interior =
      subdomain_norms(f, [&](Vec2 p) { return std::abs(p.y) <= l_band - 1.0; });
  // identically-zero profiles (e.g. W_1^t) have no meaningful ratio
  return interior.l2 > 1e-12 ? tail.l2 / interior.l2 : 0.0;
}

// Averages of the end traces, as weight vectors (decay gauge).
inline std::pair<std::vector<double>, std::vector<double>> end_trace_weights(
    const Mesh& mesh) {
  std::vector<double> top(mesh.vertex_count(), 0.0), bot(mesh.vertex_count(), 0.0);
  double top_len = 0.0, bot_len = 0.0;
  for (auto& [e, tag] : mesh.edge_tags) {
    if (tag != EdgeTag::BandTop && tag != EdgeTag::BandBottom) continue;
    const double len = norm(mesh.vertices[e.first] - mesh.vertices[e.second]);
    auto& w = (tag == EdgeTag::BandTop) ? top : bot;
    w[e.first] += 0.5 * len;
    w[e.second] += 0.5 * len;
    (tag == EdgeTag::BandTop ? top_len : bot_len) += len;
  }
  std::vector<double> sum(mesh.vertex_count()), diff(mesh.vertex_count());
  for (int i = 0; i < mesh.vertex_count(); ++i) {
    const double a = top[i] / top_len, b = bot[i] / bot_len;
    sum[i] = a + b;
    diff[i] = a - b;
  }
  return {sum, diff};
}

}  // namespace celldetail

// Shared state for the band solves.
struct BandContext {
  Mesh mesh;
  CutoffProfile chi_profile;
  double l_band = 0.0;
  double h = 0.0;
  Eigen::SparseMatrix<double> stiffness;  // full, unconstrained
  Field profile_d;       // antisymmetric gauge: far offsets exactly +-D_inf
  Field profile_dtilde;  // decaying remainder of D
  double d_infinity = 0.0;
  double offset_top = 0.0;     // zero-mean-gauge offsets (diagnostic)
  double offset_bottom = 0.0;
  double dtilde_decay = 0.0;
};

namespace celldetail {

// Weak load of the commutator [Delta, v](m_p) where v = chi_+ +- chi_-, in a
// discrete integration-by-parts form that keeps the compatibility integrals
// of the recursion exact to machine precision (the pointwise closed forms
// above agree with it at O(h^2)).
//
// p <= 1 (m_p harmonic):   load = -A I_h(v m_p) + end-flux.
// p >= 2: the unbounded part of v m_p would leave O(h^2) interpolation
// residue all over the band, so the compactly supported decomposition
//   [Delta, v] m_p = s (1-chi) m_{p-2} - Delta( s (1-chi) m_p ),
// with s = 1 (mean) or sign(X2) (jump), is assembled instead: a quadrature
// load, minus the weak Laplacian A I_h(s (1-chi) m_p), minus the flux this
// lift sends through the hole boundary (where chi = 0).
inline Eigen::VectorXd g_load(const BandContext& ctx, int p, bool jump) {
  const Mesh& mesh = ctx.mesh;
  const CutoffProfile& cp = ctx.chi_profile;
  const int n = mesh.vertex_count();
  auto sgn = [&](double y) { return jump ? (y >= 0.0 ? 1.0 : -1.0) : 1.0; };

  if (p <= 1) {
    Eigen::VectorXd w(n);
    for (int v = 0; v < n; ++v) {
      const double y = mesh.vertices[v].y;
      w[v] = sgn(y) * chi(cp, y) * monomial(p, y);
    }
    Eigen::VectorXd load = -(ctx.stiffness * w);
    // End fluxes of v m_p: chi = 1 there; outward normal -e2 at the bottom.
    const double top_val = monomial(p - 1, ctx.l_band);
    const double bot_val = -sgn(-1.0) * monomial(p - 1, -ctx.l_band);
    for (auto& [e, tag] : mesh.edge_tags) {
      if (tag != EdgeTag::BandTop && tag != EdgeTag::BandBottom) continue;
      const double len = norm(mesh.vertices[e.first] - mesh.vertices[e.second]);
      const double val = (tag == EdgeTag::BandTop) ? top_val : bot_val;
      load[e.first] += 0.5 * len * val;
      load[e.second] += 0.5 * len * val;
    }
    return load;
  }

  Eigen::VectorXd w(n);
  for (int v = 0; v < n; ++v) {
    const double y = mesh.vertices[v].y;
    w[v] = sgn(y) * (1.0 - chi(cp, y)) * monomial(p, y);
  }
  Eigen::VectorXd load = ctx.stiffness * w;
  const auto vol = load_from_function(
      mesh,
      [&, p](Vec2 pt) {
        return sgn(pt.y) * (1.0 - chi(cp, pt.y)) * monomial(p - 2, pt.y);
      },
      LoadQuadrature::Degree4);
  for (int i = 0; i < n; ++i) load[i] += vol[i];

  // Hole-boundary flux of the lift: n . grad(s m_p) = n_y s m_{p-1} (chi = 0
  // in a neighborhood of the hole). The outward normal of the fluid region
  // points away from the ring triangle's third vertex.
  for (auto& [e, tag] : mesh.edge_tags) {
    if (tag != EdgeTag::Hole) continue;
    const Vec2 a = mesh.vertices[e.first], b = mesh.vertices[e.second];
    Vec2 nrm{b.y - a.y, a.x - b.x};
    const double len = norm(nrm);
    nrm = (1.0 / len) * nrm;
    // Orient toward the hole interior using the adjacent triangle.
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      int hits = 0;
      int third = -1;
      for (int v : tri) {
        if (v == e.first || v == e.second)
          ++hits;
        else
          third = v;
      }
      if (hits == 2) {
        const Vec2 mid = 0.5 * (a + b);
        if (dot(nrm, mesh.vertices[third] - mid) > 0.0) nrm = -1.0 * nrm;
        break;
      }
    }
    // 2-point Gauss along the edge.
    const double q1 = 0.5 - 0.5 / std::sqrt(3.0), q2 = 0.5 + 0.5 / std::sqrt(3.0);
    for (double q : {q1, q2}) {
      const Vec2 pq = a + q * (b - a);
      const double val = nrm.y * sgn(pq.y) * monomial(p - 1, pq.y);
      load[e.first] -= 0.5 * len * val * (1.0 - q);
      load[e.second] -= 0.5 * len * val * q;
    }
  }
  return load;
}

}  // namespace celldetail

/// Kernel profile D: harmonic, X1-periodic, Neumann on the hole, realized on
/// the truncated band with unit flux at both ends and a zero-mean gauge, then
/// re-gauged antisymmetrically so the far offsets are exactly +-D_infinity.
/// D_infinity itself comes from the gauge-free offset combination.
inline BandContext solve_band_context(const BandSpec& spec,
                                      const CutoffProfile& chi_profile) {
  BandContext ctx;
  ctx.mesh = mesh_band(spec);
  ctx.chi_profile = chi_profile;
  ctx.l_band = spec.l_band;
  ctx.h = spec.h;
  const Mesh& mesh = ctx.mesh;

  auto sys = assemble(mesh);
  ctx.stiffness = sys.matrix;
  for (auto& [e, tag] : mesh.edge_tags) {
    if (tag != EdgeTag::BandTop && tag != EdgeTag::BandBottom) continue;
    const double len = norm(mesh.vertices[e.first] - mesh.vertices[e.second]);
    const double s = (tag == EdgeTag::BandTop) ? 1.0 : -1.0;
    sys.rhs[e.first] += 0.5 * s * len;
    sys.rhs[e.second] += 0.5 * s * len;
  }
  apply_periodic(sys, mesh.periodic_pairs);

  const std::function<double(Vec2)> one = [](Vec2) { return 1.0; };
  const auto mass = load_from_function(mesh, one);
  Field d = solve_with_orthogonality(sys, {mass});

  ctx.offset_top =
      celldetail::edge_average(mesh, d, EdgeTag::BandTop) - spec.l_band;
  ctx.offset_bottom =
      celldetail::edge_average(mesh, d, EdgeTag::BandBottom) + spec.l_band;
  ctx.d_infinity = 0.5 * (ctx.offset_top - ctx.offset_bottom);

  const double shift = 0.5 * (ctx.offset_top + ctx.offset_bottom);
  for (auto& v : d.values) v -= shift;
  ctx.profile_d = d;

  ctx.profile_dtilde = Field(mesh);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double y = mesh.vertices[v].y;
    ctx.profile_dtilde[v] =
        d[v] - chi_pm(chi_profile, Sign::Plus, y) * (y + ctx.d_infinity) -
        chi_pm(chi_profile, Sign::Minus, y) * (y - ctx.d_infinity);
  }
  ctx.dtilde_decay =
      celldetail::tail_ratio(mesh, ctx.profile_dtilde.values, spec.l_band);
  if (ctx.dtilde_decay > 1e-6)
    throw solver_error("solve_band_context: D-tilde tail mass " +
                       std::to_string(ctx.dtilde_decay) +
                       " exceeds 1e-6 of the interior (L_band too small)");
  return ctx;
}

inline BandContext solve_profile_D(const BandSpec& spec) {
  return solve_band_context(spec, CutoffProfile{});
}

/// Pointwise <g_p> and [g_p] on the band (closed forms; support 1<|X2|<2).
inline std::pair<Field, Field> g_terms(int p, const CutoffProfile& chi_profile,
                                       const Mesh& mesh) {
  Field mean(mesh), jump(mesh);
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const double y = mesh.vertices[v].y;
    mean[v] = celldetail::mean_g(chi_profile, p, y);
    jump[v] = celldetail::jump_g(chi_profile, p, y);
  }
  return {mean, jump};
}

namespace celldetail {

struct WSolveResult {
  ProfileFunction profile;
  double d_const = 0.0;  // int F . D
  double n_const = 0.0;  // -int F . 1
  double compat = 0.0;
};

// One order of the recursion: assembles the load of F_p for the requested
// kind, evaluates the constants D_p = int F.D and N_p = -int F.1, adds the
// kernel corrections and solves the periodic Neumann band problem in the
// decay gauge (zero average end traces).
inline WSolveResult solve_profile_W(const BandContext& ctx, int p, ProfileKind kind,
                                    const std::vector<ProfileFunction>& previous,
                                    const std::vector<double>& d_consts,
                                    const std::vector<double>& n_consts) {
  const Mesh& mesh = ctx.mesh;
  const int n = mesh.vertex_count();
  const bool tangential = (kind == ProfileKind::Tangential);

  auto prof = [&](int idx) -> const std::vector<double>* {
    if (idx < 0 || idx >= static_cast<int>(previous.size())) return nullptr;
    if (!tangential && idx == 0) return nullptr;  // W_0^n = 0
    return &previous[idx].field.values;
  };

  Eigen::VectorXd load = Eigen::VectorXd::Zero(n);

  // 2 d_X1 W_{p-1} (element-wise constant).
  if (const auto* w1 = prof(p - 1)) {
    const auto dx1 = dx1_elementwise(mesh, *w1);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      const double w = 2.0 * dx1[t] * mesh.triangle_area(t) / 3.0;
      for (int k = 0; k < 3; ++k) load[tri[k]] += w;
    }
  }
  // W_{p-2} (P1 mass).
  if (const auto* w2 = prof(p - 2)) {
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      const double a = mesh.triangle_area(t) / 12.0;
      const double s = (*w2)[tri[0]] + (*w2)[tri[1]] + (*w2)[tri[2]];
      for (int i = 0; i < 3; ++i) load[tri[i]] += a * (s + (*w2)[tri[i]]);
    }
  }
  // Parity-selected (-1)^{floor(p/2)} * 2<g_p>.
  const bool has_gp = tangential ? (p % 2 == 0) : (p % 2 == 1);
  if (has_gp) {
    const double sign = ((p / 2) % 2 == 0) ? 1.0 : -1.0;
    load += sign * g_load(ctx, p, /*jump=*/false);
  }
  // Jump-weighted lower-order constants: sum over k = 2..p-1 of
  // (-1)^{floor(k/2)} [g_k]/2 * (D_{p-k} if k even, N_{p-k+1} if k odd).
  for (int k = 2; k <= p - 1; ++k) {
    const double sk = ((k / 2) % 2 == 0) ? 1.0 : -1.0;
    const double c =
        (k % 2 == 0) ? d_consts[p - k] : n_consts[p - k + 1];
    if (c != 0.0) load += sk * 0.5 * c * g_load(ctx, k, /*jump=*/true);
  }

  Eigen::Map<const Eigen::VectorXd> dvec(ctx.profile_d.values.data(), n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  WSolveResult out;
  out.d_const = load.dot(dvec);
  out.n_const = -load.dot(ones);

  // Kernel corrections alpha [g_0] + beta [g_1]; the discrete Gram of the
  // correction pair against {1, D} is exactly [[0, 2], [-2, 0]] by the
  // integration-by-parts structure, so alpha = D_p/2 and beta = N_p/2 up to
  // rounding. Solve the little system anyway to keep the residual at zero.
  const Eigen::VectorXd g0 = g_load(ctx, 0, true);
  const Eigen::VectorXd g1 = g_load(ctx, 1, true);
  const double a11 = g0.dot(ones), a12 = g1.dot(ones);
  const double a21 = g0.dot(dvec), a22 = g1.dot(dvec);
  const double b1 = -load.dot(ones), b2 = -load.dot(dvec);
  const double det = a11 * a22 - a12 * a21;
  if (std::abs(det) < 1e-6)
    throw solver_error("solve_profile_W: singular kernel-correction system");
  const double alpha = (b1 * a22 - b2 * a12) / det;
  const double beta = (a11 * b2 - a21 * b1) / det;
  load += alpha * g0 + beta * g1;

  // Residual of the corrected right-hand side against the kernel, scaled by a
  // lumped-mass L2 estimate of the rhs.
  {
    const auto lumped = load_from_function(mesh, [](Vec2) { return 1.0; });
    double l2sq = 0.0;
    for (int i = 0; i < n; ++i)
      if (lumped[i] > 0.0) l2sq += load[i] * load[i] / lumped[i];
    const double scale = std::max(std::sqrt(l2sq), 1e-30);
    out.compat =
        std::max(std::abs(load.dot(ones)), std::abs(load.dot(dvec))) / scale;
    if (out.compat > 1e-8)
      throw solver_error("solve_profile_W: compatibility residual " +
                         std::to_string(out.compat));
  }

  SparseSystem sys;
  sys.mesh = &mesh;
  sys.matrix = ctx.stiffness;
  sys.rhs = load;
  sys.constrained.assign(n, 0);
  apply_periodic(sys, mesh.periodic_pairs);
  const auto [wsum, wdiff] = end_trace_weights(mesh);
  Field w = solve_with_orthogonality(sys, {wsum, wdiff});

  out.profile.field = std::move(w);
  out.profile.p = p;
  out.profile.kind = kind;
  out.profile.decay_report = tail_ratio(mesh, out.profile.field.values, ctx.l_band);
  return out;
}

}  // namespace celldetail

struct CellSolution {
  BandContext band;
  TransmissionConstants constants;
  std::vector<ProfileFunction> profiles_t, profiles_n;  // index = order p
};

/// Runs the recursion p = 0..P for both profile kinds and collects the
/// transmission constants (the pipeline consumes P = 2).
inline CellSolution transmission_constants(const PeriodicityCell& cell,
                                           const CutoffProfile& chi_profile,
                                           double l_band, double h, int max_order) {
  if (max_order < 2) throw config_error("transmission_constants: P >= 2 required");
  if (max_order > 4)
    throw config_error("transmission_constants: orders beyond 4 are not supported");
  BandSpec spec;
  spec.cell = cell;
  spec.l_band = l_band;
  spec.h = h;

  CellSolution sol;
  sol.band = solve_band_context(spec, chi_profile);

  TransmissionConstants& tc = sol.constants;
  tc.d_infinity = sol.band.d_infinity;
  tc.max_order = max_order;
  tc.d_t.assign(max_order + 1, 0.0);
  tc.d_n.assign(max_order + 1, 0.0);
  tc.n_t.assign(max_order + 1, 0.0);
  tc.n_n.assign(max_order + 1, 0.0);
  tc.diagnostics.chi_kind = chi_profile.kind;
  tc.diagnostics.l_band = l_band;
  tc.diagnostics.h = h;
  tc.diagnostics.offset_top = sol.band.offset_top;
  tc.diagnostics.offset_bottom = sol.band.offset_bottom;

  for (int p = 0; p <= max_order; ++p) {
    auto rt = celldetail::solve_profile_W(sol.band, p, ProfileKind::Tangential,
                                          sol.profiles_t, tc.d_t, tc.n_t);
    tc.d_t[p] = rt.d_const;
    tc.n_t[p] = rt.n_const;
    tc.diagnostics.compatibility.push_back(rt.compat);
    tc.diagnostics.decay.push_back(rt.profile.decay_report);
    sol.profiles_t.push_back(std::move(rt.profile));

    if (p == 0) {
      ProfileFunction zero;  // W_0^n vanishes identically
      zero.field = Field(sol.band.mesh);
      zero.kind = ProfileKind::Normal;
      sol.profiles_n.push_back(std::move(zero));
      continue;
    }
    auto rn = celldetail::solve_profile_W(sol.band, p, ProfileKind::Normal,
                                          sol.profiles_n, tc.d_n, tc.n_n);
    tc.d_n[p] = rn.d_const;
    tc.n_n[p] = rn.n_const;
    tc.diagnostics.compatibility.push_back(rn.compat);
    tc.diagnostics.decay.push_back(rn.profile.decay_report);
    sol.profiles_n.push_back(std::move(rn.profile));
  }
  return sol;
}

}  // namespace perilayer
