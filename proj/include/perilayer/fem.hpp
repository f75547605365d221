#pragma once

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <functional>
#include <optional>

#include "perilayer/mesh.hpp"

namespace perilayer {

struct Field {
  const Mesh* mesh = nullptr;
  std::vector<double> values;

  Field() = default;
  explicit Field(const Mesh& m) : mesh(&m), values(m.vertex_count(), 0.0) {}
  Field(const Mesh& m, std::vector<double> v) : mesh(&m), values(std::move(v)) {}

  double operator[](int i) const { return values[i]; }
  double& operator[](int i) { return values[i]; }
};

enum class LoadQuadrature { Degree2, Degree4 };

namespace femdetail {

struct QuadRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weights;  // sum to 1
};

inline const QuadRule& quad_rule(LoadQuadrature q) {
  static const QuadRule deg2{
      {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}},
      {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  static const QuadRule deg4{
      {{0.816847572980459, 0.091576213509771, 0.091576213509771},
       {0.091576213509771, 0.816847572980459, 0.091576213509771},
       {0.091576213509771, 0.091576213509771, 0.816847572980459},
       {0.108103018168070, 0.445948490915965, 0.445948490915965},
       {0.445948490915965, 0.108103018168070, 0.445948490915965},
       {0.445948490915965, 0.445948490915965, 0.108103018168070}},
      {0.109951743655322, 0.109951743655322, 0.109951743655322,
       0.223381589678011, 0.223381589678011, 0.223381589678011}};
  return q == LoadQuadrature::Degree2 ? deg2 : deg4;
}

// Gradients of the three P1 hats on a triangle and its area.
inline double p1_gradients(const Mesh& mesh, int t, std::array<Vec2, 3>& grad) {
  const auto& tri = mesh.triangles[t];
  const Vec2 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]],
             c = mesh.vertices[tri[2]];
  const double det = cross(b - a, c - a);
  grad[0] = {(b.y - c.y) / det, (c.x - b.x) / det};
  grad[1] = {(c.y - a.y) / det, (a.x - c.x) / det};
  grad[2] = {(a.y - b.y) / det, (b.x - a.x) / det};
  return 0.5 * det;
}

}  // namespace femdetail

// ---------------------------------------------------------------------------
// Assembly-level helpers (also used by the quadrature-heavy cell module).

inline std::vector<double> load_from_function(
    const Mesh& mesh, const std::function<double(Vec2)>& f,
    LoadQuadrature quad = LoadQuadrature::Degree2) {
  const auto& rule = femdetail::quad_rule(quad);
  std::vector<double> rhs(mesh.vertex_count(), 0.0);
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    for (size_t q = 0; q < rule.bary.size(); ++q) {
      const auto& bc = rule.bary[q];
      const Vec2 p = bc[0] * mesh.vertices[tri[0]] + bc[1] * mesh.vertices[tri[1]] +
                     bc[2] * mesh.vertices[tri[2]];
      const double fw = f(p) * rule.weights[q] * area;
      for (int k = 0; k < 3; ++k) rhs[tri[k]] += fw * bc[k];
    }
  }
  return rhs;
}

/// Integral of f * u_h with f evaluated analytically at quadrature points.
inline double ip_function_p1(const Mesh& mesh, const std::function<double(Vec2)>& f,
                             const std::vector<double>& u,
                             LoadQuadrature quad = LoadQuadrature::Degree4) {
  const auto& rule = femdetail::quad_rule(quad);
  double s = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    for (size_t q = 0; q < rule.bary.size(); ++q) {
      const auto& bc = rule.bary[q];
      const Vec2 p = bc[0] * mesh.vertices[tri[0]] + bc[1] * mesh.vertices[tri[1]] +
                     bc[2] * mesh.vertices[tri[2]];
      const double uh = bc[0] * u[tri[0]] + bc[1] * u[tri[1]] + bc[2] * u[tri[2]];
      s += f(p) * uh * rule.weights[q] * area;
    }
  }
  return s;
}

inline double ip_mass(const Mesh& mesh, const std::vector<double>& u,
                      const std::vector<double>& v) {
  double s = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    const double a = mesh.triangle_area(t) / 12.0;
    const double us = u[tri[0]] + u[tri[1]] + u[tri[2]];
    const double vs = v[tri[0]] + v[tri[1]] + v[tri[2]];
    s += a * (us * vs + u[tri[0]] * v[tri[0]] + u[tri[1]] * v[tri[1]] +
              u[tri[2]] * v[tri[2]]);
  }
  return s;
}

inline double integral_p1(const Mesh& mesh, const std::vector<double>& u) {
  double s = 0.0;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    s += mesh.triangle_area(t) * (u[tri[0]] + u[tri[1]] + u[tri[2]]) / 3.0;
  }
  return s;
}

inline double stiffness_energy(const Mesh& mesh, const std::vector<double>& u) {
  double s = 0.0;
  std::array<Vec2, 3> g;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const double area = femdetail::p1_gradients(mesh, t, g);
    const auto& tri = mesh.triangles[t];
    const Vec2 gu = u[tri[0]] * g[0] + u[tri[1]] * g[1] + u[tri[2]] * g[2];
    s += area * dot(gu, gu);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Linear system with affine constraint elimination (kept SPD throughout).

struct SparseSystem {
  const Mesh* mesh = nullptr;
  Eigen::SparseMatrix<double> matrix;  // full-size symmetric stiffness
  Eigen::VectorXd rhs;

  struct Constraint {
    int dof = -1;
    std::vector<std::pair<int, double>> terms;  // masters and coefficients
    double offset = 0.0;
  };
  std::vector<Constraint> constraints;  // the constraint log
  std::vector<char> constrained;        // per-dof flag

  int size() const { return static_cast<int>(rhs.size()); }

  bool is_constrained(int dof) const { return constrained[dof] != 0; }

  void add_constraint(Constraint c) {
    if (constrained[c.dof])
      throw solver_error("constraint conflict on dof " + std::to_string(c.dof));
    constrained[c.dof] = 1;
    constraints.push_back(std::move(c));
  }
};

inline SparseSystem assemble(const Mesh& mesh,
                             const std::function<double(Vec2)>* source = nullptr,
                             LoadQuadrature quad = LoadQuadrature::Degree2) {
  SparseSystem sys;
  sys.mesh = &mesh;
  const int n = mesh.vertex_count();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(9 * mesh.triangle_count());
  std::array<Vec2, 3> g;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const double area = femdetail::p1_gradients(mesh, t, g);
    if (!(area > 0.0)) throw solver_error("assemble: degenerate triangle");
    const auto& tri = mesh.triangles[t];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        trips.emplace_back(tri[i], tri[j], area * dot(g[i], g[j]));
  }
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  if (source) {
    const auto l = load_from_function(mesh, *source, quad);
    sys.rhs = Eigen::Map<const Eigen::VectorXd>(l.data(), n);
  } else {
    sys.rhs = Eigen::VectorXd::Zero(n);
  }
  sys.constrained.assign(n, 0);
  return sys;
}

inline std::set<int> nodes_with_tag(const Mesh& mesh, EdgeTag tag) {
  std::set<int> nodes;
  for (auto& [e, t] : mesh.edge_tags)
    if (t == tag) {
      nodes.insert(e.first);
      nodes.insert(e.second);
    }
  return nodes;
}

inline void apply_dirichlet(SparseSystem& sys, EdgeTag tag,
                            const std::function<double(Vec2)>& value) {
  const auto nodes = nodes_with_tag(*sys.mesh, tag);
  if (nodes.empty()) throw config_error("apply_dirichlet: no edges carry the tag");
  for (int v : nodes) {
    if (sys.is_constrained(v)) continue;
    sys.add_constraint({v, {}, value(sys.mesh->vertices[v])});
  }
}

inline void apply_dirichlet_zero(SparseSystem& sys, EdgeTag tag) {
  apply_dirichlet(sys, tag, [](Vec2) { return 0.0; });
}

inline void apply_periodic(SparseSystem& sys,
                           const std::vector<std::pair<int, int>>& pairs) {
  for (auto& [left, right] : pairs) {
    if (sys.is_constrained(left)) {
      if (sys.is_constrained(right)) continue;
      throw solver_error("apply_periodic: inconsistent constraint pattern");
    }
    sys.add_constraint({left, {{right, 1.0}}, 0.0});
  }
}

/// Imposes [u] = u_top - u_bottom = g strongly (slave elimination of the top
/// copies) and [d_{x2} u] = h weakly as an interface load on the retained
/// trace basis. Pairs where the top copy is already constrained (corner
/// Dirichlet nodes) keep their existing constraint.
inline void apply_interface_jump(SparseSystem& sys,
                                 const std::function<double(double)>& g,
                                 const std::function<double(double)>& h) {
  const Mesh& mesh = *sys.mesh;
  if (mesh.interface_pairs.empty())
    throw config_error("apply_interface_jump: mesh has no doubled interface");
  for (auto& [top, bottom] : mesh.interface_pairs) {
    if (sys.is_constrained(top)) continue;
    const double jump = g(mesh.vertices[top].x);
    if (!std::isfinite(jump))
      throw solver_error("apply_interface_jump: non-finite jump data");
    sys.add_constraint({top, {{bottom, 1.0}}, jump});
  }
  // Weak normal-trace jump: rhs -= int_Gamma h * phi on the bottom copies.
  for (auto& [e, tag] : mesh.edge_tags) {
    if (tag != EdgeTag::InterfaceBottom) continue;
    const Vec2 a = mesh.vertices[e.first], b = mesh.vertices[e.second];
    const double len = norm(b - a);
    // 2-point Gauss on the segment.
    const double q1 = 0.5 - 0.5 / std::sqrt(3.0), q2 = 0.5 + 0.5 / std::sqrt(3.0);
    for (double q : {q1, q2}) {
      const double x = a.x + (b.x - a.x) * q;
      const double hv = h(x);
      if (!std::isfinite(hv))
        throw solver_error("apply_interface_jump: non-finite normal jump data");
      sys.rhs[e.first] -= 0.5 * len * hv * (1.0 - q);
      sys.rhs[e.second] -= 0.5 * len * hv * q;
    }
  }
}

struct SolveReport {
  int reduced_dofs = 0;
  int iterations = 0;   // 0 for the direct path
  double residual = 0.0;
};

namespace femdetail {

struct Reduction {
  Eigen::SparseMatrix<double> R;  // full x reduced
  Eigen::VectorXd c;              // affine offsets
  std::vector<int> free_index;    // full dof -> reduced index or -1
};

inline Reduction build_reduction(const SparseSystem& sys) {
  const int n = sys.size();
  Reduction red;
  red.free_index.assign(n, -1);
  int m = 0;
  for (int i = 0; i < n; ++i)
    if (!sys.constrained[i]) red.free_index[i] = m++;

  // Resolve constraint chains onto free dofs.
  std::vector<const SparseSystem::Constraint*> by_dof(n, nullptr);
  for (const auto& c : sys.constraints) by_dof[c.dof] = &c;
  std::vector<Eigen::Triplet<double>> trips;
  red.c = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (red.free_index[i] >= 0) {
      trips.emplace_back(i, red.free_index[i], 1.0);
      continue;
    }
    std::map<int, double> expanded;
    double offset = 0.0;
    std::vector<std::pair<int, double>> stack{{i, 1.0}};
    int guard = 0;
    while (!stack.empty()) {
      if (++guard > 1000) throw solver_error("constraint chain too deep or cyclic");
      auto [dof, w] = stack.back();
      stack.pop_back();
      if (red.free_index[dof] >= 0) {
        expanded[dof] += w;
        continue;
      }
      const auto* c = by_dof[dof];
      offset += w * c->offset;
      for (auto& [mdof, coef] : c->terms) stack.emplace_back(mdof, w * coef);
    }
    red.c[i] = offset;
    for (auto& [dof, w] : expanded) trips.emplace_back(i, red.free_index[dof], w);
  }
  red.R.resize(n, m);
  red.R.setFromTriplets(trips.begin(), trips.end());
  return red;
}

}  // namespace femdetail

/// Direct sparse Cholesky for moderate sizes, preconditioned CG beyond;
/// relative residual checked against 1e-10.
inline Field solve(const SparseSystem& sys, SolveReport* report = nullptr) {
  const auto red = femdetail::build_reduction(sys);
  const Eigen::SparseMatrix<double> Ar =
      red.R.transpose() * sys.matrix * red.R;
  const Eigen::VectorXd br = red.R.transpose() * (sys.rhs - sys.matrix * red.c);

  Eigen::VectorXd ur;
  SolveReport rep;
  rep.reduced_dofs = static_cast<int>(Ar.rows());
  if (Ar.rows() <= 200000) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(Ar);
    if (chol.info() != Eigen::Success)
      throw solver_error("solve: Cholesky factorization failed (system not SPD?)");
    ur = chol.solve(br);
  } else {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                             Eigen::Lower | Eigen::Upper,
                             Eigen::IncompleteCholesky<double>>
        cg;
    cg.setTolerance(1e-12);
    cg.setMaxIterations(100000);
    cg.compute(Ar);
    ur = cg.solve(br);
    rep.iterations = static_cast<int>(cg.iterations());
    if (cg.info() != Eigen::Success)
      throw solver_error("solve: CG stagnated after " +
                         std::to_string(cg.iterations()) +
                         " iterations, residual " + std::to_string(cg.error()));
  }

  const double bn = br.norm();
  rep.residual = bn > 0.0 ? (Ar * ur - br).norm() / bn : 0.0;
  if (rep.residual > 1e-10)
    throw solver_error("solve: residual " + std::to_string(rep.residual) +
                       " exceeds tolerance");
  if (report) *report = rep;

  const Eigen::VectorXd u = red.R * ur + red.c;
  Field out(*sys.mesh);
  for (int i = 0; i < sys.size(); ++i) out.values[i] = u[i];
  return out;
}

/// Solves the singular Neumann-type system augmented with scalar multipliers
/// enforcing weights[k] . u = 0 (kernel orthogonality).
inline Field solve_with_orthogonality(const SparseSystem& sys,
                                      const std::vector<std::vector<double>>& weights,
                                      SolveReport* report = nullptr) {
  const auto red = femdetail::build_reduction(sys);
  const Eigen::SparseMatrix<double> Ar =
      red.R.transpose() * sys.matrix * red.R;
  const Eigen::VectorXd br = red.R.transpose() * (sys.rhs - sys.matrix * red.c);
  const int m = static_cast<int>(Ar.rows());
  const int k = static_cast<int>(weights.size());

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(Ar.nonZeros() + 2 * k * m);
  for (int col = 0; col < Ar.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(Ar, col); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), col, it.value());
  Eigen::VectorXd baug = Eigen::VectorXd::Zero(m + k);
  baug.head(m) = br;
  for (int w = 0; w < k; ++w) {
    Eigen::Map<const Eigen::VectorXd> wf(weights[w].data(), sys.size());
    const Eigen::VectorXd wr = red.R.transpose() * wf;
    for (int i = 0; i < m; ++i)
      if (wr[i] != 0.0) {
        trips.emplace_back(i, m + w, wr[i]);
        trips.emplace_back(m + w, i, wr[i]);
      }
    baug[m + w] = -wf.dot(red.c);
  }
  Eigen::SparseMatrix<double> Aaug(m + k, m + k);
  Aaug.setFromTriplets(trips.begin(), trips.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(Aaug);
  if (lu.info() != Eigen::Success)
    throw solver_error("solve_with_orthogonality: LU factorization failed");
  const Eigen::VectorXd sol = lu.solve(baug);

  SolveReport rep;
  rep.reduced_dofs = m;
  const double bn = baug.norm();
  rep.residual = bn > 0 ? (Aaug * sol - baug).norm() / bn : 0.0;
  if (rep.residual > 1e-9)
    throw solver_error("solve_with_orthogonality: residual too large");
  if (report) *report = rep;

  const Eigen::VectorXd u = red.R * sol.head(m) + red.c;
  Field out(*sys.mesh);
  for (int i = 0; i < sys.size(); ++i) out.values[i] = u[i];
  return out;
}

// ---------------------------------------------------------------------------
// Norms and traces.

struct SubdomainNorms {
  double l2 = 0.0;
  double h1_semi = 0.0;
  double h1 = 0.0;
};

inline SubdomainNorms subdomain_norms(const Field& field,
                                      const std::function<bool(Vec2)>& region) {
  const Mesh& mesh = *field.mesh;
  double l2sq = 0.0, semisq = 0.0;
  bool any = false;
  std::array<Vec2, 3> g;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    if (!region(mesh.barycenter(t))) continue;
    any = true;
    const auto& tri = mesh.triangles[t];
    const double area = femdetail::p1_gradients(mesh, t, g);
    const double u0 = field[tri[0]], u1 = field[tri[1]], u2 = field[tri[2]];
    const double us = u0 + u1 + u2;
    l2sq += area / 12.0 * (us * us + u0 * u0 + u1 * u1 + u2 * u2);
    const Vec2 gu = u0 * g[0] + u1 * g[1] + u2 * g[2];
    semisq += area * dot(gu, gu);
  }
  if (!any) throw config_error("subdomain_norms: empty region");
  SubdomainNorms out;
  out.l2 = std::sqrt(l2sq);
  out.h1_semi = std::sqrt(semisq);
  out.h1 = std::sqrt(l2sq + semisq);
  return out;
}

enum class GammaSide { Top, Bottom };

namespace femdetail {

// Interface nodes of one side ordered by x.
inline std::vector<int> gamma_nodes(const Mesh& mesh, GammaSide side) {
  std::vector<int> nodes;
  for (auto& [t, b] : mesh.interface_pairs)
    nodes.push_back(side == GammaSide::Top ? t : b);
  std::sort(nodes.begin(), nodes.end(), [&](int a, int b) {
    return mesh.vertices[a].x < mesh.vertices[b].x;
  });
  return nodes;
}

}  // namespace femdetail

inline std::vector<double> trace_on_gamma(const Field& field, GammaSide side,
                                          const std::vector<double>& sample_x) {
  const Mesh& mesh = *field.mesh;
  const auto nodes = femdetail::gamma_nodes(mesh, side);
  if (nodes.size() < 2) throw config_error("trace_on_gamma: no doubled interface");
  std::vector<double> xs(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) xs[i] = mesh.vertices[nodes[i]].x;
  std::vector<double> out;
  out.reserve(sample_x.size());
  for (double x : sample_x) {
    if (x < xs.front() - 1e-12 || x > xs.back() + 1e-12)
      throw config_error("trace_on_gamma: sample outside Gamma");
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    size_t hi = std::min<size_t>(xs.size() - 1, it - xs.begin());
    size_t lo = hi == 0 ? 0 : hi - 1;
    const double w = (xs[hi] > xs[lo])
                         ? std::clamp((x - xs[lo]) / (xs[hi] - xs[lo]), 0.0, 1.0)
                         : 0.0;
    out.push_back((1.0 - w) * field[nodes[lo]] + w * field[nodes[hi]]);
  }
  return out;
}

/// Normal derivative on Gamma by element-patch recovery: linear least-squares
/// fit of the piecewise-constant d_y u over the triangles touching the two
/// bracketing interface nodes, evaluated at (x, 0).
inline std::vector<double> trace_normal_derivative(const Field& field, GammaSide side,
                                                   const std::vector<double>& sample_x) {
  const Mesh& mesh = *field.mesh;
  const auto nodes = femdetail::gamma_nodes(mesh, side);
  if (nodes.size() < 2)
    throw config_error("trace_normal_derivative: no doubled interface");
  std::vector<double> xs(nodes.size());
  for (size_t i = 0; i < nodes.size(); ++i) xs[i] = mesh.vertices[nodes[i]].x;

  // vertex -> incident triangles (side-correct automatically: top copies only
  // appear in top triangles).
  std::vector<std::vector<int>> star(mesh.vertex_count());
  for (int t = 0; t < mesh.triangle_count(); ++t)
    for (int v : mesh.triangles[t]) star[v].push_back(t);

  std::array<Vec2, 3> g;
  std::vector<double> out;
  out.reserve(sample_x.size());
  for (double x : sample_x) {
    if (x < xs.front() - 1e-12 || x > xs.back() + 1e-12)
      throw config_error("trace_normal_derivative: sample outside Gamma");
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    size_t hi = std::min<size_t>(xs.size() - 1, it - xs.begin());
    size_t lo = hi == 0 ? 0 : hi - 1;

    std::set<int> patch;
    for (size_t n : {lo, hi, lo > 0 ? lo - 1 : lo,
                     hi + 1 < nodes.size() ? hi + 1 : hi})
      for (int t : star[nodes[n]]) patch.insert(t);
    // One more ring so the linear fit sees two element rows in depth.
    std::set<int> grown = patch;
    for (int t : patch)
      for (int v : mesh.triangles[t])
        for (int t2 : star[v]) grown.insert(t2);
    patch.swap(grown);

    // Weighted LSQ fit  dyu ~ c0 + c1 x + c2 y  over patch barycenters.
    Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
    Eigen::Vector3d r = Eigen::Vector3d::Zero();
    double wsum = 0.0, mean = 0.0;
    for (int t : patch) {
      const double area = femdetail::p1_gradients(mesh, t, g);
      const auto& tri = mesh.triangles[t];
      const double dyu =
          field[tri[0]] * g[0].y + field[tri[1]] * g[1].y + field[tri[2]] * g[2].y;
      const Vec2 c = mesh.barycenter(t);
      const Eigen::Vector3d row(1.0, c.x - x, c.y);
      M += area * row * row.transpose();
      r += area * dyu * row;
      wsum += area;
      mean += area * dyu;
    }
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(M);
    const double fitted = lu.isInvertible() ? lu.solve(r)[0] : mean / wsum;
    out.push_back(std::isfinite(fitted) ? fitted : mean / wsum);
  }
  return out;
}

}  // namespace perilayer
