#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "perilayer/geometry.hpp"

namespace perilayer {

enum class EdgeTag {
  Dirichlet,
  Hole,
  PeriodicLeft,
  PeriodicRight,
  BandTop,
  BandBottom,
  InterfaceTop,
  InterfaceBottom,
  OuterArc,
};

inline const char* edge_tag_name(EdgeTag t) {
  switch (t) {
    case EdgeTag::Dirichlet: return "dirichlet";
    case EdgeTag::Hole: return "hole";
    case EdgeTag::PeriodicLeft: return "periodic_left";
    case EdgeTag::PeriodicRight: return "periodic_right";
    case EdgeTag::BandTop: return "band_top";
    case EdgeTag::BandBottom: return "band_bottom";
    case EdgeTag::InterfaceTop: return "interface_top";
    case EdgeTag::InterfaceBottom: return "interface_bottom";
    case EdgeTag::OuterArc: return "outer_arc";
  }
  return "?";
}

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counter-clockwise
  std::map<std::pair<int, int>, EdgeTag> edge_tags;  // key: sorted vertex pair
  std::vector<std::pair<int, int>> periodic_pairs;   // (left node, right node)
  std::vector<std::pair<int, int>> interface_pairs;  // (top node, bottom node)
  std::vector<int> corner_nodes;                     // duplicated Gamma endpoints
  double h_target = 0.0;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }

  double triangle_area(int t) const {
    const auto& tri = triangles[t];
    return 0.5 * cross(vertices[tri[1]] - vertices[tri[0]],
                       vertices[tri[2]] - vertices[tri[0]]);
  }

  Vec2 barycenter(int t) const {
    const auto& tri = triangles[t];
    return (1.0 / 3.0) *
           (vertices[tri[0]] + vertices[tri[1]] + vertices[tri[2]]);
  }

  // inradius / circumradius, in (0, 1/2]; equilateral = 1/2.
  double triangle_quality(int t) const {
    const auto& tri = triangles[t];
    const double a = norm(vertices[tri[1]] - vertices[tri[0]]);
    const double b = norm(vertices[tri[2]] - vertices[tri[1]]);
    const double c = norm(vertices[tri[0]] - vertices[tri[2]]);
    const double area = std::abs(triangle_area(t));
    const double p = a + b + c;
    if (area <= 0.0 || p <= 0.0) return 0.0;
    return 8.0 * area * area / (p * a * b * c);
  }
};

struct BandSpec {
  PeriodicityCell cell;
  double l_band = 8.0;  // truncation half-height
  double h = 1.0 / 64;

  void validate() const {
    cell.validate();
    if (!(l_band >= 4.0)) throw config_error("band: L_band must be >= 4");
    if (!(h > 0.0) || h > 0.5) throw config_error("band: invalid mesh size");
  }
};

struct SectorSpec {
  Corner corner = Corner::Plus;
  double r_max = 16.0;
  PeriodicityCell cell;
  double h_near = 1.0 / 8;
  double h_far = 0.5;

  void validate() const {
    cell.validate();
    if (!(r_max >= 8.0)) throw config_error("sector: R_max must be >= 8");
    if (!(h_near > 0.0) || !(h_far >= h_near))
      throw config_error("sector: need 0 < h_near <= h_far");
  }
};

namespace meshdetail {

// --- tick helpers -----------------------------------------------------------

inline std::vector<double> uniform_ticks(double a, double b, double h) {
  const int n = std::max(1, static_cast<int>(std::lround((b - a) / h)));
  std::vector<double> t(n + 1);
  for (int i = 0; i <= n; ++i) t[i] = a + (b - a) * i / n;
  return t;
}

// Spacing starts at ha next to `a` and grows geometrically, capped at hmax.
// The final tick lands exactly on b (positions rescaled).
inline std::vector<double> graded_ticks(double a, double b, double ha, double hmax,
                                        double growth = 1.2) {
  const double len = std::abs(b - a);
  const double dir = b > a ? 1.0 : -1.0;
  std::vector<double> offs{0.0};
  double h = ha, pos = 0.0;
  while (pos < len - 1e-12) {
    pos = std::min(len, pos + h);
    offs.push_back(pos);
    h = std::min(h * growth, hmax);
  }
  const double scale = len / offs.back();
  std::vector<double> t(offs.size());
  for (size_t i = 0; i < offs.size(); ++i) t[i] = a + dir * offs[i] * scale;
  t.back() = b;
  return t;
}

inline void append_ticks(std::vector<double>& dst, const std::vector<double>& src) {
  for (double v : src) {
    if (!dst.empty() && std::abs(v - dst.back()) < 1e-13) continue;
    dst.push_back(v);
  }
}

// --- grid builder with hole carving ----------------------------------------

// Hole boundary as a counter-clockwise polyline, star-shaped about `center`
// (circles and convex polygons; the stitch guard rejects anything worse).
struct HoleOutline {
  Vec2 center;
  std::vector<Vec2> ring;
  double reach = 0.0;  // max distance center -> ring

  static HoleOutline disk(Vec2 c, double r, int n_seg) {
    HoleOutline h;
    h.center = c;
    h.reach = r;
    h.ring.resize(n_seg);
    for (int k = 0; k < n_seg; ++k) {
      const double a = 2.0 * pi * k / n_seg;
      h.ring[k] = {c.x + r * std::cos(a), c.y + r * std::sin(a)};
    }
    return h;
  }

  // Subdivides polygon edges to spacing <= h/2 so the proximity tests on the
  // sampled boundary stay sharp relative to the clearing margin.
  static HoleOutline polygon(const std::vector<Vec2>& verts, double h) {
    HoleOutline out;
    double area2 = 0.0;
    Vec2 c{0.0, 0.0};
    const size_t n = verts.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2 a = verts[i], b = verts[(i + 1) % n];
      const double w = cross(a, b);
      area2 += w;
      c = c + w * (a + b);
    }
    if (std::abs(area2) < 1e-14)
      throw geometry_error("mesh: degenerate polygon hole");
    out.center = (1.0 / (3.0 * area2)) * c;  // shoelace centroid
    std::vector<Vec2> ordered = verts;
    if (area2 < 0.0) std::reverse(ordered.begin(), ordered.end());
    for (size_t i = 0; i < n; ++i) {
      const Vec2 a = ordered[i], b = ordered[(i + 1) % n];
      const int segs = std::max(1, static_cast<int>(std::ceil(norm(b - a) / (0.5 * h))));
      for (int k = 0; k < segs; ++k)
        out.ring.push_back(a + (static_cast<double>(k) / segs) * (b - a));
    }
    for (const Vec2& p : out.ring)
      out.reach = std::max(out.reach, norm(p - out.center));
    return out;
  }

  HoleOutline transformed(double scale, Vec2 shift) const {
    HoleOutline out;
    out.center = scale * center + shift;
    out.reach = scale * reach;
    out.ring.resize(ring.size());
    for (size_t i = 0; i < ring.size(); ++i) out.ring[i] = scale * ring[i] + shift;
    return out;
  }

  bool contains(Vec2 p) const {  // winding test on the sampled ring
    bool inside = false;
    const size_t n = ring.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
      if ((ring[i].y > p.y) != (ring[j].y > p.y) &&
          p.x < (ring[j].x - ring[i].x) * (p.y - ring[i].y) /
                        (ring[j].y - ring[i].y) +
                    ring[i].x)
        inside = !inside;
    }
    return inside;
  }
};

// Outline for any admissible HoleShape, meshed at resolution h.
inline HoleOutline hole_outline(const HoleShape& hole, double h, int min_segments = 16) {
  if (const auto* d = std::get_if<DiskHole>(&hole)) {
    const int n = std::max(min_segments,
                           static_cast<int>(std::lround(2.0 * pi * d->radius / h)));
    return HoleOutline::disk(d->center, d->radius, n);
  }
  if (const auto* p = std::get_if<PolygonHole>(&hole))
    return HoleOutline::polygon(p->vertices, h);
  throw config_error("hole_outline: empty hole has no outline");
}

struct GridMesher {
  std::vector<double> xs, ys;
  std::vector<char> keep;  // quad (i,j) kept
  std::vector<int> vid;    // grid vertex -> mesh vertex id (-1 unused)
  Mesh mesh;

  int nx() const { return static_cast<int>(xs.size()) - 1; }
  int ny() const { return static_cast<int>(ys.size()) - 1; }
  size_t qidx(int i, int j) const { return static_cast<size_t>(j) * nx() + i; }
  size_t gidx(int i, int j) const {
    return static_cast<size_t>(j) * (nx() + 1) + i;
  }

  void init(std::vector<double> xticks, std::vector<double> yticks) {
    xs = std::move(xticks);
    ys = std::move(yticks);
    keep.assign(static_cast<size_t>(nx()) * ny(), 1);
    vid.assign(static_cast<size_t>(nx() + 1) * (ny() + 1), -1);
  }

  template <typename Pred>
  void restrict_domain(Pred inside_quad) {
    for (int j = 0; j < ny(); ++j)
      for (int i = 0; i < nx(); ++i)
        if (keep[qidx(i, j)] && !inside_quad(xs[i], xs[i + 1], ys[j], ys[j + 1]))
          keep[qidx(i, j)] = 0;
  }

  int vertex(int i, int j) {
    auto& v = vid[gidx(i, j)];
    if (v < 0) {
      v = mesh.vertex_count();
      mesh.vertices.push_back({xs[i], ys[j]});
    }
    return v;
  }

  static double rect_distance(Vec2 p, double x0, double x1, double y0, double y1) {
    const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
    const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
    return std::hypot(dx, dy);
  }

  double local_h(int i, int j) const {
    return std::max(xs[i + 1] - xs[i], ys[j + 1] - ys[j]);
  }

  // Removes quads near the hole outline and returns the boundary loop of the
  // cavity (mesh vertex ids, counter-clockwise around the outline center).
  // margin_cap limits the clearing distance beyond the boundary so that
  // nearby cavities stay disjoint.
  std::vector<int> carve_cavity(const HoleOutline& hole, double margin_cap) {
    if (!(margin_cap > 0.0))
      throw geometry_error("mesh: hole too large for its surrounding region");
    std::vector<std::pair<int, int>> removed;
    for (int j = 0; j < ny(); ++j)
      for (int i = 0; i < nx(); ++i) {
        if (!keep[qidx(i, j)]) continue;
        const double margin = std::min(0.75 * local_h(i, j), margin_cap);
        if (rect_distance(hole.center, xs[i], xs[i + 1], ys[j], ys[j + 1]) >
            hole.reach + margin)
          continue;
        bool close = hole.contains(
            {0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])});
        for (size_t k = 0; !close && k < hole.ring.size(); ++k)
          close = rect_distance(hole.ring[k], xs[i], xs[i + 1], ys[j], ys[j + 1]) <
                  margin;
        if (close) {
          keep[qidx(i, j)] = 0;
          removed.emplace_back(i, j);
        }
      }
    if (removed.empty())
      throw geometry_error("mesh: hole does not overlap the grid");

    // Boundary edges of the removed region; every neighbor across such an
    // edge must be a kept quad, otherwise the hole touches the boundary.
    std::set<std::pair<int, int>> marked(removed.begin(), removed.end());
    auto neighbor_state = [&](int i, int j) {
      if (marked.count({i, j})) return 0;  // interior to the cavity
      if (i < 0 || j < 0 || i >= nx() || j >= ny() || !keep[qidx(i, j)]) return 2;
      return 1;  // kept quad
    };
    std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> adj;
    auto add_edge = [&](std::pair<int, int> a, std::pair<int, int> b) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    };
    for (auto [i, j] : removed) {
      const std::array<std::tuple<int, int, std::pair<int, int>, std::pair<int, int>>, 4>
          sides{{{i - 1, j, {i, j}, {i, j + 1}},
                 {i + 1, j, {i + 1, j}, {i + 1, j + 1}},
                 {i, j - 1, {i, j}, {i + 1, j}},
                 {i, j + 1, {i, j + 1}, {i + 1, j + 1}}}};
      for (const auto& [ni, nj, va, vb] : sides) {
        const int st = neighbor_state(ni, nj);
        if (st == 2)
          throw geometry_error("mesh: hole cavity touches the domain boundary");
        if (st == 1) add_edge(va, vb);
      }
    }
    if (adj.empty()) throw geometry_error("mesh: hole cavity has no boundary");
    for (auto& [k, nb] : adj)
      if (nb.size() != 2)
        throw geometry_error("mesh: hole cavity boundary is not a simple loop");

    // Walk the loop.
    std::vector<std::pair<int, int>> loop;
    auto start = adj.begin()->first;
    auto prev = start, cur = adj[start][0];
    loop.push_back(start);
    while (cur != start) {
      loop.push_back(cur);
      auto& nb = adj[cur];
      auto next = (nb[0] == prev) ? nb[1] : nb[0];
      prev = cur;
      cur = next;
    }

    // Orient counter-clockwise around the hole center.
    double area2 = 0.0;
    for (size_t k = 0; k < loop.size(); ++k) {
      const auto& a = loop[k];
      const auto& b = loop[(k + 1) % loop.size()];
      area2 += cross(Vec2{xs[a.first], ys[a.second]} - hole.center,
                     Vec2{xs[b.first], ys[b.second]} - hole.center);
    }
    if (area2 < 0.0) std::reverse(loop.begin(), loop.end());

    std::vector<int> ids;
    ids.reserve(loop.size());
    for (auto [i, j] : loop) ids.push_back(vertex(i, j));
    return ids;
  }

  // Triangulates kept quads (alternating diagonals).
  void triangulate_grid() {
    for (int j = 0; j < ny(); ++j)
      for (int i = 0; i < nx(); ++i) {
        if (!keep[qidx(i, j)]) continue;
        const int v00 = vertex(i, j), v10 = vertex(i + 1, j);
        const int v01 = vertex(i, j + 1), v11 = vertex(i + 1, j + 1);
        if ((i + j) % 2 == 0) {
          mesh.triangles.push_back({v00, v10, v11});
          mesh.triangles.push_back({v00, v11, v01});
        } else {
          mesh.triangles.push_back({v00, v10, v01});
          mesh.triangles.push_back({v10, v11, v01});
        }
      }
  }
};

inline double angle_about(Vec2 p, Vec2 c) { return std::atan2(p.y - c.y, p.x - c.x); }

// Unwraps loop angles about c into an increasing sequence starting in
// [start, start + 2*pi).
inline std::vector<double> unwrap_angles(const std::vector<Vec2>& pts, Vec2 c,
                                         double start) {
  std::vector<double> a(pts.size());
  double prev = start;
  for (size_t k = 0; k < pts.size(); ++k) {
    double t = angle_about(pts[k], c);
    while (t < prev - 1e-9) t += 2.0 * pi;
    a[k] = t;
    prev = t;
  }
  return a;
}

// Fills the annulus between two chains with triangles by merging them in
// angular order about `center`. Both chains must be counter-clockwise and
// star-shaped with respect to `center`. If `closed`, the chains wrap around.
inline void zip_chains(Mesh& mesh, const std::vector<int>& outer,
                       const std::vector<int>& inner, Vec2 center, bool closed) {
  auto pts = [&](const std::vector<int>& ids) {
    std::vector<Vec2> p(ids.size());
    for (size_t k = 0; k < ids.size(); ++k) p[k] = mesh.vertices[ids[k]];
    return p;
  };
  std::vector<int> O = outer, I = inner;
  std::vector<Vec2> OP = pts(O), IP = pts(I);

  double start;
  if (closed) {
    // Rotate both loops to start at the smallest angle of the outer loop.
    size_t o0 = 0;
    double best = 1e300;
    for (size_t k = 0; k < OP.size(); ++k) {
      const double a = angle_about(OP[k], center);
      if (a < best) {
        best = a;
        o0 = k;
      }
    }
    std::rotate(O.begin(), O.begin() + o0, O.end());
    std::rotate(OP.begin(), OP.begin() + o0, OP.end());
    start = best - 1e-7;
    size_t i0 = 0;
    double ibest = 1e300;
    for (size_t k = 0; k < IP.size(); ++k) {
      double a = angle_about(IP[k], center);
      while (a < start) a += 2.0 * pi;
      if (a < ibest) {
        ibest = a;
        i0 = k;
      }
    }
    std::rotate(I.begin(), I.begin() + i0, I.end());
    std::rotate(IP.begin(), IP.begin() + i0, IP.end());
    O.push_back(O.front());
    OP.push_back(OP.front());
    I.push_back(I.front());
    IP.push_back(IP.front());
  } else {
    start = std::min(angle_about(OP.front(), center),
                     angle_about(IP.front(), center)) -
            1e-7;
  }

  const auto AO = unwrap_angles(OP, center, start);
  const auto AI = unwrap_angles(IP, center, start);
  const double span = closed ? 2.0 * pi : 1.6 * pi;
  if (AO.back() - AO.front() > span + 1e-6 || AI.back() - AI.front() > span + 1e-6)
    throw geometry_error("mesh: stitch chains are not star-shaped about the center");

  auto emit = [&](int a, int b, int c) {
    const double s2 = cross(mesh.vertices[b] - mesh.vertices[a],
                            mesh.vertices[c] - mesh.vertices[a]);
    if (std::abs(s2) < 1e-16) return;  // degenerate (coincident wall points)
    if (s2 > 0.0)
      mesh.triangles.push_back({a, b, c});
    else
      mesh.triangles.push_back({a, c, b});
  };

  size_t i = 0, j = 0;
  while (i + 1 < O.size() || j + 1 < I.size()) {
    const bool adv_outer =
        (j + 1 >= I.size()) ||
        (i + 1 < O.size() && AO[i + 1] <= AI[j + 1]);
    if (adv_outer) {
      emit(O[i], O[i + 1], I[j]);
      ++i;
    } else {
      emit(O[i], I[j + 1], I[j]);
      ++j;
    }
  }
}

// Fallback stitcher for cavities that are not star-shaped about the hole
// center: bridges the two closed loops into one simple polygon at their
// closest vertex pair, then ear-clips it. Quality is restored by the flip
// pass that follows every stitch.
inline void bridge_earclip(Mesh& mesh, const std::vector<int>& outer,
                           const std::vector<int>& inner) {
  const size_t m = outer.size(), n = inner.size();
  size_t bi = 0, bj = 0;
  double best = 1e300;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      const double d = norm(mesh.vertices[outer[i]] - mesh.vertices[inner[j]]);
      if (d < best) {
        best = d;
        bi = i;
        bj = j;
      }
    }
  // Outer stays counter-clockwise; the inner loop is traversed clockwise.
  std::vector<int> poly;
  poly.reserve(m + n + 2);
  for (size_t i = 0; i <= bi; ++i) poly.push_back(outer[i]);
  for (size_t k = 0; k <= n; ++k)
    poly.push_back(inner[(bj + n - (k % n)) % n]);
  for (size_t i = bi; i < m; ++i) poly.push_back(outer[i]);

  auto at = [&](size_t k) -> Vec2 { return mesh.vertices[poly[k]]; };
  int guard = static_cast<int>(poly.size()) * static_cast<int>(poly.size()) + 64;
  while (poly.size() > 3) {
    if (--guard < 0) throw geometry_error("mesh: ear clipping failed to converge");
    bool clipped = false;
    for (size_t k = 0; k < poly.size(); ++k) {
      const size_t ia = (k + poly.size() - 1) % poly.size();
      const size_t ib = (k + 1) % poly.size();
      const Vec2 a = at(ia), v = at(k), b = at(ib);
      const double area2 = cross(v - a, b - v);
      const double scale = (norm(v - a) + norm(b - v));
      if (area2 <= 1e-14 * scale * scale) continue;  // reflex or degenerate
      bool ear = true;
      for (size_t q = 0; q < poly.size() && ear; ++q) {
        if (q == ia || q == k || q == ib) continue;
        const Vec2 p = at(q);
        if (poly[q] == poly[ia] || poly[q] == poly[k] || poly[q] == poly[ib])
          continue;  // bridge duplicates
        const double w0 = cross(v - a, p - a);
        const double w1 = cross(b - v, p - v);
        const double w2 = cross(a - b, p - b);
        const double eps = -1e-12 * scale * scale;
        if (w0 > eps && w1 > eps && w2 > eps) ear = false;
      }
      if (!ear) continue;
      mesh.triangles.push_back({poly[ia], poly[k], poly[ib]});
      poly.erase(poly.begin() + k);
      clipped = true;
      break;
    }
    if (!clipped) throw geometry_error("mesh: no ear found while stitching");
  }
  if (poly.size() == 3) {
    const double s2 = cross(at(1) - at(0), at(2) - at(0));
    if (s2 > 1e-16) mesh.triangles.push_back({poly[0], poly[1], poly[2]});
  }
}

// Local Delaunay edge flips; cleans up slivers left by the ring stitching.
// Tagged and boundary edges are never touched. Deterministic sweep order.
inline void delaunay_flip_pass(Mesh& mesh, int max_sweeps = 12) {
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    std::map<std::pair<int, int>, std::array<int, 2>> star;
    for (int t = 0; t < mesh.triangle_count(); ++t)
      for (int e = 0; e < 3; ++e) {
        const int a = mesh.triangles[t][e], b = mesh.triangles[t][(e + 1) % 3];
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = star.find(key);
        if (it == star.end())
          star[key] = {t, -1};
        else
          it->second[1] = t;
      }
    bool changed = false;
    std::set<int> dirty;
    for (auto& [edge, ts] : star) {
      if (ts[1] < 0) continue;
      if (mesh.edge_tags.count(edge)) continue;
      if (dirty.count(ts[0]) || dirty.count(ts[1])) continue;
      auto& t1 = mesh.triangles[ts[0]];
      auto& t2 = mesh.triangles[ts[1]];
      int a = edge.first, b = edge.second;
      int c = -1, d = -1;
      for (int v : t1)
        if (v != a && v != b) c = v;
      for (int v : t2)
        if (v != a && v != b) d = v;
      if (c < 0 || d < 0 || c == d) continue;
      const Vec2 pa = mesh.vertices[a], pb = mesh.vertices[b];
      const Vec2 pc = mesh.vertices[c], pd = mesh.vertices[d];
      const double sa = std::abs(cross(pa - pc, pb - pc));
      const double ca = dot(pa - pc, pb - pc);
      const double sb = std::abs(cross(pa - pd, pb - pd));
      const double cb = dot(pa - pd, pb - pd);
      const double scale = (sa + std::abs(ca)) * (sb + std::abs(cb));
      if (sa * cb + sb * ca >= -1e-12 * scale) continue;  // Delaunay already
      // Candidate flip to diagonal (c,d); require both new triangles valid.
      const double s1 = cross(pd - pa, pc - pa);
      const double s2 = cross(pb - pd, pc - pd);
      if (s1 * s2 <= 0.0 || std::abs(s1) < 1e-16 || std::abs(s2) < 1e-16) continue;
      if (s1 > 0.0) {
        t1 = {a, d, c};
        t2 = {d, b, c};
      } else {
        t1 = {a, c, d};
        t2 = {c, b, d};
      }
      dirty.insert(ts[0]);
      dirty.insert(ts[1]);
      changed = true;
    }
    if (!changed) break;
  }
}

// Closed-annulus stitch: angular zip when the loops are star-shaped about
// the center, bridged ear clipping otherwise.
inline void stitch_annulus(Mesh& mesh, const std::vector<int>& outer,
                           const std::vector<int>& inner, Vec2 center) {
  const size_t before = mesh.triangles.size();
  try {
    zip_chains(mesh, outer, inner, center, true);
  } catch (const geometry_error&) {
    mesh.triangles.resize(before);
    bridge_earclip(mesh, outer, inner);
  }
}

// Registers consecutive ring edges with a tag.
inline void tag_ring(Mesh& mesh, const std::vector<int>& ring, EdgeTag tag,
                     bool closed) {
  const size_t n = ring.size();
  for (size_t k = 0; k + 1 < n + (closed ? 1 : 0); ++k) {
    int a = ring[k], b = ring[(k + 1) % n];
    if (a == b) continue;
    mesh.edge_tags[{std::min(a, b), std::max(a, b)}] = tag;
  }
}

inline std::vector<int> make_hole_ring(Mesh& mesh, const HoleOutline& hole) {
  std::vector<int> ring(hole.ring.size());
  for (size_t k = 0; k < hole.ring.size(); ++k) {
    ring[k] = mesh.vertex_count();
    mesh.vertices.push_back(hole.ring[k]);
  }
  return ring;
}

// Boundary edges (appearing in exactly one triangle), each mapped to that
// triangle index.
inline std::map<std::pair<int, int>, int> boundary_edges(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> count;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e], b = tri[(e + 1) % 3];
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      auto it = count.find(key);
      if (it == count.end())
        count[key] = t;
      else
        it->second = -1;  // interior
    }
  }
  std::map<std::pair<int, int>, int> out;
  for (auto& [k, v] : count)
    if (v >= 0) out[k] = v;
  return out;
}

template <typename Classifier>
void tag_untagged_boundary(Mesh& mesh, Classifier classify) {
  for (auto& [edge, tri] : boundary_edges(mesh)) {
    if (mesh.edge_tags.count(edge)) continue;
    mesh.edge_tags[edge] = classify(mesh.vertices[edge.first], mesh.vertices[edge.second]);
  }
}

}  // namespace meshdetail

// ---------------------------------------------------------------------------
// Band mesh: ((0,1) x (-L_band, L_band)) minus the canonical hole, vertical
// sides node-matched for periodic pairing.

inline Mesh mesh_band(const BandSpec& spec) {
  using namespace meshdetail;
  spec.validate();

  std::vector<double> xt = uniform_ticks(0.0, 1.0, spec.h);
  const double y_fine = std::min(3.0, spec.l_band);
  std::vector<double> yt = graded_ticks(-y_fine, -spec.l_band, spec.h, 4.0 * spec.h, 1.5);
  std::reverse(yt.begin(), yt.end());
  append_ticks(yt, uniform_ticks(-y_fine, y_fine, spec.h));
  append_ticks(yt, graded_ticks(y_fine, spec.l_band, spec.h, 4.0 * spec.h, 1.5));

  GridMesher g;
  g.init(xt, yt);

  std::vector<std::vector<int>> cavities;
  std::vector<HoleOutline> outlines;
  if (!spec.cell.empty()) {
    HoleOutline outline = hole_outline(spec.cell.hole, spec.h);
    double room = 1e300;
    for (const Vec2& p : outline.ring)
      room = std::min({room, p.x, 1.0 - p.x});
    cavities.push_back(g.carve_cavity(outline, 0.9 * room));
    outlines.push_back(std::move(outline));
  }

  g.triangulate_grid();
  Mesh mesh = std::move(g.mesh);
  for (size_t k = 0; k < outlines.size(); ++k) {
    auto ring = make_hole_ring(mesh, outlines[k]);
    stitch_annulus(mesh, cavities[k], ring, outlines[k].center);
    tag_ring(mesh, ring, EdgeTag::Hole, true);
  }
  delaunay_flip_pass(mesh);

  tag_untagged_boundary(mesh, [&](Vec2 a, Vec2 b) {
    const double eps = 1e-9;
    if (a.x < eps && b.x < eps) return EdgeTag::PeriodicLeft;
    if (a.x > 1.0 - eps && b.x > 1.0 - eps) return EdgeTag::PeriodicRight;
    if (a.y > spec.l_band - eps && b.y > spec.l_band - eps) return EdgeTag::BandTop;
    if (a.y < -spec.l_band + eps && b.y < -spec.l_band + eps) return EdgeTag::BandBottom;
    throw geometry_error("mesh_band: unclassifiable boundary edge");
  });

  // Periodic node pairing left<->right by row.
  std::map<int64_t, int> left, right;
  auto ykey = [](double y) { return static_cast<int64_t>(std::llround(y * 1e12)); };
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const Vec2 p = mesh.vertices[v];
    if (p.x < 1e-9) left[ykey(p.y)] = v;
    if (p.x > 1.0 - 1e-9) right[ykey(p.y)] = v;
  }
  if (left.size() != right.size())
    throw geometry_error("mesh_band: periodic sides do not match");
  for (auto& [key, lv] : left) {
    auto it = right.find(key);
    if (it == right.end()) throw geometry_error("mesh_band: unmatched periodic node");
    mesh.periodic_pairs.emplace_back(lv, it->second);
  }
  mesh.h_target = spec.h;
  return mesh;
}

// ---------------------------------------------------------------------------
// Perforated physical domain Omega^delta.

inline Mesh mesh_perforated(const DomainSpec& dom, const PeriodicityCell& cell,
                            double delta, double h) {
  using namespace meshdetail;
  dom.validate();
  cell.validate();
  const double L = dom.half_length;
  const double q_real = 2.0 * L / delta;
  const int q = static_cast<int>(std::lround(q_real));
  if (std::abs(q_real - q) > 1e-9 || q < 1)
    throw config_error("mesh_perforated: 2L/delta must be a positive integer");
  if (!(delta < std::min(dom.height_bottom, dom.height_top)))
    throw geometry_error("mesh_perforated: delta must be smaller than min(H_B, H_T)");

  const double h_layer = delta / 8.0;
  const double h_bulk = std::max(h, h_layer);
  const double cap = 4.0 * h_layer / 0.9;  // limits quad anisotropy

  // x ticks: layer resolution on [-L, L], graded wings outside.
  std::vector<double> xt;
  {
    std::vector<double> wing = graded_ticks(-L, -dom.half_length_top, h_layer,
                                            std::min(h_bulk, cap));
    std::reverse(wing.begin(), wing.end());
    xt = wing;
    append_ticks(xt, uniform_ticks(-L, L, h_layer));
    append_ticks(xt, graded_ticks(L, dom.half_length_top, h_layer, std::min(h_bulk, cap)));
  }
  // y ticks: fine across the layer, graded to the lids; y=0 and +-delta exact.
  std::vector<double> yt;
  {
    std::vector<double> down =
        graded_ticks(-delta, -dom.height_bottom, h_layer, std::min(h_bulk, cap));
    std::reverse(down.begin(), down.end());
    yt = down;
    append_ticks(yt, uniform_ticks(-delta, delta, h_layer));
    append_ticks(yt, graded_ticks(delta, dom.height_top, h_layer, std::min(h_bulk, cap)));
  }

  GridMesher g;
  g.init(xt, yt);
  g.restrict_domain([&](double x0, double x1, double y0, double y1) {
    const double xc = 0.5 * (x0 + x1), yc = 0.5 * (y0 + y1);
    if (yc > 0.0) return std::abs(xc) < dom.half_length_top && yc < dom.height_top;
    return std::abs(xc) < L && yc > -dom.height_bottom;
  });

  std::vector<std::vector<int>> cavities;
  std::vector<HoleOutline> outlines;
  if (!cell.empty()) {
    const HoleOutline canonical = hole_outline(cell.hole, h_layer / delta);
    for (int l = 1; l <= q; ++l) {
      HoleOutline o = canonical.transformed(delta, {-L + delta * (l - 1), 0.0});
      cavities.push_back(g.carve_cavity(o, 0.45 * delta - o.reach));
      outlines.push_back(std::move(o));
    }
  }

  g.triangulate_grid();
  Mesh mesh = std::move(g.mesh);
  for (size_t k = 0; k < outlines.size(); ++k) {
    auto ring = make_hole_ring(mesh, outlines[k]);
    stitch_annulus(mesh, cavities[k], ring, outlines[k].center);
    tag_ring(mesh, ring, EdgeTag::Hole, true);
  }
  delaunay_flip_pass(mesh);
  tag_untagged_boundary(mesh, [&](Vec2, Vec2) { return EdgeTag::Dirichlet; });
  mesh.h_target = h;
  return mesh;
}

// ---------------------------------------------------------------------------
// Limit domain with Gamma doubled: Omega_T above, Omega_B below, every node
// on Gamma duplicated and registered in interface_pairs.

inline Mesh mesh_limit_split(const DomainSpec& dom, double h) {
  using namespace meshdetail;
  dom.validate();
  const double L = dom.half_length;
  const double h_fine = h / 4.0;  // corner/interface refinement, anisotropy <= 4
  const double cap = h;

  // Shared x ticks: fine near the two corners, h elsewhere; +-L exact.
  std::vector<double> xt;
  {
    std::vector<double> wing =
        graded_ticks(-L, -dom.half_length_top, h_fine, std::min(h, cap));
    std::reverse(wing.begin(), wing.end());
    xt = wing;
    append_ticks(xt, graded_ticks(-L, 0.0, h_fine, std::min(h, cap)));
    {
      std::vector<double> back = graded_ticks(L, 0.0, h_fine, std::min(h, cap));
      std::reverse(back.begin(), back.end());
      append_ticks(xt, back);
    }
    append_ticks(xt, graded_ticks(L, dom.half_length_top, h_fine, std::min(h, cap)));
  }
  auto make_yt = [&](double top) {
    return graded_ticks(0.0, top, h_fine, std::min(h, cap));
  };

  // Top mesh.
  GridMesher gt;
  gt.init(xt, make_yt(dom.height_top));
  gt.triangulate_grid();
  Mesh top = std::move(gt.mesh);

  // Bottom mesh (restricted to |x| <= L), y negated by mirroring ticks.
  std::vector<double> xb;
  for (double x : xt)
    if (x > -L - 1e-12 && x < L + 1e-12) xb.push_back(x);
  std::vector<double> yb = make_yt(dom.height_bottom);
  for (double& y : yb) y = -y;
  std::reverse(yb.begin(), yb.end());
  GridMesher gb;
  gb.init(xb, yb);
  gb.triangulate_grid();
  Mesh bot = std::move(gb.mesh);

  // Merge.
  Mesh mesh;
  mesh.vertices = top.vertices;
  mesh.triangles = top.triangles;
  const int off = mesh.vertex_count();
  for (const auto& v : bot.vertices) mesh.vertices.push_back(v);
  for (auto tri : bot.triangles)
    mesh.triangles.push_back({tri[0] + off, tri[1] + off, tri[2] + off});

  auto xkey = [](double x) { return static_cast<int64_t>(std::llround(x * 1e12)); };
  std::map<int64_t, int> top_gamma, bot_gamma;
  for (int v = 0; v < top.vertex_count(); ++v)
    if (std::abs(top.vertices[v].y) < 1e-12 && std::abs(top.vertices[v].x) <= L + 1e-12)
      top_gamma[xkey(top.vertices[v].x)] = v;
  for (int v = 0; v < bot.vertex_count(); ++v)
    if (std::abs(bot.vertices[v].y) < 1e-12) bot_gamma[xkey(bot.vertices[v].x)] = v + off;
  if (top_gamma.size() != bot_gamma.size())
    throw geometry_error("mesh_limit_split: Gamma discretizations do not match");
  for (auto& [key, tv] : top_gamma) {
    auto it = bot_gamma.find(key);
    if (it == bot_gamma.end())
      throw geometry_error("mesh_limit_split: unmatched interface node");
    mesh.interface_pairs.emplace_back(tv, it->second);
    const double x = mesh.vertices[tv].x;
    if (std::abs(std::abs(x) - L) < 1e-12) {
      mesh.corner_nodes.push_back(tv);
      mesh.corner_nodes.push_back(it->second);
    }
  }

  // Tags: interface edges on each side, Dirichlet elsewhere.
  tag_untagged_boundary(mesh, [&](Vec2 a, Vec2 b) {
    if (std::abs(a.y) < 1e-12 && std::abs(b.y) < 1e-12 &&
        std::abs(a.x) <= L + 1e-12 && std::abs(b.x) <= L + 1e-12)
      return EdgeTag::InterfaceTop;  // provisional; fixed below for bottom copies
    return EdgeTag::Dirichlet;
  });
  // Edges between bottom-copy vertices belong to the bottom side.
  for (auto& [edge, tag] : mesh.edge_tags)
    if (tag == EdgeTag::InterfaceTop && edge.first >= off && edge.second >= off)
      tag = EdgeTag::InterfaceBottom;

  mesh.h_target = h;
  return mesh;
}

// ---------------------------------------------------------------------------
// Truncated corner sector with the half-line of unit-spaced holes.

inline Mesh mesh_sector(const SectorSpec& spec) {
  using namespace meshdetail;
  spec.validate();
  const double R = spec.r_max;
  const bool plus = spec.corner == Corner::Plus;

  // Holes along the layer half-line: X1 < 0 for the plus corner (offsets
  // -1,-2,...), X1 > 0 for the minus corner (offsets 0,1,...).
  const int n_holes = spec.cell.empty() ? 0 : static_cast<int>(std::floor(R)) - 2;
  std::vector<HoleOutline> outlines;
  if (!spec.cell.empty()) {
    const HoleOutline canonical = hole_outline(spec.cell.hole, spec.h_near);
    for (int l = 0; l < n_holes; ++l) {
      const double ox = plus ? -(l + 1) : static_cast<double>(l);
      outlines.push_back(canonical.transformed(1.0, {ox, 0.0}));
    }
  }

  // Ticks: the layer side stays uniformly fine (it carries the unit holes);
  // everything else grades from h_near at the origin to h_far at the arc.
  const double hn = spec.h_near;
  const double hf = spec.h_far;
  std::vector<double> xt;
  if (plus) {
    xt = uniform_ticks(-R, 0.0, hn);
    append_ticks(xt, graded_ticks(0.0, R, hn, hf, 1.15));
  } else {
    xt = graded_ticks(0.0, -R, hn, hf, 1.15);
    std::reverse(xt.begin(), xt.end());
    append_ticks(xt, uniform_ticks(0.0, R, hn));
  }
  std::vector<double> yt;
  {
    const double yf = std::min(1.5, R);
    yt = graded_ticks(-yf, -R, hn, hf, 1.15);
    std::reverse(yt.begin(), yt.end());
    append_ticks(yt, uniform_ticks(-yf, yf, hn));
    append_ticks(yt, graded_ticks(yf, R, hn, hf, 1.15));
  }

  GridMesher g;
  g.init(xt, yt);
  const double arc_margin = 0.5;
  g.restrict_domain([&](double x0, double x1, double y0, double y1) {
    const double xc = 0.5 * (x0 + x1), yc = 0.5 * (y0 + y1);
    // Excluded quadrant: {x>0,y<0} for plus, {x<0,y<0} for minus.
    if (plus && xc > 0.0 && yc < 0.0) return false;
    if (!plus && xc < 0.0 && yc < 0.0) return false;
    // Keep strictly inside the arc; the gap is stitched afterwards.
    const double rmax_corner =
        std::max({std::hypot(x0, y0), std::hypot(x1, y0), std::hypot(x0, y1),
                  std::hypot(x1, y1)});
    const double hloc = std::max(x1 - x0, y1 - y0);
    return rmax_corner <= R - arc_margin * hloc;
  });

  std::vector<std::vector<int>> cavities;
  for (const auto& o : outlines) cavities.push_back(g.carve_cavity(o, 0.45 - o.reach));
  g.triangulate_grid();
  Mesh mesh = std::move(g.mesh);
  for (size_t k = 0; k < outlines.size(); ++k) {
    auto ring = make_hole_ring(mesh, outlines[k]);
    stitch_annulus(mesh, cavities[k], ring, outlines[k].center);
    tag_ring(mesh, ring, EdgeTag::Hole, true);
  }

  // Stitch the staircase rim to the outer arc. The open staircase chain runs
  // between the two walls; order boundary-but-untagged edges by angle.
  CornerFrame frame{spec.corner, {0.0, 0.0}};
  {
    auto on_wall = [&](Vec2 p) {
      const double eps = 1e-11;
      if (std::abs(p.y) < eps && (plus ? p.x > -eps : p.x < eps)) return true;
      return std::abs(p.x) < eps && p.y < eps;  // downward wall for both corners
    };
    auto bnd = boundary_edges(mesh);
    std::map<int, std::vector<int>> adj;
    for (auto& [edge, tri] : bnd) {
      if (mesh.edge_tags.count(edge)) continue;  // hole rings
      const Vec2 a = mesh.vertices[edge.first], b = mesh.vertices[edge.second];
      const double ra = norm(a), rb = norm(b);
      if (std::min(ra, rb) < 0.55 * R) continue;  // inner walls, not the rim
      if (on_wall(a) && on_wall(b)) continue;     // wall segments near the arc
      adj[edge.first].push_back(edge.second);
      adj[edge.second].push_back(edge.first);
    }
    // Chain endpoints have degree 1.
    std::vector<int> ends;
    for (auto& [v, nb] : adj)
      if (nb.size() == 1) ends.push_back(v);
    if (ends.size() != 2)
      throw geometry_error("mesh_sector: rim chain extraction failed");
    auto angle_of = [&](int v) { return frame.to_polar(mesh.vertices[v])[1]; };
    int start = (angle_of(ends[0]) < angle_of(ends[1])) ? ends[0] : ends[1];
    std::vector<int> rim{start};
    int prev = -1, cur = start;
    while (true) {
      const auto& nb = adj[cur];
      int next = -1;
      for (int cand : nb)
        if (cand != prev) next = cand;
      if (next < 0) break;
      rim.push_back(next);
      prev = cur;
      cur = next;
      if (adj[cur].size() == 1) break;
    }

    // Arc polygon from theta_min to theta_max.
    const int n_arc = std::max(
        8, static_cast<int>(std::lround(1.5 * pi * R / std::min(spec.h_far, hf))));
    std::vector<int> arc(n_arc + 1);
    for (int k = 0; k <= n_arc; ++k) {
      const double t =
          frame.theta_min() + (frame.theta_max() - frame.theta_min()) * k / n_arc;
      arc[k] = mesh.vertex_count();
      mesh.vertices.push_back({R * std::cos(t), R * std::sin(t)});
    }
    zip_chains(mesh, arc, rim, {0.0, 0.0}, false);
    tag_ring(mesh, arc, EdgeTag::OuterArc, false);
  }
  delaunay_flip_pass(mesh);

  tag_untagged_boundary(mesh, [&](Vec2, Vec2) { return EdgeTag::Dirichlet; });
  mesh.h_target = spec.h_near;
  return mesh;
}

// ---------------------------------------------------------------------------
// Audits.

struct MeshAudit {
  double min_area = 0.0;
  double min_quality = 0.0;
  int euler_characteristic = 0;  // V - E + F
  bool conforming = false;
  bool boundary_fully_tagged = false;
  double max_pairing_mismatch = 0.0;
};

inline MeshAudit audit_mesh(const Mesh& mesh) {
  MeshAudit a;
  a.min_area = 1e300;
  a.min_quality = 1e300;
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    a.min_area = std::min(a.min_area, mesh.triangle_area(t));
    a.min_quality = std::min(a.min_quality, mesh.triangle_quality(t));
  }
  std::set<std::pair<int, int>> edges;
  std::map<std::pair<int, int>, int> use;
  for (const auto& tri : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      const int x = tri[e], y = tri[(e + 1) % 3];
      edges.insert({std::min(x, y), std::max(x, y)});
      use[{std::min(x, y), std::max(x, y)}]++;
    }
  a.euler_characteristic = mesh.vertex_count() - static_cast<int>(edges.size()) +
                           mesh.triangle_count();
  a.conforming = true;
  for (auto& [e, n] : use)
    if (n > 2) a.conforming = false;
  a.boundary_fully_tagged = true;
  for (auto& [e, n] : use)
    if (n == 1 && !mesh.edge_tags.count(e)) a.boundary_fully_tagged = false;
  for (auto& [l, r] : mesh.periodic_pairs)
    a.max_pairing_mismatch = std::max(
        a.max_pairing_mismatch, std::abs(mesh.vertices[l].y - mesh.vertices[r].y));
  for (auto& [t, b] : mesh.interface_pairs)
    a.max_pairing_mismatch =
        std::max({a.max_pairing_mismatch, std::abs(mesh.vertices[t].x - mesh.vertices[b].x),
                  std::abs(mesh.vertices[t].y - mesh.vertices[b].y)});
  return a;
}

// ---------------------------------------------------------------------------
// Point location with uniform bins.

class PointLocator {
 public:
  explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {
    lo_ = {1e300, 1e300};
    hi_ = {-1e300, -1e300};
    for (const auto& v : mesh.vertices) {
      lo_.x = std::min(lo_.x, v.x);
      lo_.y = std::min(lo_.y, v.y);
      hi_.x = std::max(hi_.x, v.x);
      hi_.y = std::max(hi_.y, v.y);
    }
    n_ = std::max(1, static_cast<int>(std::sqrt(mesh.triangle_count() / 4.0)));
    bins_.assign(static_cast<size_t>(n_) * n_, {});
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[t];
      Vec2 tlo{1e300, 1e300}, thi{-1e300, -1e300};
      for (int k = 0; k < 3; ++k) {
        const Vec2 p = mesh.vertices[tri[k]];
        tlo.x = std::min(tlo.x, p.x);
        tlo.y = std::min(tlo.y, p.y);
        thi.x = std::max(thi.x, p.x);
        thi.y = std::max(thi.y, p.y);
      }
      for (int bi = bin_of(tlo.x, lo_.x, hi_.x); bi <= bin_of(thi.x, lo_.x, hi_.x); ++bi)
        for (int bj = bin_of(tlo.y, lo_.y, hi_.y); bj <= bin_of(thi.y, lo_.y, hi_.y); ++bj)
          bins_[static_cast<size_t>(bj) * n_ + bi].push_back(t);
    }
  }

  // Returns triangle index and barycentric coordinates, or -1.
  int locate(Vec2 p, std::array<double, 3>* bary = nullptr, double tol = 1e-9) const {
    const int bi = bin_of(p.x, lo_.x, hi_.x);
    const int bj = bin_of(p.y, lo_.y, hi_.y);
    int best = -1;
    double best_viol = 1e300;
    std::array<double, 3> best_b{};
    for (int rad = 0; rad <= 2 && best_viol > 0.0; ++rad) {
      for (int j = std::max(0, bj - rad); j <= std::min(n_ - 1, bj + rad); ++j)
        for (int i = std::max(0, bi - rad); i <= std::min(n_ - 1, bi + rad); ++i) {
          if (rad > 0 && std::max(std::abs(i - bi), std::abs(j - bj)) != rad) continue;
          for (int t : bins_[static_cast<size_t>(j) * n_ + i]) {
            std::array<double, 3> b;
            const double viol = bary_violation(t, p, b);
            if (viol < best_viol) {
              best_viol = viol;
              best = t;
              best_b = b;
            }
          }
        }
      if (best_viol <= 0.0) break;
    }
    if (best < 0 || best_viol > tol) return -1;
    if (bary) *bary = best_b;
    return best;
  }

 private:
  int bin_of(double v, double lo, double hi) const {
    if (hi <= lo) return 0;
    int b = static_cast<int>((v - lo) / (hi - lo) * n_);
    return std::clamp(b, 0, n_ - 1);
  }

  double bary_violation(int t, Vec2 p, std::array<double, 3>& b) const {
    const auto& tri = mesh_->triangles[t];
    const Vec2 a = mesh_->vertices[tri[0]], c = mesh_->vertices[tri[1]],
               d = mesh_->vertices[tri[2]];
    const double det = cross(c - a, d - a);
    if (std::abs(det) < 1e-300) return 1e300;
    b[1] = cross(p - a, d - a) / det;
    b[2] = cross(c - a, p - a) / det;
    b[0] = 1.0 - b[1] - b[2];
    return std::max({-b[0], -b[1], -b[2], 0.0});
  }

  const Mesh* mesh_;
  Vec2 lo_, hi_;
  int n_ = 1;
  std::vector<std::vector<int>> bins_;
};

// ---------------------------------------------------------------------------
// Legacy-VTK-style ASCII export/import (points, cells, cell types, and named
// point-data scalar fields).

inline void write_vtk(const Mesh& mesh, const std::string& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>&
                          point_fields = {}) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_vtk: cannot open " + path);
  out.precision(17);
  out << "# vtk DataFile Version 3.0\nperilayer field export\nASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.vertex_count() << " double\n";
  for (const auto& v : mesh.vertices) out << v.x << " " << v.y << " 0\n";
  out << "CELLS " << mesh.triangle_count() << " " << 4 * mesh.triangle_count() << "\n";
  for (const auto& t : mesh.triangles)
    out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "CELL_TYPES " << mesh.triangle_count() << "\n";
  for (int t = 0; t < mesh.triangle_count(); ++t) out << "5\n";
  if (!point_fields.empty()) {
    out << "POINT_DATA " << mesh.vertex_count() << "\n";
    for (const auto& [name, values] : point_fields) {
      if (static_cast<int>(values.size()) != mesh.vertex_count())
        throw std::runtime_error("write_vtk: field size mismatch for " + name);
      out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : values) out << v << "\n";
    }
  }
}

inline Mesh read_vtk(const std::string& path,
                     std::vector<std::pair<std::string, std::vector<double>>>*
                         point_fields = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_vtk: cannot open " + path);
  Mesh mesh;
  std::string tok;
  while (in >> tok) {
    if (tok == "POINTS") {
      int n;
      std::string type;
      in >> n >> type;
      mesh.vertices.resize(n);
      for (int i = 0; i < n; ++i) {
        double z;
        in >> mesh.vertices[i].x >> mesh.vertices[i].y >> z;
      }
    } else if (tok == "CELLS") {
      int m, total;
      in >> m >> total;
      mesh.triangles.resize(m);
      for (int t = 0; t < m; ++t) {
        int k;
        in >> k;
        if (k != 3) throw std::runtime_error("read_vtk: only triangles supported");
        in >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2];
      }
    } else if (tok == "SCALARS" && point_fields) {
      std::string name, type;
      int comps;
      in >> name >> type >> comps;
      std::string lut, lutname;
      in >> lut >> lutname;
      std::vector<double> vals(mesh.vertex_count());
      for (auto& v : vals) in >> v;
      point_fields->emplace_back(name, std::move(vals));
    }
  }
  return mesh;
}

}  // namespace perilayer
