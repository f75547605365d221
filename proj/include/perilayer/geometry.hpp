#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace perilayer {

inline constexpr double pi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class geometry_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class solver_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Cut-off function chi: 0 on |t|<=1, 1 on |t|>=2, C^2 and even.

enum class CutoffKind { QuinticSmoothstep, Cosine };

struct CutoffProfile {
  CutoffKind kind = CutoffKind::QuinticSmoothstep;
};

/// chi(t), transition on 1<=|t|<=2 fixed once and for all. Both profiles are
/// C^2, even and symmetric about the transition midpoint.
inline double chi(const CutoffProfile& profile, double t) {
  const double a = std::abs(t);
  if (a <= 1.0) return 0.0;
  if (a >= 2.0) return 1.0;
  const double u = a - 1.0;
  if (profile.kind == CutoffKind::QuinticSmoothstep)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
  return u - std::sin(2.0 * pi * u) / (2.0 * pi);
}

/// d/dt chi(t).
inline double chi_d1(const CutoffProfile& profile, double t) {
  const double a = std::abs(t);
  if (a <= 1.0 || a >= 2.0) return 0.0;
  const double u = a - 1.0;
  const double s = t > 0.0 ? 1.0 : -1.0;
  if (profile.kind == CutoffKind::QuinticSmoothstep)
    return s * 30.0 * u * u * (1.0 + u * (-2.0 + u));
  return s * (1.0 - std::cos(2.0 * pi * u));
}

/// d2/dt2 chi(t).
inline double chi_d2(const CutoffProfile& profile, double t) {
  const double a = std::abs(t);
  if (a <= 1.0 || a >= 2.0) return 0.0;
  const double u = a - 1.0;
  if (profile.kind == CutoffKind::QuinticSmoothstep)
    return 60.0 * u * (1.0 + u * (-3.0 + 2.0 * u));
  return 2.0 * pi * std::sin(2.0 * pi * u);
}

enum class Sign { Plus, Minus };

/// chi_pm(t) = 1_{+-t>0} chi(t); one-sided truncation.
inline double chi_pm(const CutoffProfile& profile, Sign sign, double t) {
  if (sign == Sign::Plus) return t > 0.0 ? chi(profile, t) : 0.0;
  return t < 0.0 ? chi(profile, t) : 0.0;
}

// ---------------------------------------------------------------------------
// Source and domain description.

/// Smooth compactly supported bump: amplitude * exp(1 - 1/(1 - s^2)),
/// s = |x-c|/radius, identically zero outside the disk.
struct SourceSpec {
  Vec2 center{0.0, 0.4};
  double radius = 0.2;
  double amplitude = 1.0;

  double operator()(Vec2 p) const {
    const double s2 = dot(p - center, p - center) / (radius * radius);
    if (s2 >= 1.0) return 0.0;
    return amplitude * std::exp(1.0 - 1.0 / (1.0 - s2));
  }
};

struct DomainSpec {
  double half_length = 1.0;      // L, half-length of Gamma
  double half_length_top = 1.5;  // L', half-length of the top rectangle
  double height_bottom = 0.75;   // H_B
  double height_top = 0.75;      // H_T
  SourceSpec source;

  void validate() const {
    if (!(half_length > 0.0) || !(half_length_top > half_length))
      throw config_error("domain: requires L_top > L > 0");
    if (!(height_bottom > 0.0) || !(height_top > 0.0))
      throw config_error("domain: requires H_B, H_T > 0");
    if (!(source.radius > 0.0))
      throw config_error("domain: source radius must be positive");
    const double clearance = source.center.y - source.radius;
    if (!(clearance > 0.0))
      throw config_error("domain: source support must stay above Gamma");
    if (source.center.y + source.radius >= height_top ||
        std::abs(source.center.x) + source.radius >= half_length_top)
      throw config_error("domain: source support must lie inside the top rectangle");
  }
};

// ---------------------------------------------------------------------------
// Periodicity cell (0,1) x (-1,1) minus a canonical hole.

struct DiskHole {
  Vec2 center{0.5, 0.0};
  double radius = 0.25;
};

struct PolygonHole {
  std::vector<Vec2> vertices;  // simple, counter-clockwise
};

using HoleShape = std::variant<std::monostate, DiskHole, PolygonHole>;

struct PeriodicityCell {
  HoleShape hole;

  bool empty() const { return std::holds_alternative<std::monostate>(hole); }

  void validate() const {
    if (empty()) return;
    if (const auto* d = std::get_if<DiskHole>(&hole)) {
      if (!(d->radius > 0.0)) throw config_error("cell: hole radius must be positive");
      const double m = std::min({d->center.x, 1.0 - d->center.x, d->center.y + 1.0,
                                 1.0 - d->center.y});
      if (!(d->radius < m))
        throw geometry_error("cell: hole not strictly inside (0,1)x(-1,1)");
      return;
    }
    const auto& poly = std::get<PolygonHole>(hole).vertices;
    if (poly.size() < 3) throw config_error("cell: polygon hole needs >= 3 vertices");
    for (const auto& v : poly)
      if (!(v.x > 0.0 && v.x < 1.0 && v.y > -1.0 && v.y < 1.0))
        throw geometry_error("cell: polygon hole not strictly inside (0,1)x(-1,1)");
  }
};

// ---------------------------------------------------------------------------
// Corner frames: polar coordinates and Dirichlet angular eigenfunctions for
// the two reentrant 3*pi/2 corners.

enum class Corner { Plus, Minus };

inline double singular_exponent(int m) { return 2.0 * m / 3.0; }

struct CornerFrame {
  Corner corner = Corner::Plus;
  Vec2 origin{1.0, 0.0};  // x_O^+ = (L,0) or x_O^- = (-L,0)

  static CornerFrame plus(double half_length) {
    return {Corner::Plus, {half_length, 0.0}};
  }
  static CornerFrame minus(double half_length) {
    return {Corner::Minus, {-half_length, 0.0}};
  }

  double theta_min() const { return corner == Corner::Plus ? 0.0 : -0.5 * pi; }
  double theta_max() const { return corner == Corner::Plus ? 1.5 * pi : pi; }

  /// Polar angle in the corner convention: I^+ = (0, 3pi/2), I^- = (-pi/2, pi).
  /// For the plus corner the branch cut sits inside the excluded quadrant, so
  /// the downward wall maps to +3pi/2 (not -pi/2).
  std::array<double, 2> to_polar(Vec2 p) const {
    const Vec2 d = p - origin;
    double theta = std::atan2(d.y, d.x);
    if (corner == Corner::Plus && theta < -0.5 * pi + 1e-9) theta += 2.0 * pi;
    return {norm(d), theta};
  }

  bool contains_angle(double theta, double tol = 1e-12) const {
    return theta >= theta_min() - tol && theta <= theta_max() + tol;
  }
};

/// Angular eigenfunction w_{m,0,+-}; vanishes on both sector walls.
/// Minus corner uses the mirrored convention sin(lambda_m (pi - theta)).
inline double angular_mode(const CornerFrame& frame, int m, double theta) {
  if (m == 0) throw std::domain_error("angular_mode: m must be nonzero");
  if (!frame.contains_angle(theta))
    throw std::domain_error("angular_mode: angle outside the corner sector");
  const double lambda = singular_exponent(m);
  if (frame.corner == Corner::Plus) return std::sin(lambda * theta);
  return std::sin(lambda * (pi - theta));
}

/// d/dtheta of angular_mode.
inline double angular_mode_dtheta(const CornerFrame& frame, int m, double theta) {
  if (m == 0) throw std::domain_error("angular_mode: m must be nonzero");
  if (!frame.contains_angle(theta))
    throw std::domain_error("angular_mode: angle outside the corner sector");
  const double lambda = singular_exponent(m);
  if (frame.corner == Corner::Plus) return lambda * std::cos(lambda * theta);
  return -lambda * std::cos(lambda * (pi - theta));
}

/// Corner cut-off chi_L^{+-}(r) = 1 - chi(2 r / L): equal to 1 near the
/// corner, vanishing for r >= L.
inline double corner_cutoff(const CutoffProfile& profile, double half_length, double r) {
  return 1.0 - chi(profile, 2.0 * r / half_length);
}

inline double corner_cutoff_d1(const CutoffProfile& profile, double half_length, double r) {
  return -chi_d1(profile, 2.0 * r / half_length) * 2.0 / half_length;
}

inline double corner_cutoff_d2(const CutoffProfile& profile, double half_length, double r) {
  return -chi_d2(profile, 2.0 * r / half_length) * 4.0 / (half_length * half_length);
}

}  // namespace perilayer
