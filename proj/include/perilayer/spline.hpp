#pragma once

#include <Eigen/Dense>
#include <vector>

#include "perilayer/geometry.hpp"

namespace perilayer {

/// Least-squares cubic B-spline on [a, b] with uniform clamped knots, stored
/// as per-segment cubic polynomials after the fit; value and the first two
/// derivatives are analytic. Used to smooth interface trace data before
/// differentiating it.
class SmoothingSpline {
 public:
  SmoothingSpline() = default;

  SmoothingSpline(const std::vector<double>& x, const std::vector<double>& y,
                  double a, double b, int segments) {
    if (x.size() != y.size() || x.size() < 8)
      throw config_error("spline: need at least 8 samples");
    if (!(b > a) || segments < 1) throw config_error("spline: bad interval");
    a_ = a;
    b_ = b;
    k_ = segments;
    knots_.assign(4, a_);
    for (int i = 1; i < k_; ++i) knots_.push_back(a_ + (b_ - a_) * i / k_);
    knots_.insert(knots_.end(), 4, b_);

    const int n = k_ + 3;  // cubic basis count
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
    for (size_t i = 0; i < x.size(); ++i) {
      int first;
      const auto bas = basis(std::clamp(x[i], a_, b_), first);
      for (int p = 0; p < 4; ++p) {
        for (int q = 0; q < 4; ++q) M(first + p, first + q) += bas[p] * bas[q];
        r[first + p] += bas[p] * y[i];
      }
    }
    M.diagonal().array() += 1e-10;
    const Eigen::VectorXd coef = M.ldlt().solve(r);

    // Convert to per-segment cubics in (x - x_s): exact for cubics.
    poly_.assign(k_, {});
    for (int s = 0; s < k_; ++s) {
      const double x0 = a_ + (b_ - a_) * s / k_;
      const double hseg = (b_ - a_) / k_;
      Eigen::Matrix4d V;
      Eigen::Vector4d val;
      for (int p = 0; p < 4; ++p) {
        const double xs = x0 + hseg * p / 3.0;
        int first;
        const auto bas = basis(std::min(xs, b_), first, s);
        double v = 0.0;
        for (int q = 0; q < 4; ++q) v += coef[first + q] * bas[q];
        val[p] = v;
        for (int q = 0; q < 4; ++q) V(p, q) = std::pow(xs - x0, q);
      }
      const Eigen::Vector4d c = V.fullPivLu().solve(val);
      for (int q = 0; q < 4; ++q) poly_[s][q] = c[q];
    }
  }

  double value(double x) const {
    const auto [s, dx] = locate(x);
    const auto& c = poly_[s];
    return c[0] + dx * (c[1] + dx * (c[2] + dx * c[3]));
  }
  double d1(double x) const {
    const auto [s, dx] = locate(x);
    const auto& c = poly_[s];
    return c[1] + dx * (2.0 * c[2] + 3.0 * dx * c[3]);
  }
  double d2(double x) const {
    const auto [s, dx] = locate(x);
    const auto& c = poly_[s];
    return 2.0 * c[2] + 6.0 * dx * c[3];
  }

  double lo() const { return a_; }
  double hi() const { return b_; }

 private:
  // Nonzero cubic B-spline values at x; `first` receives the index of the
  // first active basis function. A segment may be forced with `force_seg`.
  std::array<double, 4> basis(double x, int& first, int force_seg = -1) const {
    int seg = force_seg >= 0
                  ? force_seg
                  : std::min(k_ - 1, static_cast<int>((x - a_) / (b_ - a_) * k_));
    const int span = seg + 3;
    std::array<std::array<double, 4>, 4> all{};
    all[0] = {0.0, 0.0, 0.0, 1.0};
    for (int d = 1; d <= 3; ++d) {
      double saved = 0.0;
      std::array<double, 4> cur{};
      for (int rr = 0; rr < d; ++rr) {
        const double denom =
            knots_[span + rr + 1] - knots_[span + rr + 1 - d];
        const double temp = denom > 0.0 ? all[d - 1][4 - d + rr] / denom : 0.0;
        cur[3 - d + rr] = saved + (knots_[span + rr + 1] - x) * temp;
        saved = (x - knots_[span + rr + 1 - d]) * temp;
      }
      cur[3] = saved;
      all[d] = cur;
    }
    first = span - 3;
    return all[3];
  }

  std::pair<int, double> locate(double x) const {
    const double xc = std::clamp(x, a_, b_);
    const int s = std::min(k_ - 1, static_cast<int>((xc - a_) / (b_ - a_) * k_));
    return {s, xc - (a_ + (b_ - a_) * s / k_)};
  }

  double a_ = 0.0, b_ = 1.0;
  int k_ = 1;
  std::vector<double> knots_;
  std::vector<std::array<double, 4>> poly_;
};

}  // namespace perilayer
