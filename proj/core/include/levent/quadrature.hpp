#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace levent {

struct QuadOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_intervals = 20000;
};

struct QuadResult {
  Eigen::VectorXd value;
  double error = 0.0;  ///< estimated max-norm error
  int intervals = 0;
  bool converged = false;
};

using VectorIntegrand = std::function<Eigen::VectorXd(double)>;

/// Adaptive Gauss–Kronrod (7/15) integration of a vector-valued function
/// over [a, b]. Infinite limits are handled by a tangent map centred on
/// `scale`. `breaks` are interior points where the integrand is sharply
/// peaked (poles, band edges); each becomes an initial subdivision.
QuadResult integrate(const VectorIntegrand& f, double a, double b,
                     std::span<const double> breaks = {},
                     const QuadOptions& opts = {}, double scale = 1.0);

/// Sorted interval union on the real line.
class IntervalSet {
 public:
  IntervalSet() = default;
  static IntervalSet real_line();
  static IntervalSet interval(double lo, double hi);

  IntervalSet united(const IntervalSet& other) const;
  IntervalSet intersected(const IntervalSet& other) const;
  IntervalSet mirrored() const;  ///< {−x : x ∈ S}

  bool contains(double x) const;
  /// Length of S ∩ [lo, hi].
  double overlap(double lo, double hi) const;
  bool empty() const { return pieces_.empty(); }

  struct Piece {
    double lo;
    double hi;
  };
  const std::vector<Piece>& pieces() const& { return pieces_; }
  std::vector<Piece> pieces() && { return std::move(pieces_); }

 private:
  std::vector<Piece> pieces_;
};

}  // namespace levent
