#include "levent/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "levent/error.hpp"

namespace levent {

namespace {

constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for nodes kXgk[1], kXgk[3], kXgk[5], kXgk[7].
constexpr double kWg[4] = {0.129484966168869693270611432679082,
                           0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975,
                           0.417959183673469387755102040816327};

struct Segment {
  double a, b;
  Eigen::VectorXd value;
  double error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

Segment gk15(const VectorIntegrand& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  Eigen::VectorXd fc = f(c);
  Eigen::VectorXd k = kWgk[7] * fc;
  Eigen::VectorXd g = kWg[3] * fc;
  for (int i = 0; i < 7; ++i) {
    const double dx = h * kXgk[i];
    Eigen::VectorXd s = f(c - dx) + f(c + dx);
    k += kWgk[i] * s;
    if (i % 2 == 1) g += kWg[i / 2] * s;
  }
  Segment seg{a, b, h * k, 0.0};
  seg.error = (h * (k - g)).cwiseAbs().maxCoeff();
  return seg;
}

}  // namespace

QuadResult integrate(const VectorIntegrand& f, double a, double b, std::span<const double> breaks,
                     const QuadOptions& opts, double scale) {
  if (!(a < b)) throw InvalidInput("integrate: need a < b");
  if (!(scale > 0.0)) throw InvalidInput("integrate: scale must be positive");

  // Infinite limits: x = scale · tan(t).
  const bool mapped = std::isinf(a) || std::isinf(b);
  VectorIntegrand g = f;
  double ta = a, tb = b;
  std::vector<double> pts;
  if (mapped) {
    g = [&f, scale](double t) -> Eigen::VectorXd {
      const double ct = std::cos(t);
      return f(scale * std::tan(t)) * (scale / (ct * ct));
    };
    const double edge = 0.5 * std::numbers::pi;
    ta = std::isinf(a) ? -edge : std::atan(a / scale);
    tb = std::isinf(b) ? edge : std::atan(b / scale);
    for (double x : breaks) pts.push_back(std::atan(x / scale));
  } else {
    pts.assign(breaks.begin(), breaks.end());
  }
  std::sort(pts.begin(), pts.end());
  std::vector<double> edges{ta};
  for (double x : pts) {
    if (x > edges.back() && x < tb) edges.push_back(x);
  }
  edges.push_back(tb);

  std::priority_queue<Segment> heap;
  Eigen::VectorXd total;
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    Segment s = gk15(g, edges[i], edges[i + 1]);
    total = total.size() ? Eigen::VectorXd(total + s.value) : s.value;
    err += s.error;
    heap.push(std::move(s));
  }

  QuadResult r;
  int intervals = static_cast<int>(heap.size());
  auto tolerance = [&] { return std::max(opts.abs_tol, opts.rel_tol * total.cwiseAbs().maxCoeff()); };
  while (err > tolerance() && intervals < opts.max_intervals) {
    Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      heap.push(std::move(worst));
      break;  // cannot subdivide further in floating point
    }
    Segment left = gk15(g, worst.a, mid);
    Segment right = gk15(g, mid, worst.b);
    total += left.value + right.value - worst.value;
    err += left.error + right.error - worst.error;
    heap.push(std::move(left));
    heap.push(std::move(right));
    ++intervals;
  }
  // Re-sum to shed accumulated cancellation error in the running totals.
  total.setZero();
  err = 0.0;
  std::vector<Segment> all;
  all.reserve(heap.size());
  while (!heap.empty()) {
    all.push_back(heap.top());
    heap.pop();
  }
  std::sort(all.begin(), all.end(), [](const Segment& x, const Segment& y) { return x.a < y.a; });
  for (const auto& s : all) {
    total += s.value;
    err += s.error;
  }
  r.value = total;
  r.error = err;
  r.intervals = intervals;
  r.converged = err <= tolerance();
  return r;
}

IntervalSet IntervalSet::real_line() {
  IntervalSet s;
  const double inf = std::numeric_limits<double>::infinity();
  s.pieces_.push_back({-inf, inf});
  return s;
}

IntervalSet IntervalSet::interval(double lo, double hi) {
  IntervalSet s;
  if (lo < hi) s.pieces_.push_back({lo, hi});
  return s;
}

IntervalSet IntervalSet::united(const IntervalSet& other) const {
  std::vector<Piece> all = pieces_;
  all.insert(all.end(), other.pieces_.begin(), other.pieces_.end());
  std::sort(all.begin(), all.end(), [](const Piece& x, const Piece& y) { return x.lo < y.lo; });
  IntervalSet out;
  for (const auto& p : all) {
    if (!out.pieces_.empty() && p.lo <= out.pieces_.back().hi) {
      out.pieces_.back().hi = std::max(out.pieces_.back().hi, p.hi);
    } else {
      out.pieces_.push_back(p);
    }
  }
  return out;
}

IntervalSet IntervalSet::intersected(const IntervalSet& other) const {
  IntervalSet out;
  std::size_t i = 0, j = 0;
  while (i < pieces_.size() && j < other.pieces_.size()) {
    const double lo = std::max(pieces_[i].lo, other.pieces_[j].lo);
    const double hi = std::min(pieces_[i].hi, other.pieces_[j].hi);
    if (lo < hi) out.pieces_.push_back({lo, hi});
    if (pieces_[i].hi < other.pieces_[j].hi) {
      ++i;
    } else {
      ++j;
    }
  }
  return out;
}

IntervalSet IntervalSet::mirrored() const {
  IntervalSet out;
  for (auto it = pieces_.rbegin(); it != pieces_.rend(); ++it) out.pieces_.push_back({-it->hi, -it->lo});
  return out;
}

bool IntervalSet::contains(double x) const {
  for (const auto& p : pieces_) {
    if (x >= p.lo && x <= p.hi) return true;
  }
  return false;
}

double IntervalSet::overlap(double lo, double hi) const {
  double total = 0.0;
  for (const auto& p : pieces_) {
    const double a = std::max(lo, p.lo);
    const double b = std::min(hi, p.hi);
    if (b > a) total += b - a;
  }
  return total;
}

}  // namespace levent
