#include "pga/opt_core.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <sstream>

#include "pga/error.hpp"

namespace pga {

namespace {

double cross(Point2 o, Point2 a, Point2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double dist2(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

Point2 closest_on_segment(Point2 a, Point2 b, Point2 p) {
  const double ex = b.x - a.x;
  const double ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  double t = ((p.x - a.x) * ex + (p.y - a.y) * ey) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return {a.x + t * ex, a.y + t * ey};
}

}  // namespace

ConvexPolygon::ConvexPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw ContractViolation("polygon needs at least three vertices");
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = vertices_[i];
    const Point2& b = vertices_[(i + 1) % n];
    area2 += a.x * b.y - b.x * a.y;
  }
  if (area2 == 0.0) throw ContractViolation("degenerate polygon");
  if (area2 < 0.0) std::reverse(vertices_.begin(), vertices_.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(vertices_[i], vertices_[(i + 1) % n], vertices_[(i + 2) % n]) <= 0.0) {
      throw ContractViolation("polygon vertices are not strictly convex");
    }
  }
}

bool ConvexPolygon::contains(Point2 p, double tol) const {
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = vertices_[i];
    const Point2& b = vertices_[(i + 1) % n];
    const double len = std::sqrt(dist2(a, b));
    if (cross(a, b, p) < -tol * len) return false;
  }
  return true;
}

Point2 ConvexPolygon::project(Point2 p) const {
  if (contains(p, 1e-12)) return p;
  const std::size_t n = vertices_.size();
  Point2 best = vertices_[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 c = closest_on_segment(vertices_[i], vertices_[(i + 1) % n], p);
    const double d = dist2(c, p);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double ConvexPolygon::min_x() const {
  return std::min_element(vertices_.begin(), vertices_.end(),
                          [](auto& a, auto& b) { return a.x < b.x; })
      ->x;
}
double ConvexPolygon::max_x() const {
  return std::max_element(vertices_.begin(), vertices_.end(),
                          [](auto& a, auto& b) { return a.x < b.x; })
      ->x;
}
double ConvexPolygon::min_y() const {
  return std::min_element(vertices_.begin(), vertices_.end(),
                          [](auto& a, auto& b) { return a.y < b.y; })
      ->y;
}
double ConvexPolygon::max_y() const {
  return std::max_element(vertices_.begin(), vertices_.end(),
                          [](auto& a, auto& b) { return a.y < b.y; })
      ->y;
}

namespace {

// Intersections of the vertical line at x with the polygon boundary.
std::pair<double, double> vertical_extent(const std::vector<Point2>& v, double x) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = v[i];
    const Point2& b = v[(i + 1) % n];
    const double xmin = std::min(a.x, b.x);
    const double xmax = std::max(a.x, b.x);
    if (x < xmin || x > xmax) continue;
    if (a.x == b.x) {
      lo = std::min({lo, a.y, b.y});
      hi = std::max({hi, a.y, b.y});
    } else {
      const double t = (x - a.x) / (b.x - a.x);
      const double y = a.y + t * (b.y - a.y);
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  return {lo, hi};
}

}  // namespace

double ConvexPolygon::lower_y_at(double x) const {
  return vertical_extent(vertices_, std::clamp(x, min_x(), max_x())).first;
}

double ConvexPolygon::upper_y_at(double x) const {
  return vertical_extent(vertices_, std::clamp(x, min_x(), max_x())).second;
}

FeasibleSet FeasibleSet::box(Vector lo, Vector hi) {
  if (lo.size() != hi.size() || lo.empty()) throw ContractViolation("box bounds size mismatch");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw ContractViolation("box requires lo <= hi componentwise");
  }
  FeasibleSet s;
  s.kind_ = Kind::box;
  s.dimension_ = lo.size();
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

FeasibleSet FeasibleSet::per_step_polygon(ConvexPolygon polygon, std::size_t steps) {
  if (steps == 0) throw ContractViolation("polygon feasible set needs at least one step");
  FeasibleSet s;
  s.kind_ = Kind::per_step_polygon;
  s.dimension_ = 2 * steps;
  s.polygon_.push_back(std::move(polygon));
  return s;
}

const ConvexPolygon& FeasibleSet::polygon() const {
  if (polygon_.empty()) throw ContractViolation("feasible set is not polygonal");
  return polygon_.front();
}

void FeasibleSet::project(std::span<double> point) const {
  if (point.size() != dimension_) throw ContractViolation("projection: dimension mismatch");
  if (kind_ == Kind::box) {
    for (std::size_t i = 0; i < dimension_; ++i) point[i] = std::clamp(point[i], lo_[i], hi_[i]);
    return;
  }
  const ConvexPolygon& poly = polygon_.front();
  for (std::size_t i = 0; i < dimension_; i += 2) {
    const Point2 q = poly.project({point[i], point[i + 1]});
    point[i] = q.x;
    point[i + 1] = q.y;
  }
}

Vector FeasibleSet::projected(std::span<const double> point) const {
  Vector out(point.begin(), point.end());
  project(out);
  return out;
}

bool FeasibleSet::contains(std::span<const double> point, double tol) const {
  if (point.size() != dimension_) return false;
  if (kind_ == Kind::box) {
    for (std::size_t i = 0; i < dimension_; ++i) {
      if (point[i] < lo_[i] - tol || point[i] > hi_[i] + tol) return false;
    }
    return true;
  }
  const ConvexPolygon& poly = polygon_.front();
  for (std::size_t i = 0; i < dimension_; i += 2) {
    if (!poly.contains({point[i], point[i + 1]}, tol)) return false;
  }
  return true;
}

Vector FeasibleSet::lower_corner() const {
  if (kind_ == Kind::box) return lo_;
  Vector out(dimension_);
  for (std::size_t i = 0; i < dimension_; i += 2) {
    out[i] = polygon_.front().min_x();
    out[i + 1] = polygon_.front().min_y();
  }
  return out;
}

Vector FeasibleSet::upper_corner() const {
  if (kind_ == Kind::box) return hi_;
  Vector out(dimension_);
  for (std::size_t i = 0; i < dimension_; i += 2) {
    out[i] = polygon_.front().max_x();
    out[i + 1] = polygon_.front().max_y();
  }
  return out;
}

AdamState AdamState::fresh(std::size_t n, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0) || !(config.beta1 > 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 > 0.0 && config.beta2 < 1.0) || !(config.eps_stab > 0.0)) {
    throw ContractViolation("invalid Adam hyperparameters");
  }
  AdamState s;
  s.first_moment.assign(n, 0.0);
  s.second_moment.assign(n, 0.0);
  s.config = config;
  return s;
}

void adam_step(AdamState& state, std::span<double> iterate, std::span<const double> gradient) {
  const std::size_t n = state.first_moment.size();
  if (iterate.size() != n || gradient.size() != n || state.second_moment.size() != n) {
    throw ContractViolation("adam_step: shape mismatch between iterate, gradient and moments");
  }
  const AdamConfig& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gradient[i];
    state.first_moment[i] = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
    state.second_moment[i] = c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.first_moment[i] / bc1;
    const double v_hat = state.second_moment[i] / bc2;
    iterate[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps_stab);
  }
}

void validate(const GdStopRule& stop) {
  if (stop.window_n < 1) throw ContractViolation("stop rule window_n must be >= 1");
  if (!(stop.delta > 0.0)) throw ContractViolation("stop rule delta must be > 0");
  if (stop.max_inner_iters < 1) throw ContractViolation("stop rule max_inner_iters must be >= 1");
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

InnerResult inner_solve(const SmoothObjective& objective, const FeasibleSet& set, Vector start,
                        const AdamConfig& adam, const GdStopRule& stop,
                        const InnerOptions& options) {
  validate(stop);
  const std::size_t n = set.dimension();
  if (start.size() != n || objective.dimension() != n) {
    throw ContractViolation("inner_solve: start/objective dimension mismatch");
  }
  if (!set.contains(start, 1e-9)) throw ContractViolation("inner_solve: start is outside the feasible set");

  AdamState state = AdamState::fresh(n, adam);
  Vector u = std::move(start);
  Vector grad(n);
  Vector prev(n);

  // Ring of the last N iterates for the displacement rule.
  const std::size_t window = static_cast<std::size_t>(stop.window_n);
  std::vector<Vector> ring;
  if (stop.mode == StopMode::window_displacement) ring.assign(window, Vector(n));
  if (!ring.empty()) ring[0] = u;

  InnerResult result;
  long quiet_steps = 0;
  bool converged = false;
  for (long iter = 1; iter <= stop.max_inner_iters; ++iter) {
    objective.value_and_gradient(u, grad);
    if (!all_finite(grad)) throw NumericalFailure("inner_solve: non-finite gradient", u);
    prev = u;
    adam_step(state, u, grad);
    set.project(u);
    assert(set.contains(u, 1e-9));

    double step = 0.0;
    for (std::size_t i = 0; i < n; ++i) step = std::max(step, std::abs(u[i] - prev[i]));
    result.last_step = step;
    result.iterations = iter;

    if (options.checkpoint_every > 0 && iter % options.checkpoint_every == 0) {
      if (options.observer) options.observer(iter, u);
      if (options.should_abort && options.should_abort()) {
        result.aborted = true;
        break;
      }
    }

    bool done = false;
    if (stop.mode == StopMode::per_step) {
      quiet_steps = step < stop.delta ? quiet_steps + 1 : 0;
      done = quiet_steps >= stop.window_n;
    } else {
      // ring[iter % N] holds u^{iter-N} before being overwritten.
      Vector& old = ring[static_cast<std::size_t>(iter) % window];
      if (iter >= stop.window_n) {
        double disp = 0.0;
        for (std::size_t i = 0; i < n; ++i) disp = std::max(disp, std::abs(u[i] - old[i]));
        done = disp < stop.delta;
      }
      old = u;
    }
    if (done) {
      converged = true;
      break;
    }
  }
  result.hit_cap = !result.aborted && !converged;
  result.solution = std::move(u);
  return result;
}

double check_gradient(const SmoothObjective& objective, std::span<const double> point,
                      double fd_step) {
  if (!(fd_step > 0.0)) throw ContractViolation("check_gradient: fd_step must be > 0");
  const std::size_t n = point.size();
  if (objective.dimension() != n) throw ContractViolation("check_gradient: dimension mismatch");
  Vector analytic(n);
  objective.value_and_gradient(point, analytic);
  Vector x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double orig = x[i];
    x[i] = orig + fd_step;
    const double fp = objective.value(x);
    x[i] = orig - fd_step;
    const double fm = objective.value(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalFailure("check_gradient: non-finite value at perturbed point", x);
    }
    const double fd = (fp - fm) / (2.0 * fd_step);
    const double scale = std::max({1.0, std::abs(fd), std::abs(analytic[i])});
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  return worst;
}

Vector gradient_mapping(const FeasibleSet& set, std::span<const double> u,
                        std::span<const double> grad, double eta) {
  Vector trial(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] - eta * grad[i];
  set.project(trial);
  for (std::size_t i = 0; i < u.size(); ++i) trial[i] = (u[i] - trial[i]) / eta;
  return trial;
}

}  // namespace pga
