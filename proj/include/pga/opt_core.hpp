#pragma once

// Projected first-order machinery shared by every outer solver: feasible sets
// with Euclidean projection, the Adam update, the inner projected-descent loop
// with its stopping rule, and a central finite-difference gradient check.

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pga {

using Vector = std::vector<double>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Convex polygon in the plane, vertices stored counter-clockwise.
class ConvexPolygon {
 public:
  /// Accepts either orientation; throws ContractViolation if the vertex list
  /// is not strictly convex or has fewer than three vertices.
  explicit ConvexPolygon(std::vector<Point2> vertices);

  const std::vector<Point2>& vertices() const noexcept { return vertices_; }

  bool contains(Point2 p, double tol = 1e-12) const;
  Point2 project(Point2 p) const;

  double min_x() const;
  double max_x() const;
  double min_y() const;
  double max_y() const;

  /// Lowest y on the polygon at abscissa x (x clamped into [min_x, max_x]).
  double lower_y_at(double x) const;
  double upper_y_at(double x) const;

 private:
  std::vector<Point2> vertices_;
};

/// Closed set U that is the product of per-coordinate intervals (box) or of
/// one convex polygon per time step acting on consecutive coordinate pairs.
class FeasibleSet {
 public:
  enum class Kind { box, per_step_polygon };

  static FeasibleSet box(Vector lo, Vector hi);
  static FeasibleSet per_step_polygon(ConvexPolygon polygon, std::size_t steps);

  Kind kind() const noexcept { return kind_; }
  std::size_t dimension() const noexcept { return dimension_; }

  /// In-place Euclidean projection. Identity on points already inside.
  void project(std::span<double> point) const;
  Vector projected(std::span<const double> point) const;

  bool contains(std::span<const double> point, double tol = 1e-9) const;

  /// Componentwise bounding box of the set.
  Vector lower_corner() const;
  Vector upper_corner() const;

  const Vector& box_lo() const noexcept { return lo_; }
  const Vector& box_hi() const noexcept { return hi_; }
  const ConvexPolygon& polygon() const;

 private:
  FeasibleSet() = default;

  Kind kind_ = Kind::box;
  std::size_t dimension_ = 0;
  Vector lo_;
  Vector hi_;
  std::vector<ConvexPolygon> polygon_;  // empty or exactly one
};

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stab = 1e-8;
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step_count = 0;
  AdamConfig config;

  static AdamState fresh(std::size_t n, const AdamConfig& config);
};

/// Bias-corrected Adam update applied to `iterate` in place.
void adam_step(AdamState& state, std::span<double> iterate, std::span<const double> gradient);

enum class StopMode {
  /// Each of the last N steps moved less than delta in max-norm.
  per_step,
  /// The iterate moved less than delta in max-norm across the last N steps.
  window_displacement,
};

struct GdStopRule {
  int window_n = 50;
  double delta = 1e-6;
  long max_inner_iters = 200000;
  StopMode mode = StopMode::window_displacement;
};

void validate(const GdStopRule& stop);

/// Smooth function of the decision vector, minimised by the inner solver.
class SmoothObjective {
 public:
  virtual ~SmoothObjective() = default;
  virtual std::size_t dimension() const = 0;
  virtual double value(std::span<const double> u) const = 0;
  /// Writes the full gradient into `grad` and returns the value.
  virtual double value_and_gradient(std::span<const double> u, std::span<double> grad) const = 0;
};

struct InnerResult {
  Vector solution;
  long iterations = 0;
  bool hit_cap = false;
  /// should_abort fired before the stop rule did.
  bool aborted = false;
  double last_step = 0.0;
};

/// Called every `checkpoint_every` inner iterations with the current iterate.
using InnerObserver = std::function<void(long iteration, std::span<const double> u)>;

struct InnerOptions {
  long checkpoint_every = 500;
  InnerObserver observer;
  /// Polled at every checkpoint; returning true ends the solve early.
  std::function<bool()> should_abort;
};

/// Projected Adam descent u <- P_U(u - adam(grad)) from `start` until the stop
/// rule fires or the iteration cap is reached. Adam moments start at zero.
InnerResult inner_solve(const SmoothObjective& objective, const FeasibleSet& set,
                        Vector start, const AdamConfig& adam, const GdStopRule& stop,
                        const InnerOptions& options = {});

/// Max over coordinates of |analytic - central FD| / max(1, |analytic|, |FD|).
double check_gradient(const SmoothObjective& objective, std::span<const double> point,
                      double fd_step);

/// Projected-gradient residual (u - P_U(u - eta*grad)) / eta.
Vector gradient_mapping(const FeasibleSet& set, std::span<const double> u,
                        std::span<const double> grad, double eta = 1e-6);

double max_abs(std::span<const double> v);
bool all_finite(std::span<const double> v);

}  // namespace pga
