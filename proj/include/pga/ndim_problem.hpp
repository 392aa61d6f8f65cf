#pragma once

#include <array>
#include <optional>

#include "pga/problem.hpp"

namespace pga {

/// Three-variable test problem: minimise x + y + z subject to
///   exp(0.1 + 0.75x)         >= 15
///   exp(0.05 + x + 0.5y)     >= 100
///   exp(0.1x + 0.5y + z)     >= 10
/// Variables play the role of time steps 1..3, so f_3 is the only constraint
/// that sees the last coordinate.
class NdimProblem final : public PenaltyProblem {
 public:
  struct Evaluation {
    double J = 0.0;
    std::array<double, 3> f{};
    std::array<double, 3> grad_J{};
    std::array<std::array<double, 3>, 3> grad_f{};
  };

  explicit NdimProblem(double lo = 0.0, double hi = 10.0);
  NdimProblem(std::array<double, 3> lo, std::array<double, 3> hi);

  static Evaluation evaluate(std::span<const double> u);
  /// Point where all three constraints hold with equality.
  static std::array<double, 3> tight_point();

  std::string name() const override { return "ndim"; }
  std::size_t horizon() const override { return 3; }
  std::size_t dimension() const override { return 3; }
  std::size_t window() const override { return 2; }
  const FeasibleSet& feasible_set() const override { return set_; }
  std::span<const double> rhs() const override { return rhs_; }

  double objective(std::span<const double> u) const override;
  void objective_gradient(std::span<const double> u, std::span<double> grad) const override;
  Vector constraints(std::span<const double> u) const override;
  void constraints_vjp(std::span<const double> u, std::span<const double> weights,
                       std::span<double> grad) const override;
  std::vector<std::size_t> step_coordinates(std::size_t i) const override { return {i}; }

 private:
  FeasibleSet set_;
  Vector rhs_{15.0, 100.0, 10.0};
};

struct OracleResult {
  Vector point;
  double objective = 0.0;
};

/// Exhaustive grid search over the box keeping feasible points, then a local
/// refinement that lowers each coordinate by bisection down to its tightest
/// feasible value. Returns nullopt when no grid point is feasible.
std::optional<OracleResult> oracle_optimum(const NdimProblem& problem, double grid_step);

}  // namespace pga
