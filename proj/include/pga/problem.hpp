#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pga/opt_core.hpp"

namespace pga {

/// Computes constraint weights w from constraint values f (same length T).
using ConstraintWeighting = std::function<void(std::span<const double> f, std::span<double> w)>;

/// Problem class: minimise an increasing J(u) subject to non-decreasing
/// f_i(u_{i-n_w..i}) >= q_i, i = 1..T, over a product feasible set U.
///
/// Implementations provide the objective with its gradient, the constraint
/// values, and vector-Jacobian products sum_i w_i grad f_i(u); every solver
/// gradient is assembled from those pieces.
class PenaltyProblem {
 public:
  virtual ~PenaltyProblem() = default;

  virtual std::string name() const = 0;
  /// Number of constraints T.
  virtual std::size_t horizon() const = 0;
  /// Length of the decision vector u.
  virtual std::size_t dimension() const = 0;
  /// Number of past decisions each constraint sees.
  virtual std::size_t window() const = 0;
  virtual const FeasibleSet& feasible_set() const = 0;
  virtual std::span<const double> rhs() const = 0;

  virtual double objective(std::span<const double> u) const = 0;
  virtual void objective_gradient(std::span<const double> u, std::span<double> grad) const = 0;

  virtual Vector constraints(std::span<const double> u) const = 0;
  /// grad += sum_i weights[i] * grad f_i(u)
  virtual void constraints_vjp(std::span<const double> u, std::span<const double> weights,
                               std::span<double> grad) const = 0;

  /// Evaluates f(u), derives weights from it and accumulates the weighted
  /// constraint gradient into `grad`. Returns f(u). The default performs two
  /// passes; domains with an expensive forward pass override it.
  virtual Vector constraints_with_vjp(std::span<const double> u, const ConstraintWeighting& weigh,
                                      std::span<double> grad) const;

  /// Decision coordinates that belong to time step i (0-based).
  virtual std::vector<std::size_t> step_coordinates(std::size_t i) const = 0;
};

/// Per-constraint feasibility tolerance 1e-6 * max(1, |q_i|).
double feasibility_tolerance(double q);

struct Infeasibility {
  double gamma_max_abs = 0.0;
  long worst_index = -1;
  double signed_worst = 0.0;
};

/// Largest |f_i - q_i| among strictly violated constraints, or the sentinel
/// (0, -1, 0) when nothing is violated.
Infeasibility max_infeasibility(const PenaltyProblem& problem, std::span<const double> u);
Infeasibility max_infeasibility(std::span<const double> f, std::span<const double> q);

/// True when every f_i - q_i >= -feasibility_tolerance(q_i).
bool is_feasible(std::span<const double> f, std::span<const double> q);
bool is_feasible(const PenaltyProblem& problem, std::span<const double> u);

/// J(u) + C * sum_i (f_i(u) - q_i - eps_i)^2, with the guardrail vector eps
/// (pass an empty span for eps = 0).
double penalty_value(const PenaltyProblem& problem, std::span<const double> u, double C,
                     std::span<const double> epsilon = {});

/// Penalty function as a SmoothObjective for the inner solver.
class PenaltyObjective final : public SmoothObjective {
 public:
  PenaltyObjective(const PenaltyProblem& problem, double C, Vector epsilon = {});

  std::size_t dimension() const override { return problem_.dimension(); }
  double value(std::span<const double> u) const override;
  double value_and_gradient(std::span<const double> u, std::span<double> grad) const override;

  double penalty_parameter() const noexcept { return C_; }
  const Vector& epsilon() const noexcept { return epsilon_; }

 private:
  const PenaltyProblem& problem_;
  double C_;
  Vector epsilon_;
};

/// Augmented Lagrangian J + sum lambda_i h_i + rho * sum h_i^2, h = f - q.
class AugmentedLagrangianObjective final : public SmoothObjective {
 public:
  AugmentedLagrangianObjective(const PenaltyProblem& problem, Vector dual, double rho);

  std::size_t dimension() const override { return problem_.dimension(); }
  double value(std::span<const double> u) const override;
  double value_and_gradient(std::span<const double> u, std::span<double> grad) const override;

 private:
  const PenaltyProblem& problem_;
  Vector dual_;
  double rho_;
};

/// Individual constraint f_i as a SmoothObjective (for gradient checks).
class ConstraintObjective final : public SmoothObjective {
 public:
  ConstraintObjective(const PenaltyProblem& problem, std::size_t index)
      : problem_(problem), index_(index) {}

  std::size_t dimension() const override { return problem_.dimension(); }
  double value(std::span<const double> u) const override;
  double value_and_gradient(std::span<const double> u, std::span<double> grad) const override;

 private:
  const PenaltyProblem& problem_;
  std::size_t index_;
};

/// Full Jacobian of f, row i = grad f_i. Built from T vector-Jacobian products.
std::vector<Vector> constraint_jacobian(const PenaltyProblem& problem, std::span<const double> u);

}  // namespace pga
