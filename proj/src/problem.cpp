#include "pga/problem.hpp"

#include <algorithm>
#include <cmath>

#include "pga/error.hpp"

namespace pga {

Vector PenaltyProblem::constraints_with_vjp(std::span<const double> u,
                                            const ConstraintWeighting& weigh,
                                            std::span<double> grad) const {
  Vector f = constraints(u);
  Vector w(f.size());
  weigh(f, w);
  constraints_vjp(u, w, grad);
  return f;
}

double feasibility_tolerance(double q) { return 1e-6 * std::max(1.0, std::abs(q)); }

Infeasibility max_infeasibility(std::span<const double> f, std::span<const double> q) {
  if (f.size() != q.size()) throw ContractViolation("max_infeasibility: size mismatch");
  Infeasibility out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = f[i] - q[i];
    if (r < 0.0 && -r > out.gamma_max_abs) {
      out.gamma_max_abs = -r;
      out.worst_index = static_cast<long>(i);
      out.signed_worst = r;
    }
  }
  return out;
}

Infeasibility max_infeasibility(const PenaltyProblem& problem, std::span<const double> u) {
  const Vector f = problem.constraints(u);
  return max_infeasibility(f, problem.rhs());
}

bool is_feasible(std::span<const double> f, std::span<const double> q) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] - q[i] < -feasibility_tolerance(q[i])) return false;
  }
  return true;
}

bool is_feasible(const PenaltyProblem& problem, std::span<const double> u) {
  const Vector f = problem.constraints(u);
  return is_feasible(f, problem.rhs());
}

namespace {

double penalty_from(const PenaltyProblem& problem, double J, std::span<const double> f, double C,
                    std::span<const double> epsilon) {
  const auto q = problem.rhs();
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = f[i] - q[i] - (epsilon.empty() ? 0.0 : epsilon[i]);
    sum += r * r;
  }
  return J + C * sum;
}

void check_epsilon(const PenaltyProblem& problem, std::span<const double> epsilon) {
  if (!epsilon.empty() && epsilon.size() != problem.horizon()) {
    throw ContractViolation("guardrail vector length must equal the horizon");
  }
  for (double e : epsilon) {
    if (!(e >= 0.0)) throw ContractViolation("guardrail entries must be non-negative");
  }
}

}  // namespace

double penalty_value(const PenaltyProblem& problem, std::span<const double> u, double C,
                     std::span<const double> epsilon) {
  if (!(C > 0.0)) throw ContractViolation("penalty parameter C must be positive");
  check_epsilon(problem, epsilon);
  const double J = problem.objective(u);
  const Vector f = problem.constraints(u);
  const double v = penalty_from(problem, J, f, C, epsilon);
  if (!std::isfinite(v)) throw NumericalFailure("penalty_value: non-finite", Vector(u.begin(), u.end()));
  return v;
}

PenaltyObjective::PenaltyObjective(const PenaltyProblem& problem, double C, Vector epsilon)
    : problem_(problem), C_(C), epsilon_(std::move(epsilon)) {
  if (!(C > 0.0)) throw ContractViolation("penalty parameter C must be positive");
  if (epsilon_.empty()) epsilon_.assign(problem.horizon(), 0.0);
  check_epsilon(problem, epsilon_);
}

double PenaltyObjective::value(std::span<const double> u) const {
  return penalty_value(problem_, u, C_, epsilon_);
}

double PenaltyObjective::value_and_gradient(std::span<const double> u,
                                            std::span<double> grad) const {
  problem_.objective_gradient(u, grad);
  const double J = problem_.objective(u);
  const auto q = problem_.rhs();
  const Vector f = problem_.constraints_with_vjp(
      u,
      [&](std::span<const double> fv, std::span<double> w) {
        for (std::size_t i = 0; i < fv.size(); ++i) w[i] = 2.0 * C_ * (fv[i] - q[i] - epsilon_[i]);
      },
      grad);
  return penalty_from(problem_, J, f, C_, epsilon_);
}

AugmentedLagrangianObjective::AugmentedLagrangianObjective(const PenaltyProblem& problem,
                                                           Vector dual, double rho)
    : problem_(problem), dual_(std::move(dual)), rho_(rho) {
  if (dual_.size() != problem.horizon()) throw ContractViolation("dual vector length must equal the horizon");
  if (!(rho > 0.0)) throw ContractViolation("rho must be positive");
}

double AugmentedLagrangianObjective::value(std::span<const double> u) const {
  const Vector f = problem_.constraints(u);
  const auto q = problem_.rhs();
  double v = problem_.objective(u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double h = f[i] - q[i];
    v += dual_[i] * h + rho_ * h * h;
  }
  return v;
}

double AugmentedLagrangianObjective::value_and_gradient(std::span<const double> u,
                                                        std::span<double> grad) const {
  problem_.objective_gradient(u, grad);
  double v = problem_.objective(u);
  const auto q = problem_.rhs();
  const Vector f = problem_.constraints_with_vjp(
      u,
      [&](std::span<const double> fv, std::span<double> w) {
        for (std::size_t i = 0; i < fv.size(); ++i) w[i] = dual_[i] + 2.0 * rho_ * (fv[i] - q[i]);
      },
      grad);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double h = f[i] - q[i];
    v += dual_[i] * h + rho_ * h * h;
  }
  return v;
}

double ConstraintObjective::value(std::span<const double> u) const {
  return problem_.constraints(u).at(index_);
}

double ConstraintObjective::value_and_gradient(std::span<const double> u,
                                               std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  Vector w(problem_.horizon(), 0.0);
  w.at(index_) = 1.0;
  problem_.constraints_vjp(u, w, grad);
  return value(u);
}

std::vector<Vector> constraint_jacobian(const PenaltyProblem& problem, std::span<const double> u) {
  const std::size_t T = problem.horizon();
  std::vector<Vector> rows(T, Vector(problem.dimension(), 0.0));
  Vector w(T, 0.0);
  for (std::size_t i = 0; i < T; ++i) {
    w[i] = 1.0;
    problem.constraints_vjp(u, w, rows[i]);
    w[i] = 0.0;
  }
  return rows;
}

}  // namespace pga
