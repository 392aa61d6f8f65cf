#include "pga/ndim_problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pga/error.hpp"

namespace pga {

namespace {

void require3(std::span<const double> u) {
  if (u.size() != 3) throw ContractViolation("ndim problem expects three coordinates");
}

}  // namespace

NdimProblem::NdimProblem(double lo, double hi) : NdimProblem({lo, lo, lo}, {hi, hi, hi}) {}

NdimProblem::NdimProblem(std::array<double, 3> lo, std::array<double, 3> hi)
    : set_(FeasibleSet::box(Vector(lo.begin(), lo.end()), Vector(hi.begin(), hi.end()))) {}

NdimProblem::Evaluation NdimProblem::evaluate(std::span<const double> u) {
  require3(u);
  const double x = u[0], y = u[1], z = u[2];
  Evaluation e;
  e.J = x + y + z;
  e.grad_J = {1.0, 1.0, 1.0};
  e.f[0] = std::exp(0.1 + 0.75 * x);
  e.f[1] = std::exp(0.05 + x + 0.5 * y);
  e.f[2] = std::exp(0.1 * x + 0.5 * y + z);
  for (double v : e.f) {
    if (!std::isfinite(v)) throw NumericalFailure("ndim evaluate: overflow", Vector(u.begin(), u.end()));
  }
  e.grad_f[0] = {0.75 * e.f[0], 0.0, 0.0};
  e.grad_f[1] = {e.f[1], 0.5 * e.f[1], 0.0};
  e.grad_f[2] = {0.1 * e.f[2], 0.5 * e.f[2], e.f[2]};
  return e;
}

std::array<double, 3> NdimProblem::tight_point() {
  const double x = (std::log(15.0) - 0.1) / 0.75;
  const double y = 2.0 * (std::log(100.0) - 0.05 - x);
  const double z = std::log(10.0) - 0.1 * x - 0.5 * y;
  return {x, y, z};
}

double NdimProblem::objective(std::span<const double> u) const {
  require3(u);
  return u[0] + u[1] + u[2];
}

void NdimProblem::objective_gradient(std::span<const double> u, std::span<double> grad) const {
  require3(u);
  std::fill(grad.begin(), grad.end(), 1.0);
}

Vector NdimProblem::constraints(std::span<const double> u) const {
  const Evaluation e = evaluate(u);
  return {e.f.begin(), e.f.end()};
}

void NdimProblem::constraints_vjp(std::span<const double> u, std::span<const double> weights,
                                  std::span<double> grad) const {
  const Evaluation e = evaluate(u);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) grad[j] += weights[i] * e.grad_f[i][j];
  }
}

namespace {

bool feasible_exact(const NdimProblem& p, std::span<const double> u) {
  const auto f = p.constraints(u);
  const auto q = p.rhs();
  for (std::size_t i = 0; i < 3; ++i) {
    if (f[i] - q[i] < -1e-12 * std::max(1.0, std::abs(q[i]))) return false;
  }
  return true;
}

}  // namespace

std::optional<OracleResult> oracle_optimum(const NdimProblem& problem, double grid_step) {
  if (!(grid_step > 0.0)) throw ContractViolation("oracle_optimum: grid_step must be > 0");
  const Vector& lo = problem.feasible_set().box_lo();
  const Vector& hi = problem.feasible_set().box_hi();
  auto count = [&](std::size_t d) {
    return static_cast<long>(std::floor((hi[d] - lo[d]) / grid_step + 1e-9)) + 1;
  };
  const long nx = count(0), ny = count(1), nz = count(2);

  std::optional<OracleResult> best;
  Vector u(3);
  // J and every constraint are monotone in z, so the first feasible z of each
  // (x, y) column is the best point of that column.
  for (long ix = 0; ix < nx; ++ix) {
    u[0] = lo[0] + static_cast<double>(ix) * grid_step;
    for (long iy = 0; iy < ny; ++iy) {
      u[1] = lo[1] + static_cast<double>(iy) * grid_step;
      u[2] = hi[2];
      if (!feasible_exact(problem, u)) continue;
      // Smallest grid z satisfying f3 >= 10: start from the analytic bound.
      const double z_need = std::log(10.0) - 0.1 * u[0] - 0.5 * u[1];
      long iz = std::max(0L, static_cast<long>(std::ceil((z_need - lo[2]) / grid_step)) - 1);
      for (; iz < nz; ++iz) {
        u[2] = lo[2] + static_cast<double>(iz) * grid_step;
        if (feasible_exact(problem, u)) break;
      }
      if (iz >= nz) continue;
      const double J = problem.objective(u);
      if (!best || J < best->objective) best = OracleResult{u, J};
    }
  }
  if (!best) return std::nullopt;

  // Coordinate refinement: push each coordinate down to its tightest feasible value.
  Vector v = best->point;
  for (int sweep = 0; sweep < 50; ++sweep) {
    const Vector before = v;
    for (std::size_t d = 0; d < 3; ++d) {
      double feasible_hi = v[d];
      double infeasible_lo = lo[d];
      Vector probe = v;
      probe[d] = lo[d];
      if (feasible_exact(problem, probe)) {
        v[d] = lo[d];
        continue;
      }
      for (int it = 0; it < 100 && feasible_hi - infeasible_lo > 1e-14; ++it) {
        probe[d] = 0.5 * (feasible_hi + infeasible_lo);
        if (feasible_exact(problem, probe)) {
          feasible_hi = probe[d];
        } else {
          infeasible_lo = probe[d];
        }
      }
      v[d] = feasible_hi;
    }
    if (max_abs(Vector{v[0] - before[0], v[1] - before[1], v[2] - before[2]}) < 1e-15) break;
  }
  best->point = v;
  best->objective = problem.objective(v);
  return best;
}

}  // namespace pga
