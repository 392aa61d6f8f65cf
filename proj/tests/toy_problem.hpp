#pragma once

#include <cmath>
#include <limits>

#include "pga/problem.hpp"

// J = sum u_i, f_i = slope * u_i, one coordinate per step.
class ToyProblem final : public pga::PenaltyProblem {
 public:
  ToyProblem(pga::Vector lo, pga::Vector hi, pga::Vector q, double slope = 1.0)
      : set_(pga::FeasibleSet::box(std::move(lo), std::move(hi))), q_(std::move(q)), slope_(slope) {}

  bool emit_nan = false;

  std::string name() const override { return "toy"; }
  std::size_t horizon() const override { return q_.size(); }
  std::size_t dimension() const override { return q_.size(); }
  std::size_t window() const override { return 0; }
  const pga::FeasibleSet& feasible_set() const override { return set_; }
  std::span<const double> rhs() const override { return q_; }

  double objective(std::span<const double> u) const override {
    double s = 0.0;
    for (double x : u) s += x;
    return s;
  }
  void objective_gradient(std::span<const double>, std::span<double> g) const override {
    for (double& x : g) x = 1.0;
  }
  pga::Vector constraints(std::span<const double> u) const override {
    pga::Vector f(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      f[i] = emit_nan ? std::numeric_limits<double>::quiet_NaN() : slope_ * u[i];
    }
    return f;
  }
  void constraints_vjp(std::span<const double>, std::span<const double> w, std::span<double> g) const override {
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += w[i] * slope_;
  }
  std::vector<std::size_t> step_coordinates(std::size_t i) const override { return {i}; }

 private:
  pga::FeasibleSet set_;
  pga::Vector q_;
  double slope_;
};
