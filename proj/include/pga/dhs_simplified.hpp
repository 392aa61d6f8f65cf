#pragma once

// Delivered-heat constraints of the single-pipe network with a fixed inlet
// temperature, zero ambient and zero return temperature. Mass flow follows
// produced heat, m_i = h_i / (c tau_in).

#include <memory>
#include <random>

#include "pga/dhs_physics.hpp"
#include "pga/problem.hpp"

namespace pga::dhs {

/// Delay quantities of one step, frozen while differentiating.
struct StepCache {
  std::size_t gamma = 0;
  std::size_t n_w = 0;
  double R = 0.0;
  double S = 0.0;
};

class SimplifiedDhsProblem final : public PenaltyProblem {
 public:
  /// `warmup_heat_mw` sets the steady operation preceding the horizon
  /// (defaults to the first demand value when negative).
  SimplifiedDhsProblem(std::vector<double> demand, DhsParams params, double warmup_heat_mw = -1.0);

  std::string name() const override { return "dhs_simplified"; }
  std::size_t horizon() const override { return demand_.size(); }
  std::size_t dimension() const override { return 2 * demand_.size(); }
  std::size_t window() const override { return window_; }
  const FeasibleSet& feasible_set() const override { return set_; }
  std::span<const double> rhs() const override { return demand_; }

  double objective(std::span<const double> u) const override;
  void objective_gradient(std::span<const double> u, std::span<double> grad) const override;
  Vector constraints(std::span<const double> u) const override;
  void constraints_vjp(std::span<const double> u, std::span<const double> weights,
                       std::span<double> grad) const override;
  Vector constraints_with_vjp(std::span<const double> u, const ConstraintWeighting& weigh,
                              std::span<double> grad) const override;
  std::vector<std::size_t> step_coordinates(std::size_t i) const override { return {2 * i, 2 * i + 1}; }

  const DhsParams& params() const noexcept { return params_; }
  double warmup_heat() const noexcept { return warmup_heat_; }

  /// Delay quantities at u, recomputed from the flows implied by u.
  std::vector<StepCache> delay_cache(std::span<const double> u) const;
  /// Delivered heat with the delay quantities held at `cache`. Equals
  /// constraints(u) when cache == delay_cache(u).
  Vector delivered_heat_frozen(std::span<const double> u, const std::vector<StepCache>& cache) const;
  /// d y_i / d h_k with delays frozen at u; row i, column k (T x T).
  std::vector<Vector> heat_jacobian(std::span<const double> u) const;

 private:
  /// Warm-up flows followed by the flows of u.
  Vector flows(std::span<const double> u) const;
  double flow_of(double heat_mw) const;
  double flow_slope(double heat_mw) const;

  std::vector<double> demand_;
  DhsParams params_;
  double warmup_heat_ = 0.0;
  std::size_t warmup_steps_ = 0;
  std::size_t window_ = 0;
  FeasibleSet set_;
};

/// Max over (i, coordinate) of |analytic - central FD| / max(1, |analytic|, |FD|)
/// for the constraint Jacobian, with the FD side evaluated on the delays frozen at u.
double frozen_gradient_error(const SimplifiedDhsProblem& problem, std::span<const double> u, double fd_step);

std::unique_ptr<SimplifiedDhsProblem> make_problem(std::vector<double> demand, const DhsParams& params,
                                                   double warmup_heat_mw = -1.0);

/// Draws integer h_i uniformly in [lo, hi], sets p_i to the lowest power the
/// CHP region allows at h_i, and accepts the first draw with every f_i >= q_i.
/// Throws InfeasibleSampler after `max_tries` rejections.
Vector sample_feasible_init(const PenaltyProblem& problem, std::mt19937_64& rng, double lo, double hi,
                            std::size_t max_tries = 20000);

}  // namespace pga::dhs
