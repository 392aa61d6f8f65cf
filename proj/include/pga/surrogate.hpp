#pragma once

// Recurrent unrolling of a trained state-transition network g and output
// network f over the planning horizon, and the penalty problem built on it.

#include <filesystem>
#include <memory>

#include "pga/monotone_net.hpp"
#include "pga/problem.hpp"

namespace pga::nn {

struct SurrogateModel {
  MonotoneNet g;
  MonotoneNet f;
  FeatureScaling scaling;
  std::size_t window_n = 11;

  void validate() const;
  nlohmann::json to_json() const;
  static SurrogateModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SurrogateModel load(const std::filesystem::path& path);
};

/// Decisions preceding the horizon and the state they left behind.
struct UnrollStart {
  dhs::SimState s0;
  double h_before = 0.0;
  double p_before = 0.0;
};

/// Warm-up at constant heat `heat_mw` with p at the region's lower boundary.
UnrollStart warmup_start(const dhs::DhsParams& params, double heat_mw);

struct UnrollResult {
  Vector y;  // MW, one per step
  /// Normalized states s_1..s_T.
  std::vector<Eigen::VectorXd> states;
};

/// y_i = f(s_i, window_i), s_i = g(s_{i-1}, window_i), for u = (h_1, p_1, ...).
UnrollResult unroll(const SurrogateModel& model, std::span<const double> u, const UnrollStart& start);

/// grad += sum_i weights[i] * d y_i / d u by reverse accumulation.
void unroll_vjp(const SurrogateModel& model, std::span<const double> u, const UnrollStart& start,
                std::span<const double> weights, std::span<double> grad);

class SurrogateDhsProblem final : public PenaltyProblem {
 public:
  SurrogateDhsProblem(SurrogateModel model, std::vector<double> demand, dhs::DhsParams params,
                      double warmup_heat_mw = -1.0);

  std::string name() const override { return "dhs_surrogate"; }
  std::size_t horizon() const override { return demand_.size(); }
  std::size_t dimension() const override { return 2 * demand_.size(); }
  std::size_t window() const override { return model_.window_n; }
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

  const SurrogateModel& model() const noexcept { return model_; }
  const UnrollStart& start() const noexcept { return start_; }
  const dhs::DhsParams& params() const noexcept { return params_; }

 private:
  SurrogateModel model_;
  std::vector<double> demand_;
  dhs::DhsParams params_;
  UnrollStart start_;
  FeasibleSet set_;
};

std::unique_ptr<SurrogateDhsProblem> make_surrogate_problem(SurrogateModel model, std::vector<double> demand,
                                                            const dhs::DhsParams& params,
                                                            double warmup_heat_mw = -1.0);

}  // namespace pga::nn
