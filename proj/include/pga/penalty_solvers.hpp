#pragma once

// Outer algorithms over a PenaltyProblem: the standard penalty method, the
// penalty-based guardrail algorithm (PGA) and the increasing-penalty dual
// decomposition (IPDD) baseline, plus checks of the monotone-penalty
// properties the guardrail update relies on.

#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pga/opt_core.hpp"
#include "pga/problem.hpp"

namespace pga {

struct TraceRecord {
  double wall_time_s = 0.0;
  long outer_iter = 0;
  long inner_iters_cum = 0;
  double objective = 0.0;
  double max_infeasibility = 0.0;
  bool feasible = false;
  Vector iterate;
};

/// Time-stamped solver progress. Records with a new outer_iter value mark the
/// end of that outer iteration; records sharing the previous value are
/// intermediate checkpoints taken every few hundred inner iterations.
struct SolverTrace {
  std::string solver_name;
  std::string config_echo;
  std::vector<TraceRecord> records;
  std::vector<std::string> notes;

  /// Indices of the records that close an outer iteration.
  std::vector<std::size_t> outer_boundaries() const;
};

/// Wall times of each completed outer iteration, derived from the trace.
std::vector<double> outer_iteration_durations(const SolverTrace& trace);

struct GuardrailState {
  Vector epsilon;
  long outer_k = 0;

  static GuardrailState zeros(std::size_t T) { return {Vector(T, 0.0), 0}; }
};

/// k <- k + 1; eps_i <- max(0, eps_i - gamma_i / k).
void guardrail_update(GuardrailState& state, std::span<const double> gamma);

struct IpddState {
  Vector dual;
  double rho = 0.05;
  double rho_growth = 2.0;
  double rho_max = 1e8;
  double violation_shrink = 0.9;
  /// max |h| of the previous outer iteration (infinite before the first).
  double previous_violation = std::numeric_limits<double>::infinity();

  static IpddState initial(std::size_t T, double rho0);
};

void validate(const IpddState& state);

/// lambda_i <- lambda_i + 2 rho h_i, then grow rho when max|h| failed to
/// shrink by violation_shrink relative to the previous outer iteration.
void ipdd_dual_update(IpddState& state, std::span<const double> h);

/// Monotonic wall clock shared by a solver run; injectable for tests.
using Clock = std::function<double()>;
Clock steady_clock_seconds();

struct SolverOptions {
  AdamConfig adam;
  GdStopRule stop;
  double time_limit_s = 60.0;
  /// Stop after this many outer iterations even if time remains (0 = no cap).
  long max_outer_iters = 0;
  long checkpoint_every = 500;
  /// Snapshot the iterate in every trace record.
  bool record_iterates = true;
  Clock clock;
  /// Invoked after each PGA outer iteration with (minimum point, new epsilon)
  /// before the next inner solve starts; used by property tests.
  std::function<void(std::span<const double> u, const GuardrailState& next)> on_guardrail;
};

struct PenaltyMethodResult {
  Vector solution;
  long inner_iterations = 0;
  bool hit_cap = false;
  SolverTrace trace;
};

/// One projected-Adam minimisation of J + C * sum (f_i - q_i)^2 from `start`.
PenaltyMethodResult penalty_method(const PenaltyProblem& problem, double C, const Vector& start,
                                   const SolverOptions& options);

struct OuterResult {
  std::optional<Vector> best_feasible;
  double best_objective = std::numeric_limits<double>::infinity();
  double time_to_first_feasible_s = -1.0;
  Vector last;
  long outer_iterations = 0;
  long inner_iterations = 0;
  SolverTrace trace;
};

struct PgaResult : OuterResult {
  GuardrailState guardrail;
};

/// Penalty-based guardrail algorithm, run until the time limit (or the outer
/// cap) is reached. Returns the best feasible iterate seen and the last one.
PgaResult pga(const PenaltyProblem& problem, double C, const Vector& start,
              const SolverOptions& options);

struct IpddResult : OuterResult {
  IpddState state;
};

IpddResult ipdd(const PenaltyProblem& problem, IpddState state, const Vector& start,
                const SolverOptions& options);

struct PropertyReport {
  bool passed = true;
  long checked = 0;
  long skipped = 0;
  std::vector<std::string> violations;
};

/// At every sample point with all f_i - q_i >= 0, every component of the
/// penalty gradient must be >= -1e-8. Points with a violated constraint are
/// skipped.
PropertyReport verify_proposition_1(const PenaltyProblem& problem, double C,
                                    const std::vector<Vector>& points);

/// At an (approximate) minimum of the eps = 0 penalty, the projected first
/// step on the penalty with right-hand sides q + eps must not decrease any
/// coordinate by more than `tol`. The gradient mapping is used so that
/// projection-active coordinates are treated correctly.
PropertyReport verify_proposition_3(const PenaltyProblem& problem, double C,
                                    std::span<const double> minimum_point,
                                    std::span<const double> epsilon_new, double tol);

/// Max-norm of the gradient mapping of the eps-penalty at u.
double achieved_gradient_norm(const PenaltyProblem& problem, double C, std::span<const double> u,
                              std::span<const double> epsilon = {});

}  // namespace pga
