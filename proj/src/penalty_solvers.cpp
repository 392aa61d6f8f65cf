#include "pga/penalty_solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>

#include "pga/error.hpp"

namespace pga {

std::vector<std::size_t> SolverTrace::outer_boundaries() const {
  std::vector<std::size_t> out;
  long last = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].outer_iter > last) {
      out.push_back(r);
      last = records[r].outer_iter;
    }
  }
  return out;
}

std::vector<double> outer_iteration_durations(const SolverTrace& trace) {
  std::vector<double> out;
  double prev = trace.records.empty() ? 0.0 : trace.records.front().wall_time_s;
  for (std::size_t r : trace.outer_boundaries()) {
    out.push_back(trace.records[r].wall_time_s - prev);
    prev = trace.records[r].wall_time_s;
  }
  return out;
}

void guardrail_update(GuardrailState& state, std::span<const double> gamma) {
  if (gamma.size() != state.epsilon.size()) throw ContractViolation("guardrail_update: size mismatch");
  state.outer_k += 1;
  const double k = static_cast<double>(state.outer_k);
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    state.epsilon[i] = std::max(0.0, state.epsilon[i] - gamma[i] / k);
  }
}

IpddState IpddState::initial(std::size_t T, double rho0) {
  IpddState s;
  s.dual.assign(T, 0.0);
  s.rho = rho0;
  return s;
}

void validate(const IpddState& s) {
  if (!(s.rho > 0.0)) throw ContractViolation("IPDD rho must be positive");
  if (!(s.rho_growth > 1.0)) throw ContractViolation("IPDD rho_growth must exceed 1");
  if (!(s.rho_max >= s.rho)) throw ContractViolation("IPDD rho_max must be >= rho");
  if (!(s.violation_shrink > 0.0 && s.violation_shrink < 1.0)) {
    throw ContractViolation("IPDD violation_shrink must lie in (0, 1)");
  }
}

void ipdd_dual_update(IpddState& state, std::span<const double> h) {
  if (h.size() != state.dual.size()) throw ContractViolation("ipdd_dual_update: size mismatch");
  for (std::size_t i = 0; i < h.size(); ++i) state.dual[i] += 2.0 * state.rho * h[i];
  const double violation = max_abs(h);
  if (violation > state.violation_shrink * state.previous_violation) {
    state.rho = std::min(state.rho_max, state.rho_growth * state.rho);
  }
  state.previous_violation = violation;
}

Clock steady_clock_seconds() {
  const auto t0 = std::chrono::steady_clock::now();
  return [t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
}

namespace {

class Recorder {
 public:
  Recorder(const PenaltyProblem& problem, const SolverOptions& options, std::string name)
      : problem_(problem), options_(options), clock_(options.clock ? options.clock : steady_clock_seconds()) {
    trace_.solver_name = std::move(name);
    t0_ = clock_();
  }

  double elapsed() const { return clock_() - t0_; }

  TraceRecord& add(long outer, long inner_cum, std::span<const double> u) {
    TraceRecord r;
    r.wall_time_s = elapsed();
    r.outer_iter = outer;
    r.inner_iters_cum = inner_cum;
    r.objective = problem_.objective(u);
    const Vector f = problem_.constraints(u);
    r.max_infeasibility = max_infeasibility(f, problem_.rhs()).gamma_max_abs;
    r.feasible = is_feasible(f, problem_.rhs());
    if (options_.record_iterates) r.iterate.assign(u.begin(), u.end());
    trace_.records.push_back(std::move(r));
    return trace_.records.back();
  }

  SolverTrace& trace() { return trace_; }

 private:
  const PenaltyProblem& problem_;
  const SolverOptions& options_;
  Clock clock_;
  double t0_ = 0.0;
  SolverTrace trace_;
};

void check_start(const PenaltyProblem& problem, const Vector& start) {
  if (start.size() != problem.dimension()) throw ContractViolation("start has the wrong dimension");
  if (!problem.feasible_set().contains(start, 1e-9)) {
    throw ContractViolation("start lies outside the feasible set");
  }
}

std::string echo(const char* solver, double param, const SolverOptions& o) {
  std::ostringstream s;
  s << "solver=" << solver << " param=" << param << " lr=" << o.adam.learning_rate
    << " N=" << o.stop.window_n << " delta=" << o.stop.delta << " time_limit_s=" << o.time_limit_s;
  return s.str();
}

// Shared outer loop of PGA and IPDD. `inner` runs one inner minimisation from
// u and returns it; `update` consumes the constraint residuals f - q.
template <typename MakeObjective, typename Update>
void outer_loop(const PenaltyProblem& problem, const Vector& start, const SolverOptions& options,
                Recorder& rec, OuterResult& result, MakeObjective make_objective, Update update) {
  Vector u = start;
  rec.add(0, 0, u);
  long inner_total = 0;
  long outer = 0;
  const auto q = problem.rhs();
  bool timed_out = false;
  while (true) {
    InnerOptions inner_opts;
    inner_opts.checkpoint_every = options.checkpoint_every;
    inner_opts.observer = [&](long it, std::span<const double> x) { rec.add(outer, inner_total + it, x); };
    inner_opts.should_abort = [&] { return rec.elapsed() >= options.time_limit_s; };
    const auto objective = make_objective();
    InnerResult inner = inner_solve(*objective, problem.feasible_set(), u, options.adam, options.stop, inner_opts);
    inner_total += inner.iterations;
    u = std::move(inner.solution);
    if (inner.aborted) {
      timed_out = true;
      rec.trace().notes.push_back("time limit reached inside an inner solve");
      break;
    }
    outer += 1;
    const Vector f = problem.constraints(u);
    Vector residual(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) residual[i] = f[i] - q[i];
    const TraceRecord& r = rec.add(outer, inner_total, u);
    if (r.feasible && r.objective < result.best_objective) {
      if (!result.best_feasible) result.time_to_first_feasible_s = r.wall_time_s;
      result.best_feasible = u;
      result.best_objective = r.objective;
    }
    update(u, residual);
    if (rec.elapsed() >= options.time_limit_s) {
      timed_out = true;
      break;
    }
    if (options.max_outer_iters > 0 && outer >= options.max_outer_iters) break;
  }
  if (timed_out) rec.trace().notes.push_back("stopped on time limit");
  if (!result.best_feasible) rec.trace().notes.push_back("no feasible iterate found within the budget");
  result.last = std::move(u);
  result.outer_iterations = outer;
  result.inner_iterations = inner_total;
}

}  // namespace

PenaltyMethodResult penalty_method(const PenaltyProblem& problem, double C, const Vector& start,
                                   const SolverOptions& options) {
  check_start(problem, start);
  Recorder rec(problem, options, "pm");
  rec.trace().config_echo = echo("pm", C, options);
  rec.add(0, 0, start);
  PenaltyObjective objective(problem, C);
  InnerOptions inner_opts;
  inner_opts.checkpoint_every = options.checkpoint_every;
  inner_opts.observer = [&](long it, std::span<const double> x) { rec.add(0, it, x); };
  inner_opts.should_abort = [&] { return rec.elapsed() >= options.time_limit_s; };
  InnerResult inner = inner_solve(objective, problem.feasible_set(), start, options.adam, options.stop, inner_opts);
  rec.add(1, inner.iterations, inner.solution);
  if (inner.hit_cap) rec.trace().notes.push_back("inner iteration cap reached");
  if (inner.aborted) rec.trace().notes.push_back("time limit reached inside the inner solve");

  PenaltyMethodResult out;
  out.inner_iterations = inner.iterations;
  out.hit_cap = inner.hit_cap;
  out.solution = std::move(inner.solution);
  out.trace = std::move(rec.trace());
  return out;
}

PgaResult pga(const PenaltyProblem& problem, double C, const Vector& start,
              const SolverOptions& options) {
  check_start(problem, start);
  if (!(options.time_limit_s > 0.0)) throw ContractViolation("pga: time limit must be positive");
  if (!(C > 0.0)) throw ContractViolation("pga: C must be positive");
  Recorder rec(problem, options, "pga");
  rec.trace().config_echo = echo("pga", C, options);
  PgaResult result;
  result.guardrail = GuardrailState::zeros(problem.horizon());
  outer_loop(
      problem, start, options, rec, result,
      [&] { return std::make_unique<PenaltyObjective>(problem, C, result.guardrail.epsilon); },
      [&](const Vector& u, const Vector& gamma) {
        guardrail_update(result.guardrail, gamma);
        if (options.on_guardrail) options.on_guardrail(u, result.guardrail);
      });
  result.trace = std::move(rec.trace());
  return result;
}

IpddResult ipdd(const PenaltyProblem& problem, IpddState state, const Vector& start,
                const SolverOptions& options) {
  check_start(problem, start);
  if (!(options.time_limit_s > 0.0)) throw ContractViolation("ipdd: time limit must be positive");
  if (state.dual.empty()) state.dual.assign(problem.horizon(), 0.0);
  if (state.dual.size() != problem.horizon()) throw ContractViolation("ipdd: dual size mismatch");
  validate(state);
  Recorder rec(problem, options, "ipdd");
  rec.trace().config_echo = echo("ipdd", state.rho, options);
  IpddResult result;
  result.state = std::move(state);
  outer_loop(
      problem, start, options, rec, result,
      [&] {
        return std::make_unique<AugmentedLagrangianObjective>(problem, result.state.dual, result.state.rho);
      },
      [&](const Vector&, const Vector& h) { ipdd_dual_update(result.state, h); });
  result.trace = std::move(rec.trace());
  return result;
}

PropertyReport verify_proposition_1(const PenaltyProblem& problem, double C,
                                    const std::vector<Vector>& points) {
  PropertyReport report;
  PenaltyObjective objective(problem, C);
  const auto q = problem.rhs();
  Vector grad(problem.dimension());
  for (const Vector& u : points) {
    const Vector f = problem.constraints(u);
    bool satisfied = true;
    for (std::size_t i = 0; i < f.size(); ++i) satisfied = satisfied && f[i] - q[i] >= 0.0;
    if (!satisfied) {
      report.skipped += 1;
      continue;
    }
    report.checked += 1;
    objective.value_and_gradient(u, grad);
    for (std::size_t j = 0; j < grad.size(); ++j) {
      if (grad[j] < -1e-8) {
        report.passed = false;
        std::ostringstream s;
        s << "d/du[" << j << "] = " << grad[j] << " at point #" << report.checked - 1;
        report.violations.push_back(s.str());
      }
    }
  }
  return report;
}

double achieved_gradient_norm(const PenaltyProblem& problem, double C, std::span<const double> u,
                              std::span<const double> epsilon) {
  PenaltyObjective objective(problem, C, Vector(epsilon.begin(), epsilon.end()));
  Vector grad(problem.dimension());
  objective.value_and_gradient(u, grad);
  return max_abs(gradient_mapping(problem.feasible_set(), u, grad));
}

PropertyReport verify_proposition_3(const PenaltyProblem& problem, double C,
                                    std::span<const double> minimum_point,
                                    std::span<const double> epsilon_new, double tol) {
  PropertyReport report;
  PenaltyObjective shifted(problem, C, Vector(epsilon_new.begin(), epsilon_new.end()));
  Vector grad(problem.dimension());
  shifted.value_and_gradient(minimum_point, grad);
  const Vector step = gradient_mapping(problem.feasible_set(), minimum_point, grad);
  report.checked = static_cast<long>(step.size());
  for (std::size_t j = 0; j < step.size(); ++j) {
    if (step[j] > tol) {
      report.passed = false;
      std::ostringstream s;
      s << "coordinate " << j << " would decrease: projected gradient " << step[j] << " > tol " << tol;
      report.violations.push_back(s.str());
    }
  }
  return report;
}

}  // namespace pga
