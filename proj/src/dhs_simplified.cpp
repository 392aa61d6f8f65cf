#include "pga/dhs_simplified.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "pga/error.hpp"

namespace pga::dhs {

namespace {

constexpr double kWattsPerMegawatt = 1e6;

DhsParams checked(DhsParams p) {
  p.validate();
  if (p.ambient_temp != 0.0 || p.return_temp != 0.0) {
    throw ContractViolation("simplified DHS requires zero ambient and return temperatures");
  }
  if (!(p.supply_temp > 0.0)) throw InvalidTemperature("simplified DHS requires a positive inlet temperature");
  return p;
}

}  // namespace

SimplifiedDhsProblem::SimplifiedDhsProblem(std::vector<double> demand, DhsParams params, double warmup_heat_mw)
    : demand_(std::move(demand)),
      params_(checked(std::move(params))),
      set_(FeasibleSet::per_step_polygon(params_.chp_region(), demand_.size())) {
  if (demand_.empty()) throw ContractViolation("simplified DHS: demand must not be empty");
  for (double q : demand_) {
    if (!std::isfinite(q) || q < 0.0) throw ContractViolation("simplified DHS: demand must be finite and >= 0");
  }
  warmup_heat_ = warmup_heat_mw >= 0.0 ? warmup_heat_mw : demand_.front();
  warmup_steps_ = PipeHistory::required_capacity(params_);
  const double step_mass = flow_of(warmup_heat_) * params_.dt_s;
  window_ = static_cast<std::size_t>(std::ceil(params_.pipe_mass() / step_mass));
}

double SimplifiedDhsProblem::flow_of(double heat_mw) const {
  const double raw = heat_mw * kWattsPerMegawatt / (params_.heat_capacity * params_.supply_temp);
  return std::max(raw, params_.min_flow);
}

double SimplifiedDhsProblem::flow_slope(double heat_mw) const {
  const double beta = kWattsPerMegawatt / (params_.heat_capacity * params_.supply_temp);
  return heat_mw * beta > params_.min_flow ? beta : 0.0;
}

Vector SimplifiedDhsProblem::flows(std::span<const double> u) const {
  if (u.size() != dimension()) throw ContractViolation("simplified DHS: u has the wrong dimension");
  Vector F(warmup_steps_ + horizon(), flow_of(warmup_heat_));
  for (std::size_t i = 0; i < horizon(); ++i) F[warmup_steps_ + i] = flow_of(u[2 * i]);
  return F;
}

namespace {

StepCache cache_at(const Vector& F, std::size_t idx, const DhsParams& p) {
  const double V = p.pipe_mass();
  StepCache c;
  double cum = 0.0;
  std::size_t k = 0;
  for (;; ++k) {
    if (k > idx) throw InsufficientHistory("simplified DHS: warm-up too short for gamma");
    cum += F[idx - k] * p.dt_s;
    if (cum >= V) break;
  }
  c.gamma = k;
  c.R = cum;
  cum = 0.0;
  for (k = 1;; ++k) {
    if (k > idx) throw InsufficientHistory("simplified DHS: warm-up too short for n_w");
    cum += F[idx - k] * p.dt_s;
    if (cum >= V) break;
  }
  c.n_w = k;
  if (c.n_w >= c.gamma + 1) {
    c.S = 0.0;
    for (std::size_t j = 0; j < c.n_w; ++j) c.S += F[idx - j] * p.dt_s;
  } else {
    c.S = c.R;
  }
  return c;
}

struct StepTerms {
  double bracket = 0.0;  // kg
  double E = 0.0;
  double dE_dFi = 0.0;
};

StepTerms terms_at(const Vector& F, std::size_t idx, const StepCache& c, const DhsParams& p) {
  const double V = p.pipe_mass();
  const double Fi = F[idx] * p.dt_s;
  StepTerms t;
  t.bracket = c.R - V + Fi + V - c.S;
  for (std::size_t k = c.gamma + 1; k < c.n_w; ++k) t.bracket += F[idx - k] * p.dt_s;
  const double kappa = p.loss_rate();
  t.E = std::exp(-kappa * (static_cast<double>(c.gamma) + 0.5 + (c.S - c.R) / Fi));
  t.dE_dFi = t.E * kappa * (c.S - c.R) * p.dt_s / (Fi * Fi);
  return t;
}

}  // namespace

std::vector<StepCache> SimplifiedDhsProblem::delay_cache(std::span<const double> u) const {
  const Vector F = flows(u);
  std::vector<StepCache> out(horizon());
  for (std::size_t i = 0; i < horizon(); ++i) out[i] = cache_at(F, warmup_steps_ + i, params_);
  return out;
}

Vector SimplifiedDhsProblem::delivered_heat_frozen(std::span<const double> u,
                                                   const std::vector<StepCache>& cache) const {
  if (cache.size() != horizon()) throw ContractViolation("simplified DHS: cache length mismatch");
  const Vector F = flows(u);
  const double coef = params_.heat_capacity * params_.supply_temp / (params_.dt_s * kWattsPerMegawatt);
  Vector y(horizon());
  for (std::size_t i = 0; i < horizon(); ++i) {
    const StepTerms t = terms_at(F, warmup_steps_ + i, cache[i], params_);
    y[i] = coef * t.bracket * t.E;
  }
  return y;
}

double SimplifiedDhsProblem::objective(std::span<const double> u) const {
  if (u.size() != dimension()) throw ContractViolation("simplified DHS: u has the wrong dimension");
  return schedule_cost(u, params_);
}

void SimplifiedDhsProblem::objective_gradient(std::span<const double> u, std::span<double> grad) const {
  if (u.size() != dimension()) throw ContractViolation("simplified DHS: u has the wrong dimension");
  schedule_cost_gradient(u, params_, grad);
}

Vector SimplifiedDhsProblem::constraints(std::span<const double> u) const {
  return delivered_heat_frozen(u, delay_cache(u));
}

std::vector<Vector> SimplifiedDhsProblem::heat_jacobian(std::span<const double> u) const {
  const std::size_t T = horizon();
  std::vector<Vector> jac(T, Vector(T, 0.0));
  const Vector F = flows(u);
  const double coef = params_.heat_capacity * params_.supply_temp / (params_.dt_s * kWattsPerMegawatt);
  for (std::size_t i = 0; i < T; ++i) {
    const std::size_t idx = warmup_steps_ + i;
    const StepCache c = cache_at(F, idx, params_);
    const StepTerms t = terms_at(F, idx, c, params_);
    jac[i][i] += coef * (params_.dt_s * t.E + t.bracket * t.dE_dFi) * flow_slope(u[2 * i]);
    for (std::size_t k = c.gamma + 1; k < c.n_w && k <= i; ++k) {
      const std::size_t j = i - k;
      jac[i][j] += coef * params_.dt_s * t.E * flow_slope(u[2 * j]);
    }
  }
  return jac;
}

void SimplifiedDhsProblem::constraints_vjp(std::span<const double> u, std::span<const double> weights,
                                           std::span<double> grad) const {
  if (weights.size() != horizon() || grad.size() != dimension()) {
    throw ContractViolation("simplified DHS: vjp shape mismatch");
  }
  const auto jac = heat_jacobian(u);
  for (std::size_t i = 0; i < horizon(); ++i) {
    if (weights[i] == 0.0) continue;
    for (std::size_t k = 0; k <= i; ++k) grad[2 * k] += weights[i] * jac[i][k];
  }
}

Vector SimplifiedDhsProblem::constraints_with_vjp(std::span<const double> u, const ConstraintWeighting& weigh,
                                                  std::span<double> grad) const {
  const std::size_t T = horizon();
  if (grad.size() != dimension()) throw ContractViolation("simplified DHS: vjp shape mismatch");
  const Vector F = flows(u);
  const double coef = params_.heat_capacity * params_.supply_temp / (params_.dt_s * kWattsPerMegawatt);
  std::vector<StepCache> caches(T);
  std::vector<StepTerms> terms(T);
  Vector y(T);
  for (std::size_t i = 0; i < T; ++i) {
    caches[i] = cache_at(F, warmup_steps_ + i, params_);
    terms[i] = terms_at(F, warmup_steps_ + i, caches[i], params_);
    y[i] = coef * terms[i].bracket * terms[i].E;
  }
  Vector w(T, 0.0);
  weigh(y, w);
  for (std::size_t i = 0; i < T; ++i) {
    if (w[i] == 0.0) continue;
    const StepTerms& t = terms[i];
    grad[2 * i] += w[i] * coef * (params_.dt_s * t.E + t.bracket * t.dE_dFi) * flow_slope(u[2 * i]);
    for (std::size_t k = caches[i].gamma + 1; k < caches[i].n_w && k <= i; ++k) {
      const std::size_t j = i - k;
      grad[2 * j] += w[i] * coef * params_.dt_s * t.E * flow_slope(u[2 * j]);
    }
  }
  return y;
}

double frozen_gradient_error(const SimplifiedDhsProblem& problem, std::span<const double> u, double fd_step) {
  if (!(fd_step > 0.0)) throw ContractViolation("frozen_gradient_error: fd_step must be > 0");
  const std::size_t T = problem.horizon();
  const auto cache = problem.delay_cache(u);
  const auto jac = problem.heat_jacobian(u);
  Vector x(u.begin(), u.end());
  double worst = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double orig = x[c];
    x[c] = orig + fd_step;
    const Vector yp = problem.delivered_heat_frozen(x, cache);
    x[c] = orig - fd_step;
    const Vector ym = problem.delivered_heat_frozen(x, cache);
    x[c] = orig;
    for (std::size_t i = 0; i < T; ++i) {
      const double fd = (yp[i] - ym[i]) / (2.0 * fd_step);
      const double analytic = c % 2 == 0 ? jac[i][c / 2] : 0.0;
      const double scale = std::max({1.0, std::abs(fd), std::abs(analytic)});
      worst = std::max(worst, std::abs(fd - analytic) / scale);
    }
  }
  return worst;
}

std::unique_ptr<SimplifiedDhsProblem> make_problem(std::vector<double> demand, const DhsParams& params,
                                                   double warmup_heat_mw) {
  if (demand.size() != params.horizon) {
    throw ContractViolation("make_problem: demand length must equal the horizon");
  }
  return std::make_unique<SimplifiedDhsProblem>(std::move(demand), params, warmup_heat_mw);
}

Vector sample_feasible_init(const PenaltyProblem& problem, std::mt19937_64& rng, double lo, double hi,
                            std::size_t max_tries) {
  const FeasibleSet& set = problem.feasible_set();
  if (set.kind() != FeasibleSet::Kind::per_step_polygon) {
    throw ContractViolation("sample_feasible_init: needs a per-step polygon feasible set");
  }
  const ConvexPolygon& region = set.polygon();
  if (!(lo <= hi) || lo < region.min_x() || hi > region.max_x()) {
    throw ContractViolation("sample_feasible_init: range must lie within the CHP heat range");
  }
  const auto ilo = static_cast<long>(std::ceil(lo));
  const auto ihi = static_cast<long>(std::floor(hi));
  if (ilo > ihi) throw ContractViolation("sample_feasible_init: range holds no integer heat value");
  std::uniform_int_distribution<long> draw(ilo, ihi);
  const std::size_t T = problem.horizon();
  Vector u(problem.dimension());
  double best_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
    for (std::size_t i = 0; i < T; ++i) {
      const double h = static_cast<double>(draw(rng));
      u[2 * i] = h;
      u[2 * i + 1] = region.lower_y_at(h);
    }
    const Vector f = problem.constraints(u);
    if (is_feasible(f, problem.rhs())) return u;
    best_violation = std::max(best_violation, -max_infeasibility(f, problem.rhs()).gamma_max_abs);
  }
  std::ostringstream s;
  s << "no feasible initial solution in " << max_tries << " draws with h in [" << lo << ", " << hi
    << "]; smallest worst violation seen " << best_violation << " MW";
  throw InfeasibleSampler(s.str());
}

}  // namespace pga::dhs
