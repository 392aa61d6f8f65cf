// Acceptance checks. Prints one PASS/FAIL line per criterion and returns
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pga/dhs_physics.hpp"
#include "pga/dhs_simplified.hpp"
#include "pga/exp_harness.hpp"
#include "pga/ndim_problem.hpp"
#include "pga/surrogate.hpp"

using namespace pga;
using exp::Domain;
using exp::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

const fs::path work = fs::temp_directory_path() / "pga_acceptance";
fs::path model_path;
std::map<int, std::pair<bool, std::string>> results;

void report(int id, bool pass, const std::string& detail) {
  std::fprintf(stderr, "[done] criterion %d\n", id);
  results[id] = {pass, detail};
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

const std::vector<Domain> domains{Domain::ndim, Domain::dhs_simplified, Domain::dhs_surrogate};

ExperimentConfig config_for(Domain d) {
  ExperimentConfig c = ExperimentConfig::defaults(d);
  if (d == Domain::dhs_surrogate) c.model_file = model_path;
  c.record_iterates = false;
  c.output_dir = work / exp::to_string(d);
  return c;
}

std::vector<Vector> starts(const ExperimentConfig& cfg, const PenaltyProblem& prob, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(exp::sample_init(prob, rng, cfg.init_lo, cfg.init_hi));
  return out;
}

std::vector<bool> violated(const PenaltyProblem& prob, const Vector& u) {
  const Vector f = prob.constraints(u);
  const auto q = prob.rhs();
  std::vector<bool> v(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) v[i] = f[i] - q[i] < -feasibility_tolerance(q[i]);
  return v;
}

// Criterion 9 plus the model used by every surrogate-domain criterion.
void surrogate_training() {
  ExperimentConfig cfg = config_for(Domain::dhs_surrogate);
  cfg.model_file.clear();
  const auto t0 = std::chrono::steady_clock::now();
  const exp::SurrogateTraining tr = exp::train_surrogate(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  tr.model.save(model_path);
  const nn::SurrogateModel m = nn::SurrogateModel::load(model_path);

  bool masks = tr.model.g.min_constrained_weight() >= 0.0 && tr.model.f.min_constrained_weight() >= 0.0 &&
               m.g.min_constrained_weight() >= 0.0 && m.f.min_constrained_weight() >= 0.0;
  for (std::size_t l = 0; l < m.g.layers().size(); ++l) masks = masks && m.g.layers()[l].W == tr.model.g.layers()[l].W;
  for (std::size_t l = 0; l < m.f.layers().size(); ++l) masks = masks && m.f.layers()[l].W == tr.model.f.layers()[l].W;

  // Net-level monotonicity in the (h, p) window inputs.
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst_net = 0.0;
  for (const nn::MonotoneNet* net : {&m.g, &m.f}) {
    for (int t = 0; t < 200; ++t) {
      Eigen::VectorXd x(static_cast<Eigen::Index>(net->inputs()));
      for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = U(rng);
      const Eigen::VectorXd y0 = net->forward(x);
      for (Eigen::Index j = 3; j < x.size(); ++j) {
        Eigen::VectorXd xp = x;
        xp(j) += 0.05;
        worst_net = std::min(worst_net, (net->forward(xp) - y0).minCoeff());
      }
    }
  }

  // Unrolled composition over 12-step schedules.
  const dhs::DhsParams p = cfg.dhs;
  const auto prob = nn::make_surrogate_problem(m, exp::load_demand_for(cfg), p);
  double worst_unroll = 0.0;
  for (int t = 0; t < 50; ++t) {
    Vector u;
    for (std::size_t i = 0; i < prob->horizon(); ++i) {
      const double h = 5.0 + U(rng) * (p.chp_region().max_x() - 5.0);
      const double lo = p.chp_region().lower_y_at(h), hi = p.chp_region().upper_y_at(h);
      u.insert(u.end(), {h, lo + U(rng) * (hi - lo)});
    }
    const Vector y0 = prob->constraints(u);
    for (std::size_t j = 0; j < u.size(); ++j) {
      Vector v = u;
      v[j] += 0.5;
      const Vector y1 = prob->constraints(v);
      for (std::size_t i = 0; i < y0.size(); ++i) {
        worst_unroll = std::min(worst_unroll, (y1[i] - y0[i]) / m.scaling.output.scale(0));
      }
    }
  }

  // Held-out one-step delivered heat: y = f(g(s_prev, window), window).
  double se = 0.0, se_f = 0.0, lo = 1e300, hi = -1e300;
  for (const dhs::DatasetRow& r : tr.data.test) {
    Eigen::VectorXd x = nn::net_input(r.prev_state, r.window, m.scaling);
    x.head(3) = m.g.forward(x);
    const double y = m.scaling.output.denormalize(0, m.f.forward(x)(0));
    const double yf = m.scaling.output.denormalize(0, m.f.forward(nn::net_input(r.state, r.window, m.scaling))(0));
    se += (y - r.delivered) * (y - r.delivered);
    se_f += (yf - r.delivered) * (yf - r.delivered);
    lo = std::min(lo, r.delivered);
    hi = std::max(hi, r.delivered);
  }
  const double n = static_cast<double>(tr.data.test.size());
  const double rmse = std::sqrt(se / n), rmse_f = std::sqrt(se_f / n), range = hi - lo;
  const std::size_t rows = tr.data.train.size() + tr.data.test.size();

  const bool pass = masks && worst_net >= -1e-6 && worst_unroll >= -1e-6 && rmse < 0.05 * range && rows >= 10000;
  report(9, pass,
         "rows " + std::to_string(rows) + ", masks+round trip " + (masks ? "ok" : "BAD") + ", min net FD " +
             fmt(worst_net) + ", min unroll FD " + fmt(worst_unroll) + ", one-step RMSE " + fmt(rmse, 4) +
             " MW (f alone " + fmt(rmse_f, 4) + ") vs 5% of range " + fmt(0.05 * range, 4) + " MW, training " +
             fmt(secs, 3) + " s");
}

void criterion_1() {
  ExperimentConfig cfg = config_for(Domain::ndim);
  cfg.max_outer_iters = 5000;
  const auto prob = exp::build_problem(cfg);
  const auto& nd = dynamic_cast<const NdimProblem&>(*prob);
  const auto oracle = oracle_optimum(nd, cfg.oracle_grid_step);
  const double j_star = oracle ? oracle->objective : std::numeric_limits<double>::infinity();
  bool pass = true;
  double worst_gap = 0.0, worst_time = 0.0;
  for (const Vector& s : starts(cfg, *prob, 5, 1)) {
    const PgaResult r = pga::pga(*prob, cfg.C, s, cfg.solver_options());
    if (!r.best_feasible) {
      pass = false;
      continue;
    }
    const Vector f = prob->constraints(*r.best_feasible);
    const auto q = prob->rhs();
    for (std::size_t i = 0; i < 3; ++i) pass = pass && f[i] - q[i] >= -1e-6;
    const double gap = std::min(std::abs(r.best_objective - 6.510) / 6.510, std::abs(r.best_objective - j_star) / j_star);
    worst_gap = std::max(worst_gap, gap);
    worst_time = std::max(worst_time, r.time_to_first_feasible_s);
    pass = pass && gap <= 0.01 && r.time_to_first_feasible_s <= 60.0;
  }
  report(1, pass,
         "5 inits, worst relative gap " + fmt(worst_gap, 4) + " (targets 6.510 and J* " + fmt(j_star) +
             "), slowest first feasible " + fmt(worst_time, 3) + " s");
}

void criteria_2_and_4() {
  std::string d2, d4;
  bool pass2 = true, pass4 = true;
  for (Domain d : domains) {
    const ExperimentConfig cfg = config_for(d);
    const auto prob = exp::build_problem(cfg);
    int last_hits = 0, any_hits = 0, prop3 = 0;
    double worst_tol = 0.0;
    for (const Vector& s : starts(cfg, *prob, 5, 2)) {
      const PenaltyMethodResult pm = penalty_method(*prob, cfg.C, s, cfg.solver_options());
      const auto v = violated(*prob, pm.solution);
      if (std::find(v.begin(), v.end(), true) != v.end()) ++any_hits;
      if (v.back()) ++last_hits;

      const double tol = 10.0 * achieved_gradient_norm(*prob, cfg.C, pm.solution);
      const Vector f = prob->constraints(pm.solution);
      Vector gamma(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) gamma[i] = f[i] - prob->rhs()[i];
      GuardrailState g = GuardrailState::zeros(f.size());
      guardrail_update(g, gamma);
      if (verify_proposition_3(*prob, cfg.C, pm.solution, g.epsilon, tol).passed) ++prop3;
      worst_tol = std::max(worst_tol, tol);
    }
    pass2 = pass2 && any_hits == 5 && last_hits >= 4;
    pass4 = pass4 && prop3 == 5;
    d2 += exp::to_string(d) + " violated " + std::to_string(any_hits) + "/5 last " + std::to_string(last_hits) + "/5; ";
    d4 += exp::to_string(d) + " " + std::to_string(prop3) + "/5 (tol<=" + fmt(worst_tol, 3) + "); ";
  }
  report(2, pass2, d2);
  report(4, pass4, d4);
}

bool strict_trend(const std::vector<exp::SweepRow>& rows) {
  for (std::size_t k = 1; k < rows.size(); ++k) {
    if (!(std::abs(rows[k].signed_worst) < std::abs(rows[k - 1].signed_worst))) return false;
    if (!(rows[k].objective > rows[k - 1].objective)) return false;
  }
  return true;
}

std::string sweep_text(const std::vector<exp::SweepRow>& rows) {
  std::string s;
  for (const auto& r : rows) s += "C=" + fmt(r.C) + " J=" + fmt(r.objective, 7) + " g=" + fmt(r.signed_worst, 3) + " ";
  return s;
}

void criterion_3() {
  ExperimentConfig nd = config_for(Domain::ndim);
  nd.init_mode = exp::InitMode::explicit_point;
  nd.init_point = {4, 2, 2};
  const auto a = exp::sweep_C(nd, {0.0005, 0.05, 5});
  ExperimentConfig sd = config_for(Domain::dhs_simplified);
  const auto b = exp::sweep_C(sd, {1, 100, 10000});
  const bool pass = strict_trend(a) && strict_trend(b) && std::abs(a.back().signed_worst) < 0.1;
  report(3, pass, "ndim: " + sweep_text(a) + "| dhs_simplified: " + sweep_text(b));
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Three rounds of 5 s per solver with alternating order; per-outer durations
// are pooled over the rounds.
void criterion_5() {
  bool pass = true;
  std::string detail;
  for (Domain d : domains) {
    ExperimentConfig cfg = config_for(d);
    cfg.time_limit_s = 5.0;
    const auto prob = exp::build_problem(cfg);
    const Vector s = starts(cfg, *prob, 1, 5).front();
    std::vector<double> tp, ti;
    long inner_p = 0, inner_i = 0;
    const auto run_pga = [&] {
      const auto r = pga::pga(*prob, cfg.C, s, cfg.solver_options());
      const auto dur = outer_iteration_durations(r.trace);
      tp.insert(tp.end(), dur.begin(), dur.end());
      inner_p += r.inner_iterations;
    };
    const auto run_ipdd = [&] {
      const auto r = pga::ipdd(*prob, cfg.ipdd_state(prob->horizon()), s, cfg.solver_options());
      const auto dur = outer_iteration_durations(r.trace);
      ti.insert(ti.end(), dur.begin(), dur.end());
      inner_i += r.inner_iterations;
    };
    for (int round = 0; round < 3; ++round) {
      if (round % 2 == 0) {
        run_pga();
        run_ipdd();
      } else {
        run_ipdd();
        run_pga();
      }
    }
    const double mp = mean(tp), mi = mean(ti);
    pass = pass && mp <= mi;
    detail += exp::to_string(d) + " PGA " + fmt(mp * 1e3, 4) + " ms (" +
              fmt(static_cast<double>(inner_p) / static_cast<double>(tp.size()), 4) + " inner/outer) vs IPDD " +
              fmt(mi * 1e3, 4) + " ms (" + fmt(static_cast<double>(inner_i) / static_cast<double>(ti.size()), 4) +
              "); ";
  }
  report(5, pass, "3 alternating rounds of 5 s each: " + detail);
}

void criterion_6() {
  bool pass = true;
  std::string detail;
  const std::map<Domain, std::pair<long, double>> budget{
      {Domain::ndim, {3000, 10.0}}, {Domain::dhs_simplified, {300, 10.0}}, {Domain::dhs_surrogate, {40, 10.0}}};
  for (Domain d : domains) {
    ExperimentConfig cfg = config_for(d);
    cfg.seed = 6;
    cfg.max_outer_iters = budget.at(d).first;
    cfg.tractability_time_limit_s = budget.at(d).second;
    const auto r = exp::tractability_study(cfg, 20);
    pass = pass && r.passed;
    detail += exp::to_string(d) + " ED " + fmt(r.ed, 3) + " < " + fmt(r.threshold, 3) + " (" +
              std::to_string(r.feasible_runs) + "/20 feasible); ";
  }
  report(6, pass, "20 inits, " + detail);
}

void criterion_7() {
  const dhs::DhsParams p;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> flow(p.min_flow, p.max_flow), temp(70, 120);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    dhs::PipeHistory h(dhs::PipeHistory::required_capacity(p));
    for (std::size_t k = 0; k < h.capacity(); ++k) h.push({temp(rng), flow(rng)});
    const auto d = dhs::delays(h, p);
    double total = 0.0;
    for (const auto& w : dhs::node_weights(h, d, dhs::flow_masses(h, d, p), p)) total += w.mass;
    const double step_mass = h.lag(0).mass_flow * p.dt_s;
    worst = std::max(worst, std::abs(total - step_mass) / step_mass);
  }
  bool steady = true;
  for (double f : {5.0, 300.0, 810.0}) {
    dhs::PipeHistory h(dhs::PipeHistory::required_capacity(p));
    for (std::size_t k = 0; k < h.capacity(); ++k) h.push({95.0, f});
    steady = steady && dhs::outlet_temp_no_loss(h, p) == 95.0;
  }
  dhs::PipeHistory h(dhs::PipeHistory::required_capacity(p));
  for (std::size_t k = 0; k < h.capacity(); ++k) h.push({90.0, 300.0});
  const auto d = dhs::delays(h, p);
  const double factor = dhs::loss_factor(d, dhs::flow_masses(h, d, p), 300.0, p);
  const double expected = std::exp(-0.002091);
  const bool four = std::abs(factor - expected) <= 0.5e-4 * expected;
  report(7, worst <= 1e-9 && steady && four,
         "max coefficient-sum rel error " + fmt(worst, 3) + ", steady state exact " + (steady ? "yes" : "no") +
             ", loss factor " + fmt(factor, 8) + " vs exp(-0.002091) " + fmt(expected, 8));
}

void criterion_8() {
  bool pass = true;
  std::string detail;
  for (Domain d : domains) {
    const ExperimentConfig cfg = config_for(d);
    const auto prob = exp::build_problem(cfg);
    const auto r = exp::validate_gradients(cfg, *prob, 100);
    pass = pass && r.passed && r.points == 100;
    detail += exp::to_string(d) + " " + fmt(r.max_error, 3) + " < " + fmt(r.threshold, 3) + "; ";
  }
  report(8, pass, "100 points, max rel FD error: " + detail);
}

void criterion_10() {
  ExperimentConfig cfg = config_for(Domain::dhs_simplified);
  cfg.max_outer_iters = 1000;
  const auto prob = exp::build_problem(cfg);
  double qmax = 0.0;
  for (double q : prob->rhs()) qmax = std::max(qmax, q);
  const Vector s = starts(cfg, *prob, 1, 10).front();
  const PgaResult r = pga::pga(*prob, cfg.C, s, cfg.solver_options());
  const PenaltyMethodResult pm = penalty_method(*prob, 10000.0, s, cfg.solver_options());
  const double pm_j = prob->objective(pm.solution);
  const bool pass = r.best_feasible && r.time_to_first_feasible_s <= 300.0 && r.best_objective <= 1.01 * pm_j;
  report(10, pass,
         "demand peak " + fmt(qmax, 4) + " MW, PGA best feasible " + fmt(r.best_objective, 9) + " (first feasible " +
             fmt(r.time_to_first_feasible_s, 3) + " s) vs PM C=10000 " + fmt(pm_j, 9) + " (max infeasibility " +
             fmt(max_infeasibility(*prob, pm.solution).signed_worst, 3) + ")");
}

void guarded(int id, const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

// Optional arguments select criteria by number; without 9 a model left by a
// previous run is reused.
// Optional arguments select criteria by number; without 9 a model left by a
// previous run is reused.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int a = 1; a < argc; ++a) only.insert(std::atoi(argv[a]));
  const auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
  const auto t0 = std::chrono::steady_clock::now();
  model_path = work / "model.json";
  if (want(9) || !fs::exists(model_path)) {
    fs::remove_all(work);
    fs::create_directories(work);
    guarded(9, surrogate_training);
  }
  if (want(1)) guarded(1, criterion_1);
  if (want(2) || want(4)) guarded(2, criteria_2_and_4);
  if (want(3)) guarded(3, criterion_3);
  if (want(5)) guarded(5, criterion_5);
  if (want(6)) guarded(6, criterion_6);
  if (want(7)) guarded(7, criterion_7);
  if (want(8)) guarded(8, criterion_8);
  if (want(10)) guarded(10, criterion_10);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  int failures = 0;
  for (const auto& [id, r] : results) {
    std::printf("criterion %2d: %s  %s\n", id, r.first ? "PASS" : "FAIL", r.second.c_str());
    failures += r.first ? 0 : 1;
  }
  std::printf("%d of %zu criteria failed, total %.1f s\n", failures, results.size(), secs);
  return failures == 0 ? 0 : 1;
}
