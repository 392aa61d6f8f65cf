#include "pga/exp_harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "pga/error.hpp"
#include "pga/ndim_problem.hpp"

namespace pga::exp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Domain d) {
  switch (d) {
    case Domain::ndim: return "ndim";
    case Domain::dhs_simplified: return "dhs_simplified";
    case Domain::dhs_surrogate: return "dhs_surrogate";
  }
  return "?";
}

std::string to_string(SolverKind s) {
  switch (s) {
    case SolverKind::pm: return "pm";
    case SolverKind::pga: return "pga";
    case SolverKind::ipdd: return "ipdd";
  }
  return "?";
}

Domain parse_domain(const std::string& s) {
  if (s == "ndim") return Domain::ndim;
  if (s == "dhs_simplified") return Domain::dhs_simplified;
  if (s == "dhs_surrogate") return Domain::dhs_surrogate;
  throw ConfigError("unknown domain '" + s + "' (expected ndim, dhs_simplified or dhs_surrogate)");
}

SolverKind parse_solver(const std::string& s) {
  if (s == "pm") return SolverKind::pm;
  if (s == "pga") return SolverKind::pga;
  if (s == "ipdd") return SolverKind::ipdd;
  throw ConfigError("unknown solver '" + s + "' (expected pm, pga or ipdd)");
}

namespace {

std::string season_name(dhs::Season s) { return s == dhs::Season::winter ? "winter" : "spring"; }

dhs::Season parse_season(const std::string& s) {
  if (s == "winter") return dhs::Season::winter;
  if (s == "spring") return dhs::Season::spring;
  throw ConfigError("unknown season '" + s + "' (expected winter or spring)");
}

std::string mode_name(StopMode m) { return m == StopMode::per_step ? "per_step" : "window_displacement"; }

StopMode parse_mode(const std::string& s) {
  if (s == "per_step") return StopMode::per_step;
  if (s == "window_displacement") return StopMode::window_displacement;
  throw ConfigError("unknown stop mode '" + s + "' (expected per_step or window_displacement)");
}

std::string init_name(InitMode m) {
  switch (m) {
    case InitMode::sample: return "sample";
    case InitMode::explicit_point: return "explicit";
    case InitMode::file: return "file";
  }
  return "?";
}

InitMode parse_init(const std::string& s) {
  if (s == "sample") return InitMode::sample;
  if (s == "explicit") return InitMode::explicit_point;
  if (s == "file") return InitMode::file;
  throw ConfigError("unknown init mode '" + s + "' (expected sample, explicit or file)");
}

// Object reader that rejects keys it was never asked about.
class Section {
 public:
  Section(const json& j, std::string name) : name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    j_ = &j;
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_->contains(key)) return;
    try {
      out = (*j_)[key].template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <typename F>
  void with(const char* key, F&& f) {
    seen_.insert(key);
    if (j_->contains(key)) f((*j_)[key]);
  }

  void finish() const {
    for (const auto& item : j_->items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + name_ + "." + item.key() + "'");
    }
  }

 private:
  const json* j_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

json train_config_json(const nn::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs},
          {"early_stop_delta", c.early_stop_delta}, {"patience", c.patience},
          {"batch_size", c.batch_size}, {"seed", c.seed}, {"hidden", c.hidden},
          {"paper_strict_masks", c.paper_strict_masks}};
}

void read_train_config(const json& j, const std::string& name, nn::TrainConfig& c) {
  Section s(j, name);
  s.get("learning_rate", c.learning_rate);
  s.get("max_epochs", c.max_epochs);
  s.get("early_stop_delta", c.early_stop_delta);
  s.get("patience", c.patience);
  s.get("batch_size", c.batch_size);
  s.get("seed", c.seed);
  s.get("hidden", c.hidden);
  s.get("paper_strict_masks", c.paper_strict_masks);
  s.finish();
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults(Domain d) {
  ExperimentConfig c;
  c.domain = d;
  if (d == Domain::ndim) {
    c.C = 0.05;
    c.stop.window_n = 50;
    c.stop.delta = 1e-6;
    c.time_limit_s = 60.0;
    c.init_lo = 0.0;
    c.init_hi = 10.0;
  } else {
    c.C = 100.0;
    c.stop.window_n = 1000;
    c.stop.delta = 0.1;
    c.time_limit_s = 300.0;
    if (d == Domain::dhs_simplified) {
      c.init_lo = 60.0;
      c.init_hi = 70.0;
      c.demand.season = dhs::Season::winter;
    } else {
      c.init_lo = 30.0;
      c.init_hi = 70.0;
      c.demand.season = dhs::Season::spring;
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  Domain d = Domain::ndim;
  if (j.contains("domain")) {
    if (!j["domain"].is_string()) throw ConfigError("config key 'domain' must be a string");
    d = parse_domain(j["domain"].get<std::string>());
  }
  ExperimentConfig c = defaults(d);
  Section root(j, "config");
  std::string domain_name;
  root.get("domain", domain_name);
  root.with("solvers", [&](const json& v) {
    if (!v.is_array()) throw ConfigError("config key 'solvers' must be a list");
    c.solvers.clear();
    for (const auto& s : v) {
      if (!s.is_string()) throw ConfigError("solver names must be strings");
      c.solvers.push_back(parse_solver(s.get<std::string>()));
    }
  });
  root.get("seed", c.seed);
  root.get("time_limit_s", c.time_limit_s);
  root.get("max_outer_iters", c.max_outer_iters);
  root.with("output_dir", [&](const json& v) {
    if (!v.is_string()) throw ConfigError("config key 'output_dir' must be a string");
    c.output_dir = resolve(v.get<std::string>(), base_dir);
  });
  root.with("penalty", [&](const json& v) {
    Section s(v, "penalty");
    s.get("C", c.C);
    s.finish();
  });
  root.with("ipdd", [&](const json& v) {
    Section s(v, "ipdd");
    s.get("rho0", c.rho0);
    s.get("rho_growth", c.rho_growth);
    s.get("violation_shrink", c.violation_shrink);
    s.get("rho_max", c.rho_max);
    s.finish();
  });
  root.with("adam", [&](const json& v) {
    Section s(v, "adam");
    s.get("learning_rate", c.adam.learning_rate);
    s.get("beta1", c.adam.beta1);
    s.get("beta2", c.adam.beta2);
    s.get("eps_stab", c.adam.eps_stab);
    s.finish();
  });
  root.with("stop", [&](const json& v) {
    Section s(v, "stop");
    s.get("window_n", c.stop.window_n);
    s.get("delta", c.stop.delta);
    s.get("max_inner_iters", c.stop.max_inner_iters);
    std::string mode = mode_name(c.stop.mode);
    s.get("mode", mode);
    c.stop.mode = parse_mode(mode);
    s.finish();
  });
  root.with("trace", [&](const json& v) {
    Section s(v, "trace");
    s.get("checkpoint_every", c.checkpoint_every);
    s.get("record_iterates", c.record_iterates);
    s.finish();
  });
  root.with("init", [&](const json& v) {
    Section s(v, "init");
    std::string mode = init_name(c.init_mode);
    s.get("mode", mode);
    c.init_mode = parse_init(mode);
    s.get("point", c.init_point);
    std::string file;
    s.get("file", file);
    if (!file.empty()) c.init_file = resolve(file, base_dir);
    std::vector<double> range{c.init_lo, c.init_hi};
    s.get("range", range);
    if (range.size() != 2) throw ConfigError("init.range must hold two numbers");
    c.init_lo = range[0];
    c.init_hi = range[1];
    s.finish();
  });
  root.with("ndim", [&](const json& v) {
    Section s(v, "ndim");
    s.get("lo", c.ndim_lo);
    s.get("hi", c.ndim_hi);
    s.get("oracle_grid_step", c.oracle_grid_step);
    s.finish();
  });
  root.with("dhs", [&](const json& v) {
    Section s(v, "dhs");
    dhs::DhsParams& p = c.dhs;
    s.get("horizon", p.horizon);
    s.get("a0", p.a0);
    s.get("a1", p.a1);
    s.get("dt_s", p.dt_s);
    s.get("length_m", p.length_m);
    s.get("area_m2", p.area_m2);
    s.get("heat_capacity", p.heat_capacity);
    s.get("heat_transfer", p.heat_transfer);
    s.get("density", p.density);
    s.get("ambient_temp", p.ambient_temp);
    s.get("return_temp", p.return_temp);
    s.get("min_flow", p.min_flow);
    s.get("max_flow", p.max_flow);
    s.get("min_supply_temp", p.min_supply_temp);
    s.get("max_supply_temp", p.max_supply_temp);
    s.get("supply_temp", p.supply_temp);
    s.get("nominal_flow", p.nominal_flow);
    s.get("warmup_heat_mw", c.warmup_heat_mw);
    s.with("chp_vertices", [&](const json& verts) {
      std::vector<std::array<double, 2>> raw;
      try {
        raw = verts.get<std::vector<std::array<double, 2>>>();
      } catch (const json::exception&) {
        throw ConfigError("dhs.chp_vertices must be a list of [heat, power] pairs");
      }
      p.chp_vertices.clear();
      for (const auto& r : raw) p.chp_vertices.push_back({r[0], r[1]});
    });
    s.finish();
  });
  root.with("demand", [&](const json& v) {
    Section s(v, "demand");
    s.get("source", c.demand.kind);
    std::string season = season_name(c.demand.season);
    s.get("season", season);
    c.demand.season = parse_season(season);
    s.get("seed", c.demand.seed);
    s.get("start_hour", c.demand.start_hour);
    std::string file;
    s.get("file", file);
    if (!file.empty()) c.demand.file = resolve(file, base_dir);
    s.get("scale_to", c.demand.scale_to);
    s.finish();
  });
  root.with("surrogate", [&](const json& v) {
    Section s(v, "surrogate");
    std::string model, dataset;
    s.get("model_file", model);
    if (!model.empty()) c.model_file = resolve(model, base_dir);
    s.get("dataset_file", dataset);
    if (!dataset.empty()) c.dataset_file = resolve(dataset, base_dir);
    s.get("dataset_episodes", c.dataset_episodes);
    s.get("dataset_seed", c.dataset_seed);
    s.get("window_n", c.window_n);
    s.with("train_g", [&](const json& t) { read_train_config(t, "surrogate.train_g", c.train_g); });
    s.with("train_f", [&](const json& t) { read_train_config(t, "surrogate.train_f", c.train_f); });
    s.finish();
  });
  root.with("sweep", [&](const json& v) {
    Section s(v, "sweep");
    s.get("C", c.sweep_C);
    s.finish();
  });
  root.with("tractability", [&](const json& v) {
    Section s(v, "tractability");
    s.get("n_inits", c.n_inits);
    s.get("time_limit_s", c.tractability_time_limit_s);
    s.finish();
  });
  root.finish();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json j;
  j["domain"] = exp::to_string(domain);
  j["solvers"] = json::array();
  for (SolverKind s : solvers) j["solvers"].push_back(exp::to_string(s));
  j["seed"] = seed;
  j["time_limit_s"] = time_limit_s;
  j["max_outer_iters"] = max_outer_iters;
  j["output_dir"] = output_dir.string();
  j["penalty"] = {{"C", C}};
  j["ipdd"] = {{"rho0", rho0}, {"rho_growth", rho_growth}, {"violation_shrink", violation_shrink}, {"rho_max", rho_max}};
  j["adam"] = {{"learning_rate", adam.learning_rate}, {"beta1", adam.beta1}, {"beta2", adam.beta2},
               {"eps_stab", adam.eps_stab}};
  j["stop"] = {{"window_n", stop.window_n}, {"delta", stop.delta}, {"max_inner_iters", stop.max_inner_iters},
               {"mode", mode_name(stop.mode)}};
  j["trace"] = {{"checkpoint_every", checkpoint_every}, {"record_iterates", record_iterates}};
  j["init"] = {{"mode", init_name(init_mode)}, {"point", init_point}, {"file", init_file.string()},
               {"range", {init_lo, init_hi}}};
  j["ndim"] = {{"lo", ndim_lo}, {"hi", ndim_hi}, {"oracle_grid_step", oracle_grid_step}};
  json verts = json::array();
  for (const Point2& p : dhs.chp_vertices) verts.push_back({p.x, p.y});
  j["dhs"] = {{"horizon", dhs.horizon}, {"a0", dhs.a0}, {"a1", dhs.a1}, {"dt_s", dhs.dt_s},
              {"length_m", dhs.length_m}, {"area_m2", dhs.area_m2}, {"heat_capacity", dhs.heat_capacity},
              {"heat_transfer", dhs.heat_transfer}, {"density", dhs.density}, {"ambient_temp", dhs.ambient_temp},
              {"return_temp", dhs.return_temp}, {"min_flow", dhs.min_flow}, {"max_flow", dhs.max_flow},
              {"min_supply_temp", dhs.min_supply_temp}, {"max_supply_temp", dhs.max_supply_temp},
              {"supply_temp", dhs.supply_temp}, {"nominal_flow", dhs.nominal_flow},
              {"warmup_heat_mw", warmup_heat_mw}, {"chp_vertices", verts}};
  j["demand"] = {{"source", demand.kind}, {"season", season_name(demand.season)}, {"seed", demand.seed},
                 {"start_hour", demand.start_hour}, {"file", demand.file.string()}, {"scale_to", demand.scale_to}};
  j["surrogate"] = {{"model_file", model_file.string()}, {"dataset_file", dataset_file.string()},
                    {"dataset_episodes", dataset_episodes}, {"dataset_seed", dataset_seed},
                    {"window_n", window_n}, {"train_g", train_config_json(train_g)},
                    {"train_f", train_config_json(train_f)}};
  j["sweep"] = {{"C", sweep_C}};
  j["tractability"] = {{"n_inits", n_inits}, {"time_limit_s", tractability_time_limit_s}};
  return j;
}

void ExperimentConfig::validate() const {
  try {
    if (solvers.empty()) throw ConfigError("at least one solver is required");
    if (!(time_limit_s > 0.0)) throw ConfigError("time_limit_s must be positive");
    if (max_outer_iters < 0) throw ConfigError("max_outer_iters must be >= 0");
    if (!(C > 0.0)) throw ConfigError("penalty.C must be positive");
    if (!(rho_growth > 1.0)) throw ConfigError("ipdd.rho_growth must exceed 1");
    if (!(violation_shrink > 0.0 && violation_shrink < 1.0)) throw ConfigError("ipdd.violation_shrink must lie in (0, 1)");
    if (!(rho_max > 0.0)) throw ConfigError("ipdd.rho_max must be positive");
    if (checkpoint_every <= 0) throw ConfigError("trace.checkpoint_every must be positive");
    pga::validate(stop);
    (void)AdamState::fresh(1, adam);
    if (!(init_lo <= init_hi)) throw ConfigError("init.range must be ordered");
    if (init_mode == InitMode::file && !fs::exists(init_file)) {
      throw ConfigError("init.file does not exist: " + init_file.string());
    }
    if (init_mode == InitMode::explicit_point && init_point.empty()) {
      throw ConfigError("init.mode 'explicit' needs init.point");
    }
    if (domain == Domain::ndim) {
      if (!(ndim_lo < ndim_hi)) throw ConfigError("ndim.lo must be below ndim.hi");
      if (!(oracle_grid_step > 0.0)) throw ConfigError("ndim.oracle_grid_step must be positive");
    } else {
      dhs.validate();
      if (demand.kind != "synthetic" && demand.kind != "file") {
        throw ConfigError("demand.source must be 'synthetic' or 'file'");
      }
      if (demand.kind == "file" && !fs::exists(demand.file)) {
        throw ConfigError("demand.file does not exist: " + demand.file.string());
      }
      if (demand.scale_to < 0.0) throw ConfigError("demand.scale_to must be >= 0");
    }
    if (domain == Domain::dhs_surrogate && !model_file.empty() && !fs::exists(model_file)) {
      throw ConfigError("surrogate.model_file does not exist: " + model_file.string());
    }
    if (!dataset_file.empty() && !fs::exists(dataset_file)) {
      throw ConfigError("surrogate.dataset_file does not exist: " + dataset_file.string());
    }
    if (dataset_episodes == 0) throw ConfigError("surrogate.dataset_episodes must be positive");
    train_g.validate();
    train_f.validate();
    if (n_inits == 0) throw ConfigError("tractability.n_inits must be positive");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

SolverOptions ExperimentConfig::solver_options() const {
  SolverOptions o;
  o.adam = adam;
  o.stop = stop;
  o.time_limit_s = time_limit_s;
  o.max_outer_iters = max_outer_iters;
  o.checkpoint_every = checkpoint_every;
  o.record_iterates = record_iterates;
  return o;
}

IpddState ExperimentConfig::ipdd_state(std::size_t T) const {
  IpddState s = IpddState::initial(T, rho0 > 0.0 ? rho0 : C);
  s.rho_growth = rho_growth;
  s.violation_shrink = violation_shrink;
  s.rho_max = std::max(rho_max, s.rho);
  return s;
}

std::vector<double> load_demand_for(const ExperimentConfig& cfg) {
  std::vector<double> q;
  if (cfg.demand.kind == "file") {
    q = dhs::load_demand(cfg.demand.file);
    if (cfg.demand.scale_to > 0.0) q = dhs::scale_demand(q, cfg.demand.scale_to);
  } else {
    q = dhs::synthetic_demand(cfg.dhs.horizon, cfg.demand.season, cfg.demand.seed, cfg.demand.start_hour);
  }
  if (q.size() < cfg.dhs.horizon) {
    throw ConfigError("demand holds " + std::to_string(q.size()) + " values, the horizon needs " +
                      std::to_string(cfg.dhs.horizon));
  }
  q.resize(cfg.dhs.horizon);
  return q;
}

std::unique_ptr<PenaltyProblem> build_problem(const ExperimentConfig& cfg) {
  switch (cfg.domain) {
    case Domain::ndim:
      return std::make_unique<NdimProblem>(cfg.ndim_lo, cfg.ndim_hi);
    case Domain::dhs_simplified:
      return dhs::make_problem(load_demand_for(cfg), cfg.dhs, cfg.warmup_heat_mw);
    case Domain::dhs_surrogate: {
      if (cfg.model_file.empty()) {
        throw ConfigError("dhs_surrogate needs surrogate.model_file (produce one with train-surrogate)");
      }
      return nn::make_surrogate_problem(nn::SurrogateModel::load(cfg.model_file), load_demand_for(cfg), cfg.dhs,
                                        cfg.warmup_heat_mw);
    }
  }
  throw ConfigError("unknown domain");
}

Vector sample_init(const PenaltyProblem& problem, std::mt19937_64& rng, double lo, double hi,
                   std::size_t max_tries) {
  const FeasibleSet& set = problem.feasible_set();
  if (set.kind() == FeasibleSet::Kind::per_step_polygon) return dhs::sample_feasible_init(problem, rng, lo, hi, max_tries);
  Vector u(problem.dimension());
  for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
    for (std::size_t c = 0; c < u.size(); ++c) {
      const auto a = static_cast<long>(std::ceil(std::max(lo, set.box_lo()[c])));
      const auto b = static_cast<long>(std::floor(std::min(hi, set.box_hi()[c])));
      if (a > b) throw ContractViolation("sample_init: range holds no integer value inside the box");
      u[c] = static_cast<double>(std::uniform_int_distribution<long>(a, b)(rng));
    }
    if (is_feasible(problem, u)) return u;
  }
  throw InfeasibleSampler("no feasible initial solution in " + std::to_string(max_tries) + " integer draws");
}

namespace {

Vector read_point_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open init file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  std::replace(text.begin(), text.end(), ',', ' ');
  std::istringstream s(text);
  Vector u;
  double x = 0.0;
  while (s >> x) u.push_back(x);
  if (!s.eof()) throw ConfigError("init file " + path.string() + " holds a non-numeric entry");
  return u;
}

}  // namespace

Vector initial_point(const ExperimentConfig& cfg, const PenaltyProblem& problem, std::mt19937_64& rng) {
  Vector u;
  switch (cfg.init_mode) {
    case InitMode::sample: return sample_init(problem, rng, cfg.init_lo, cfg.init_hi);
    case InitMode::explicit_point: u = cfg.init_point; break;
    case InitMode::file: u = read_point_file(cfg.init_file); break;
  }
  if (u.size() != problem.dimension()) {
    throw ConfigError("initial point has " + std::to_string(u.size()) + " entries, the problem needs " +
                      std::to_string(problem.dimension()));
  }
  if (!problem.feasible_set().contains(u, 1e-9)) throw ConfigError("initial point lies outside the feasible set");
  return u;
}

SolverSummary summarize(const SolverTrace& trace) {
  SolverSummary s;
  s.solver = trace.solver_name;
  if (trace.records.empty()) {
    s.status = "no records";
    return s;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r : trace.outer_boundaries()) {
    const TraceRecord& rec = trace.records[r];
    if (rec.feasible && rec.objective < best) {
      if (!std::isfinite(best)) s.time_to_first_feasible_s = rec.wall_time_s;
      best = rec.objective;
    }
  }
  if (std::isfinite(best)) s.best_feasible_objective = best;
  const std::vector<double> d = outer_iteration_durations(trace);
  s.outer_iterations = static_cast<long>(d.size());
  if (!d.empty()) {
    double sum = 0.0;
    for (double x : d) sum += x;
    s.mean_outer_time_s = sum / static_cast<double>(d.size());
    double ss = 0.0;
    for (double x : d) ss += (x - s.mean_outer_time_s) * (x - s.mean_outer_time_s);
    s.std_outer_time_s = d.size() > 1 ? std::sqrt(ss / static_cast<double>(d.size() - 1)) : 0.0;
  }
  s.final_objective = trace.records.back().objective;
  s.final_max_infeasibility = trace.records.back().max_infeasibility;
  s.inner_iterations = trace.records.back().inner_iters_cum;
  return s;
}

void write_trace_csv(const fs::path& path, const SolverTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write trace " + path.string());
  out << "wall_time_s,outer_iter,inner_iters_cum,objective,max_infeasibility,feasible\n";
  out << std::setprecision(17);
  for (const TraceRecord& r : trace.records) {
    out << r.wall_time_s << ',' << r.outer_iter << ',' << r.inner_iters_cum << ',' << r.objective << ','
        << r.max_infeasibility << ',' << (r.feasible ? 1 : 0) << '\n';
  }
}

SolverTrace read_trace_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open trace " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "wall_time_s,outer_iter,inner_iters_cum,objective,max_infeasibility,feasible") {
    throw DataFormatError("trace " + path.string() + " has an unexpected header");
  }
  SolverTrace t;
  t.solver_name = path.stem().string();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    TraceRecord r;
    int feasible = 0;
    if (!(s >> r.wall_time_s >> r.outer_iter >> r.inner_iters_cum >> r.objective >> r.max_infeasibility >> feasible)) {
      throw DataFormatError("trace " + path.string() + " has a malformed row");
    }
    r.feasible = feasible != 0;
    t.records.push_back(std::move(r));
  }
  return t;
}

void write_iterates_csv(const fs::path& path, const SolverTrace& trace) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write iterates " + path.string());
  const std::size_t n = trace.records.empty() ? 0 : trace.records.front().iterate.size();
  out << "outer_iter,inner_iters_cum";
  for (std::size_t c = 0; c < n; ++c) out << ",u" << c;
  out << '\n' << std::setprecision(17);
  for (const TraceRecord& r : trace.records) {
    out << r.outer_iter << ',' << r.inner_iters_cum;
    for (double x : r.iterate) out << ',' << x;
    out << '\n';
  }
}

void write_summary_csv(const fs::path& path, const ComparisonSummary& summary) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write summary " + path.string());
  out << "solver,status,best_feasible_objective,time_to_first_feasible_s,outer_iterations,mean_outer_time_s,"
         "std_outer_time_s,final_objective,final_max_infeasibility,inner_iterations\n";
  out << std::setprecision(12);
  for (const SolverSummary& s : summary.solvers) {
    std::string status = s.status;
    std::replace(status.begin(), status.end(), ',', ';');
    out << s.solver << ',' << status << ',';
    if (std::isnan(s.best_feasible_objective)) out << "nan";
    else out << s.best_feasible_objective;
    out << ',' << s.time_to_first_feasible_s << ',' << s.outer_iterations << ',' << s.mean_outer_time_s << ','
        << s.std_outer_time_s << ',' << s.final_objective << ',' << s.final_max_infeasibility << ','
        << s.inner_iterations << '\n';
  }
  if (summary.oracle_objective) {
    out << "oracle,ok," << *summary.oracle_objective << ",-1,0,0,0," << *summary.oracle_objective << ",0,0\n";
  }
}

RunReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto problem = build_problem(cfg);
  std::mt19937_64 rng(cfg.seed);
  RunReport report;
  report.start = initial_point(cfg, *problem, rng);
  fs::create_directories(cfg.output_dir);
  const SolverOptions options = cfg.solver_options();

  for (SolverKind kind : cfg.solvers) {
    const std::string name = to_string(kind);
    SolverTrace trace;
    std::string status = "ok";
    try {
      switch (kind) {
        case SolverKind::pm: trace = penalty_method(*problem, cfg.C, report.start, options).trace; break;
        case SolverKind::pga: trace = pga::pga(*problem, cfg.C, report.start, options).trace; break;
        case SolverKind::ipdd:
          trace = ipdd(*problem, cfg.ipdd_state(problem->horizon()), report.start, options).trace;
          break;
      }
    } catch (const NumericalFailure& e) {
      status = std::string("numerical_failure: ") + e.what();
      report.numerical_failure = true;
      trace.solver_name = name;
    }
    const fs::path trace_path = cfg.output_dir / (name + "_trace.csv");
    write_trace_csv(trace_path, trace);
    report.files.push_back(trace_path);
    if (cfg.record_iterates) {
      const fs::path it_path = cfg.output_dir / (name + "_iterates.csv");
      write_iterates_csv(it_path, trace);
      report.files.push_back(it_path);
    }
    SolverSummary s = summarize(trace);
    s.solver = name;
    if (status != "ok") s.status = status;
    report.summary.solvers.push_back(s);
    report.traces.push_back(std::move(trace));
  }

  if (cfg.domain == Domain::ndim) {
    const auto& nd = dynamic_cast<const NdimProblem&>(*problem);
    if (const auto o = oracle_optimum(nd, cfg.oracle_grid_step)) {
      report.summary.oracle_objective = o->objective;
      report.summary.oracle_point = o->point;
    }
  }
  const fs::path summary_path = cfg.output_dir / "summary.csv";
  write_summary_csv(summary_path, report.summary);
  report.files.push_back(summary_path);
  const fs::path sidecar = cfg.output_dir / "config.json";
  std::ofstream(sidecar) << cfg.to_json().dump(2) << '\n';
  report.files.push_back(sidecar);
  return report;
}

TractabilityResult tractability_metrics(const std::vector<Vector>& finals, const std::vector<double>& initial_objectives,
                                        double best_feasible_objective, const FeasibleSet& set) {
  if (finals.empty() || finals.size() != initial_objectives.size()) {
    throw ContractViolation("tractability_metrics: need one initial objective per final point");
  }
  TractabilityResult r;
  r.finals = finals;
  r.initial_objectives = initial_objectives;
  r.best_feasible_objective = best_feasible_objective;
  double max_dist = 0.0;
  for (std::size_t a = 0; a < finals.size(); ++a) {
    for (std::size_t b = a + 1; b < finals.size(); ++b) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < finals[a].size(); ++c) d2 += (finals[a][c] - finals[b][c]) * (finals[a][c] - finals[b][c]);
      max_dist = std::max(max_dist, std::sqrt(d2));
    }
  }
  const double min_init = *std::min_element(initial_objectives.begin(), initial_objectives.end());
  r.ed = max_dist / std::abs(min_init);
  const Vector lo = set.lower_corner();
  const Vector hi = set.upper_corner();
  double span2 = 0.0;
  for (std::size_t c = 0; c < lo.size(); ++c) span2 += (hi[c] - lo[c]) * (hi[c] - lo[c]);
  r.threshold = 0.01 * std::sqrt(span2) / std::abs(best_feasible_objective);
  r.passed = r.ed < r.threshold;
  return r;
}

TractabilityResult tractability_study(const ExperimentConfig& cfg, std::size_t n_inits) {
  cfg.validate();
  if (n_inits == 0) throw ContractViolation("tractability_study: n_inits must be positive");
  const auto problem = build_problem(cfg);
  std::mt19937_64 rng(cfg.seed);
  SolverOptions options = cfg.solver_options();
  options.record_iterates = false;
  if (cfg.tractability_time_limit_s > 0.0) options.time_limit_s = cfg.tractability_time_limit_s;
  std::vector<Vector> finals;
  std::vector<double> init_obj;
  double best = std::numeric_limits<double>::infinity();
  long feasible_runs = 0;
  for (std::size_t k = 0; k < n_inits; ++k) {
    const Vector start = sample_init(*problem, rng, cfg.init_lo, cfg.init_hi);
    init_obj.push_back(problem->objective(start));
    const PgaResult r = pga::pga(*problem, cfg.C, start, options);
    if (r.best_feasible) {
      feasible_runs += 1;
      best = std::min(best, r.best_objective);
      finals.push_back(*r.best_feasible);
    } else {
      finals.push_back(r.last);
    }
  }
  if (!std::isfinite(best)) {
    best = *std::min_element(init_obj.begin(), init_obj.end());
  }
  TractabilityResult res = tractability_metrics(finals, init_obj, best, problem->feasible_set());
  res.feasible_runs = feasible_runs;
  fs::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / "tractability.csv");
  out << std::setprecision(12) << "init,initial_objective,final_objective\n";
  for (std::size_t k = 0; k < finals.size(); ++k) {
    out << k << ',' << init_obj[k] << ',' << problem->objective(finals[k]) << '\n';
  }
  out << "# ed=" << res.ed << " threshold=" << res.threshold << " passed=" << (res.passed ? 1 : 0) << '\n';
  return res;
}

std::vector<SweepRow> sweep_C(const ExperimentConfig& cfg, const std::vector<double>& Cs) {
  if (Cs.size() < 2) throw ConfigError("sweep-c needs at least two values of C");
  for (double c : Cs) {
    if (!(c > 0.0)) throw ConfigError("sweep-c values must be positive");
  }
  cfg.validate();
  const auto problem = build_problem(cfg);
  std::mt19937_64 rng(cfg.seed);
  const Vector start = initial_point(cfg, *problem, rng);
  SolverOptions options = cfg.solver_options();
  options.record_iterates = false;
  std::vector<SweepRow> rows;
  for (double C : Cs) {
    const PenaltyMethodResult r = penalty_method(*problem, C, start, options);
    const Infeasibility inf = max_infeasibility(*problem, r.solution);
    rows.push_back({C, problem->objective(r.solution), inf.signed_worst, inf.worst_index, r.inner_iterations});
  }
  fs::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir / "sweep_c.csv");
  out << std::setprecision(12) << "C,objective,gamma_max,worst_index,inner_iterations\n";
  for (const SweepRow& r : rows) {
    out << r.C << ',' << r.objective << ',' << r.signed_worst << ',' << r.worst_index << ',' << r.inner_iterations << '\n';
  }
  return rows;
}

dhs::Dataset dataset_for(const ExperimentConfig& cfg) {
  if (!cfg.dataset_file.empty()) return dhs::load_dataset_csv(cfg.dataset_file);
  dhs::DatasetOptions opts;
  opts.window_n = cfg.window_n;
  opts.episode_length = cfg.dhs.horizon;
  return dhs::generate_dataset(cfg.dhs, cfg.dataset_episodes, cfg.dataset_seed, opts);
}

SurrogateTraining train_surrogate(const ExperimentConfig& cfg) {
  SurrogateTraining out;
  out.data = dataset_for(cfg);
  const nn::FeatureScaling scaling = nn::FeatureScaling::defaults(cfg.dhs);
  out.g = nn::train(out.data, cfg.train_g, nn::Target::g, scaling);
  out.f = nn::train(out.data, cfg.train_f, nn::Target::f, scaling);
  out.model.g = out.g.net;
  out.model.f = out.f.net;
  out.model.scaling = scaling;
  out.model.window_n = out.data.window_n;
  out.model.validate();
  return out;
}

namespace {

Vector random_point(const FeasibleSet& set, std::mt19937_64& rng, double margin) {
  Vector u(set.dimension());
  if (set.kind() == FeasibleSet::Kind::box) {
    for (std::size_t c = 0; c < u.size(); ++c) {
      u[c] = std::uniform_real_distribution<double>(set.box_lo()[c] + margin, set.box_hi()[c] - margin)(rng);
    }
    return u;
  }
  const ConvexPolygon& poly = set.polygon();
  for (std::size_t c = 0; c + 1 < u.size(); c += 2) {
    const double h = std::uniform_real_distribution<double>(poly.min_x() + margin, poly.max_x() - margin)(rng);
    const double lo = poly.lower_y_at(h);
    const double hi = poly.upper_y_at(h);
    u[c] = h;
    u[c + 1] = std::uniform_real_distribution<double>(lo + margin, hi - margin)(rng);
  }
  return u;
}

}  // namespace

GradientReport validate_gradients(const ExperimentConfig& cfg, const PenaltyProblem& problem, std::size_t n_points) {
  GradientReport rep;
  rep.threshold = cfg.domain == Domain::dhs_surrogate ? 1e-3 : 1e-4;
  std::mt19937_64 rng(cfg.seed);
  const auto* simplified = dynamic_cast<const dhs::SimplifiedDhsProblem*>(&problem);
  const double margin = cfg.domain == Domain::ndim ? 1e-3 : 0.5;
  for (std::size_t k = 0; k < n_points; ++k) {
    Vector u = random_point(problem.feasible_set(), rng, margin);
    if (cfg.domain == Domain::dhs_simplified && simplified != nullptr) {
      u = problem.feasible_set().projected(u);
      rep.max_error = std::max(rep.max_error, dhs::frozen_gradient_error(*simplified, u, 1e-4));
    } else {
      const double step = cfg.domain == Domain::ndim ? 1e-5 : 1e-6;
      for (std::size_t i = 0; i < problem.horizon(); ++i) {
        rep.max_error = std::max(rep.max_error, check_gradient(ConstraintObjective(problem, i), u, step));
      }
      rep.max_error = std::max(rep.max_error, check_gradient(PenaltyObjective(problem, cfg.C), u, step));
    }
    rep.points += 1;
  }
  rep.passed = rep.max_error < rep.threshold;
  return rep;
}

}  // namespace pga::exp
