#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "pga/error.hpp"
#include "pga/exp_harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pga;

namespace {

struct CommonFlags {
  std::string config;
  std::string domain;
  std::vector<std::string> solvers;
  std::optional<double> time_limit;
  std::optional<std::uint64_t> seed;
  std::optional<long> max_outer;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--domain", f.domain, "ndim | dhs_simplified | dhs_surrogate");
  app->add_option("--solver", f.solvers, "pm | pga | ipdd (repeatable)");
  app->add_option("--time-limit", f.time_limit, "wall-clock budget per solver, seconds");
  app->add_option("--seed", f.seed, "seed for initial-point sampling");
  app->add_option("--max-outer", f.max_outer, "cap on outer iterations (0 = none)");
  app->add_option("--out", f.out, "output directory");
}

exp::ExperimentConfig load_config(const CommonFlags& f) {
  json j = json::object();
  fs::path base;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config " + f.config + " is not valid JSON: " + e.what());
    }
    base = fs::path(f.config).parent_path();
  }
  if (!f.domain.empty()) j["domain"] = f.domain;
  if (!f.solvers.empty()) j["solvers"] = f.solvers;
  if (f.time_limit) j["time_limit_s"] = *f.time_limit;
  if (f.seed) j["seed"] = *f.seed;
  if (f.max_outer) j["max_outer_iters"] = *f.max_outer;
  exp::ExperimentConfig cfg = exp::ExperimentConfig::from_json(j, base);
  if (!f.out.empty()) cfg.output_dir = f.out;
  return cfg;
}

void print_summary(const exp::ComparisonSummary& s) {
  std::printf("%-6s %-10s %16s %12s %8s %12s %16s %14s\n", "solver", "status", "best_feasible_J", "t_first_s",
              "outer", "mean_outer_s", "final_J", "final_max_inf");
  for (const auto& r : s.solvers) {
    const std::string status = r.status.substr(0, r.status.find(':'));
    std::printf("%-6s %-10s %16.6f %12.3f %8ld %12.5f %16.6f %14.3e\n", r.solver.c_str(), status.c_str(),
                r.best_feasible_objective, r.time_to_first_feasible_s, r.outer_iterations, r.mean_outer_time_s,
                r.final_objective, r.final_max_infeasibility);
  }
  if (s.oracle_objective) std::printf("oracle %27.6f\n", *s.oracle_objective);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penalty-based constrained optimisation experiments"};
  app.require_subcommand(1);

  CommonFlags run_f, tract_f, sweep_f, train_f, gen_f, grad_f;
  auto* run_cmd = app.add_subcommand("run", "compare solvers from one initial point");
  add_common(run_cmd, run_f);

  auto* tract_cmd = app.add_subcommand("tractability", "PGA from many random initial points");
  add_common(tract_cmd, tract_f);
  std::optional<std::size_t> n_inits;
  tract_cmd->add_option("--n-inits", n_inits, "number of random initial points");

  auto* sweep_cmd = app.add_subcommand("sweep-c", "penalty method over several C values");
  add_common(sweep_cmd, sweep_f);
  std::vector<double> Cs;
  sweep_cmd->add_option("--C", Cs, "penalty weights (two or more)");

  auto* train_cmd = app.add_subcommand("train-surrogate", "train the monotone surrogate networks");
  add_common(train_cmd, train_f);
  std::string dataset_in;
  train_cmd->add_option("--dataset", dataset_in, "dataset CSV (generated when omitted)")->check(CLI::ExistingFile);

  auto* gen_cmd = app.add_subcommand("gen-data", "generate a simulator dataset CSV");
  add_common(gen_cmd, gen_f);
  std::optional<std::size_t> episodes;
  gen_cmd->add_option("--episodes", episodes, "number of episodes");

  auto* grad_cmd = app.add_subcommand("validate-gradients", "finite-difference check of analytic gradients");
  add_common(grad_cmd, grad_f);
  std::size_t n_points = 10;
  grad_cmd->add_option("--points", n_points, "number of random points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run_cmd) {
      const exp::ExperimentConfig cfg = load_config(run_f);
      const exp::RunReport rep = exp::run(cfg);
      print_summary(rep.summary);
      std::printf("wrote %zu files to %s\n", rep.files.size(), cfg.output_dir.string().c_str());
      return rep.numerical_failure ? 2 : 0;
    }
    if (*tract_cmd) {
      const exp::ExperimentConfig cfg = load_config(tract_f);
      const auto r = exp::tractability_study(cfg, n_inits.value_or(cfg.n_inits));
      std::printf("ED %.6e threshold %.6e feasible_runs %ld best_feasible_J %.6f -> %s\n", r.ed, r.threshold,
                  r.feasible_runs, r.best_feasible_objective, r.passed ? "tractable" : "not tractable");
      return 0;
    }
    if (*sweep_cmd) {
      exp::ExperimentConfig cfg = load_config(sweep_f);
      if (Cs.empty()) Cs = cfg.sweep_C;
      const auto rows = exp::sweep_C(cfg, Cs);
      std::printf("%12s %16s %14s %6s %10s\n", "C", "J", "gamma_max", "index", "inner");
      for (const auto& r : rows) {
        std::printf("%12g %16.6f %14.6f %6ld %10ld\n", r.C, r.objective, r.signed_worst, r.worst_index,
                    r.inner_iterations);
      }
      return 0;
    }
    if (*train_cmd) {
      exp::ExperimentConfig cfg = load_config(train_f);
      if (!dataset_in.empty()) cfg.dataset_file = dataset_in;
      const auto t = exp::train_surrogate(cfg);
      fs::create_directories(cfg.output_dir);
      const fs::path model = cfg.output_dir / "model.json";
      t.model.save(model);
      std::ofstream loss(cfg.output_dir / "training_loss.csv");
      loss << "network,epoch,train_mse,test_mse\n";
      for (const auto* r : {&t.g, &t.f}) {
        const char* name = r == &t.g ? "g" : "f";
        for (std::size_t e = 0; e < r->train_loss.size(); ++e) {
          loss << name << ',' << e + 1 << ',' << r->train_loss[e] << ',' << r->test_loss[e] << '\n';
        }
      }
      std::printf("g: %ld epochs (best %ld)  f: %ld epochs (best %ld)\nmodel written to %s\n", t.g.epochs,
                  t.g.best_epoch, t.f.epochs, t.f.best_epoch, model.string().c_str());
      return 0;
    }
    if (*gen_cmd) {
      exp::ExperimentConfig cfg = load_config(gen_f);
      if (episodes) cfg.dataset_episodes = *episodes;
      cfg.dataset_file.clear();
      const dhs::Dataset data = exp::dataset_for(cfg);
      fs::create_directories(cfg.output_dir);
      const fs::path path = cfg.output_dir / "dataset.csv";
      dhs::save_dataset_csv(path, data);
      std::printf("%zu train rows, %zu test rows written to %s\n", data.train.size(), data.test.size(),
                  path.string().c_str());
      return 0;
    }
    if (*grad_cmd) {
      const exp::ExperimentConfig cfg = load_config(grad_f);
      cfg.validate();
      const auto problem = exp::build_problem(cfg);
      const auto r = exp::validate_gradients(cfg, *problem, n_points);
      std::printf("max relative error %.3e over %zu points (threshold %.0e) -> %s\n", r.max_error, r.points,
                  r.threshold, r.passed ? "PASS" : "FAIL");
      return r.passed ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
