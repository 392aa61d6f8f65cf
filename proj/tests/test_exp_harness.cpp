#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pga/error.hpp"
#include "pga/exp_harness.hpp"
#include "pga/ndim_problem.hpp"

using namespace pga;
using namespace pga::exp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("pga_harness_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string drop_first_column(const std::string& line) { return line.substr(line.find(',') + 1); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream s(line);
  for (std::string cell; std::getline(s, cell, ',');) out.push_back(cell);
  return out;
}

ExperimentConfig quick_ndim(const fs::path& out) {
  ExperimentConfig c = ExperimentConfig::defaults(Domain::ndim);
  c.max_outer_iters = 30;
  c.time_limit_s = 60;
  c.seed = 3;
  c.output_dir = out;
  return c;
}

int cli(const std::string& args) {
  const std::string cmd = std::string(PGA_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("empty config reproduces the ndim defaults") {
  const ExperimentConfig c = ExperimentConfig::from_json(json::object());
  CHECK(c.domain == Domain::ndim);
  CHECK(c.C == 0.05);
  CHECK(c.stop.window_n == 50);
  CHECK(c.stop.delta == 1e-6);
  CHECK(c.time_limit_s == 60.0);
  CHECK(c.solvers.size() == 3);
  CHECK(c.init_lo == 0.0);
  CHECK(c.init_hi == 10.0);
}

TEST_CASE("domain defaults for the heating domains") {
  const auto s = ExperimentConfig::from_json(json{{"domain", "dhs_simplified"}});
  CHECK(s.C == 100.0);
  CHECK(s.stop.window_n == 1000);
  CHECK(s.stop.delta == 0.1);
  CHECK(s.time_limit_s == 300.0);
  CHECK(s.init_lo == 60.0);
  CHECK(s.demand.season == dhs::Season::winter);
  const auto g = ExperimentConfig::from_json(json{{"domain", "dhs_surrogate"}});
  CHECK(g.C == 100.0);
  CHECK(g.demand.season == dhs::Season::spring);
  CHECK_THROWS_AS(build_problem(g), ConfigError);
}

TEST_CASE("config keys overlay defaults and unknown keys are rejected") {
  const json j = json::parse(R"({
    "domain": "ndim", "solvers": ["pga"], "seed": 9, "time_limit_s": 5,
    "penalty": {"C": 0.5}, "ipdd": {"rho0": 2.0},
    "stop": {"window_n": 10, "delta": 1e-5, "mode": "per_step"},
    "init": {"mode": "explicit", "point": [4, 2, 2]},
    "demand": {"file": "q.csv"}
  })");
  const auto c = ExperimentConfig::from_json(j, "/base");
  CHECK(c.solvers == std::vector<SolverKind>{SolverKind::pga});
  CHECK(c.seed == 9);
  CHECK(c.C == 0.5);
  CHECK(c.rho0 == 2.0);
  CHECK(c.ipdd_state(3).rho == 2.0);
  CHECK(c.stop.window_n == 10);
  CHECK(c.stop.mode == StopMode::per_step);
  CHECK(c.init_mode == InitMode::explicit_point);
  CHECK(c.demand.file == fs::path("/base/q.csv"));
  CHECK(c.stop.max_inner_iters == 200000);

  const auto round = ExperimentConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());

  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"stop", {{"windw_n", 3}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"seed", "x"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"domain", "moon"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(json{{"solvers", {"sqp"}}}), ConfigError);
}

TEST_CASE("validation catches bad values and missing files") {
  ExperimentConfig c = ExperimentConfig::defaults(Domain::ndim);
  c.time_limit_s = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Domain::dhs_simplified);
  c.demand.kind = "file";
  c.demand.file = "/nonexistent/demand.csv";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ExperimentConfig::defaults(Domain::ndim);
  c.stop.delta = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("initial points from each init mode") {
  const fs::path dir = scratch_dir("init");
  ExperimentConfig c = ExperimentConfig::defaults(Domain::ndim);
  const auto prob = build_problem(c);
  std::mt19937_64 rng(1);
  const Vector s = initial_point(c, *prob, rng);
  CHECK(is_feasible(*prob, s));
  for (double x : s) CHECK(x == std::round(x));

  c.init_mode = InitMode::explicit_point;
  c.init_point = {4, 2, 2};
  CHECK(initial_point(c, *prob, rng) == Vector{4, 2, 2});
  c.init_point = {4, 2};
  CHECK_THROWS_AS(initial_point(c, *prob, rng), ConfigError);
  c.init_point = {4, 2, 12};
  CHECK_THROWS_AS(initial_point(c, *prob, rng), ConfigError);

  c.init_mode = InitMode::file;
  c.init_file = dir / "start.txt";
  std::ofstream(c.init_file) << "5, 3, 1\n";
  CHECK(initial_point(c, *prob, rng) == Vector{5, 3, 1});
}

TEST_CASE("run writes the file set and the summary is derived from the traces") {
  const fs::path dir = scratch_dir("run");
  const ExperimentConfig c = quick_ndim(dir / "out");
  const RunReport rep = run(c);
  CHECK_FALSE(rep.numerical_failure);
  for (const char* f : {"pm_trace.csv", "pga_trace.csv", "ipdd_trace.csv", "summary.csv", "config.json",
                        "pm_iterates.csv", "pga_iterates.csv", "ipdd_iterates.csv"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    ++entries;
    CHECK(e.path().filename() == "out");
  }
  CHECK(entries == 1);
  CHECK(rep.summary.oracle_objective.has_value());
  CHECK(*rep.summary.oracle_objective <= 6.511);

  const auto rows = read_lines(dir / "out" / "summary.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].rfind("solver,status,best_feasible_objective", 0) == 0);
  for (std::size_t r = 1; r <= 3; ++r) {
    const auto cells = split(rows[r]);
    const SolverSummary s = summarize(read_trace_csv(dir / "out" / (cells[0] + "_trace.csv")));
    CHECK(cells[1] == "ok");
    if (cells[2] == "nan") {
      CHECK(std::isnan(s.best_feasible_objective));
    } else {
      CHECK(std::stod(cells[2]) == doctest::Approx(s.best_feasible_objective).epsilon(1e-10));
    }
    CHECK(std::stol(cells[4]) == s.outer_iterations);
    CHECK(std::stod(cells[5]) == doctest::Approx(s.mean_outer_time_s).epsilon(1e-9));
    CHECK(std::stod(cells[8]) == doctest::Approx(s.final_max_infeasibility).epsilon(1e-9));
  }
  CHECK(split(rows[2])[4] == "30");

  const auto echoed = ExperimentConfig::from_json(json::parse(std::ifstream(dir / "out" / "config.json")));
  CHECK(echoed.max_outer_iters == 30);
}

TEST_CASE("a rerun with the same seed reproduces traces apart from wall time") {
  const fs::path dir = scratch_dir("determinism");
  run(quick_ndim(dir / "a"));
  run(quick_ndim(dir / "b"));
  for (const char* f : {"pm_trace.csv", "pga_trace.csv", "ipdd_trace.csv"}) {
    const auto a = read_lines(dir / "a" / f), b = read_lines(dir / "b" / f);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 1; k < a.size(); ++k) CHECK(drop_first_column(a[k]) == drop_first_column(b[k]));
  }
  for (const char* f : {"pga_iterates.csv", "ipdd_iterates.csv"}) {
    CHECK(read_lines(dir / "a" / f) == read_lines(dir / "b" / f));
  }
}

TEST_CASE("tractability metric definitions") {
  const FeasibleSet box = FeasibleSet::box({0, 0}, {10, 10});
  const auto one = tractability_metrics({{1, 2}}, {5.0}, 3.0, box);
  CHECK(one.ed == 0.0);
  CHECK(one.passed);
  const auto same = tractability_metrics({{1, 2}, {1, 2}}, {5.0, 4.0}, 3.0, box);
  CHECK(same.ed == 0.0);
  const auto r = tractability_metrics({{0, 0}, {3, 4}, {1, 1}}, {10.0, 8.0, 20.0}, 2.0, box);
  CHECK(r.ed == doctest::Approx(5.0 / 8.0));
  CHECK(r.threshold == doctest::Approx(0.01 * std::sqrt(200.0) / 2.0));
  CHECK_FALSE(r.passed);
}

TEST_CASE("tractability study on ndim") {
  const fs::path dir = scratch_dir("tract");
  ExperimentConfig c = quick_ndim(dir);
  c.max_outer_iters = 200;
  const auto one = tractability_study(c, 1);
  CHECK(one.ed == 0.0);
  const auto r = tractability_study(c, 3);
  CHECK(r.finals.size() == 3);
  CHECK(r.feasible_runs == 3);
  CHECK(fs::exists(dir / "tractability.csv"));
}

TEST_CASE("C sweep rejects a single value and reproduces the ndim trend") {
  const fs::path dir = scratch_dir("sweep");
  ExperimentConfig c = quick_ndim(dir);
  c.init_mode = InitMode::explicit_point;
  c.init_point = {4, 2, 2};
  CHECK_THROWS_AS(sweep_C(c, {0.05}), ConfigError);
  const auto rows = sweep_C(c, {0.0005, 0.05, 5});
  REQUIRE(rows.size() == 3);
  for (std::size_t k = 1; k < 3; ++k) {
    CHECK(std::abs(rows[k].signed_worst) < std::abs(rows[k - 1].signed_worst));
    CHECK(rows[k].objective > rows[k - 1].objective);
  }
  CHECK(read_lines(dir / "sweep_c.csv").size() == 4);
}

TEST_CASE("gradient validation passes on the analytic domains") {
  ExperimentConfig c = ExperimentConfig::defaults(Domain::ndim);
  const auto nd = build_problem(c);
  const auto a = validate_gradients(c, *nd, 20);
  CHECK(a.passed);
  CHECK(a.points == 20);
  c = ExperimentConfig::defaults(Domain::dhs_simplified);
  const auto sd = build_problem(c);
  const auto b = validate_gradients(c, *sd, 20);
  CHECK(b.passed);
  CHECK(b.max_error < 1e-4);
}

TEST_CASE("demand from a file is rescaled and checked against the horizon") {
  const fs::path dir = scratch_dir("demand");
  ExperimentConfig c = ExperimentConfig::defaults(Domain::dhs_simplified);
  c.demand.kind = "file";
  c.demand.file = dir / "q.csv";
  c.demand.scale_to = 67.0;
  {
    std::ofstream out(c.demand.file);
    for (int i = 0; i < 12; ++i) out << 20 + i << '\n';
  }
  const auto q = load_demand_for(c);
  CHECK(q.size() == 12);
  CHECK(q.back() == doctest::Approx(67.0));
  c.dhs.horizon = 24;
  CHECK_THROWS_AS(load_demand_for(c), ConfigError);
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch_dir("cli");
  CHECK(cli("--help") == 0);
  CHECK(cli("run --no-such-flag") == 1);
  CHECK(cli("frobnicate") == 1);
  std::ofstream(dir / "bad.json") << R"({"nonsense": true})";
  CHECK(cli("run --config " + (dir / "bad.json").string()) == 1);
  CHECK(cli("sweep-c --C 1") == 1);
  CHECK(cli("run --domain dhs_surrogate") == 1);
  CHECK(cli("validate-gradients --domain dhs_simplified --points 5") == 0);
  CHECK(cli("run --domain ndim --max-outer 5 --out " + (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "summary.csv"));
}
