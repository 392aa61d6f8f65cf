#pragma once

// Experiment orchestration: JSON configs, problem construction per domain,
// solver comparisons, tractability study, C sweeps and CSV persistence.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "pga/dhs_simplified.hpp"
#include "pga/monotone_net.hpp"
#include "pga/penalty_solvers.hpp"
#include "pga/surrogate.hpp"

namespace pga::exp {

enum class Domain { ndim, dhs_simplified, dhs_surrogate };
enum class SolverKind { pm, pga, ipdd };
enum class InitMode { sample, explicit_point, file };

std::string to_string(Domain d);
std::string to_string(SolverKind s);
Domain parse_domain(const std::string& s);
SolverKind parse_solver(const std::string& s);

struct DemandSource {
  std::string kind = "synthetic";  // "synthetic" or "file"
  dhs::Season season = dhs::Season::winter;
  std::uint64_t seed = 7;
  std::size_t start_hour = 6;
  std::filesystem::path file;
  /// Rescale loaded data so its peak equals this value (0 keeps it as is).
  double scale_to = 0.0;
};

struct ExperimentConfig {
  Domain domain = Domain::ndim;
  std::vector<SolverKind> solvers{SolverKind::pm, SolverKind::pga, SolverKind::ipdd};
  std::uint64_t seed = 0;
  double time_limit_s = 60.0;
  long max_outer_iters = 0;
  std::filesystem::path output_dir = "out";

  double C = 0.05;
  /// IPDD starting penalty; <= 0 means "use C".
  double rho0 = 0.0;
  double rho_growth = 2.0;
  double violation_shrink = 0.9;
  double rho_max = 1e8;

  AdamConfig adam;
  GdStopRule stop;
  long checkpoint_every = 500;
  bool record_iterates = true;

  InitMode init_mode = InitMode::sample;
  Vector init_point;
  std::filesystem::path init_file;
  double init_lo = 0.0;
  double init_hi = 10.0;

  double ndim_lo = 0.0;
  double ndim_hi = 10.0;
  double oracle_grid_step = 0.01;

  dhs::DhsParams dhs;
  DemandSource demand;
  double warmup_heat_mw = -1.0;

  std::filesystem::path model_file;
  std::filesystem::path dataset_file;
  std::size_t dataset_episodes = 834;
  std::uint64_t dataset_seed = 42;
  std::size_t window_n = 11;
  nn::TrainConfig train_g = nn::TrainConfig::for_target(nn::Target::g);
  nn::TrainConfig train_f = nn::TrainConfig::for_target(nn::Target::f);

  std::vector<double> sweep_C;
  std::size_t n_inits = 20;
  /// Per-init budget of the tractability study (<= 0 means time_limit_s).
  double tractability_time_limit_s = 0.0;

  /// Default settings for `d` (stop rule, C, budget, init range, demand season).
  static ExperimentConfig defaults(Domain d);
  /// Reads the domain first, starts from its defaults and overlays every key
  /// present. Relative paths resolve against `base_dir`. Unknown keys are errors.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// Throws ConfigError on invalid values or missing referenced files.
  void validate() const;

  SolverOptions solver_options() const;
  IpddState ipdd_state(std::size_t T) const;
};

std::vector<double> load_demand_for(const ExperimentConfig& cfg);
std::unique_ptr<PenaltyProblem> build_problem(const ExperimentConfig& cfg);
/// Initial point per the config's init mode; `rng` drives sampling.
Vector initial_point(const ExperimentConfig& cfg, const PenaltyProblem& problem, std::mt19937_64& rng);
/// Integer draws per coordinate in [lo, hi] (box sets) or dhs::sample_feasible_init
/// (polygon sets), accepted once every constraint holds.
Vector sample_init(const PenaltyProblem& problem, std::mt19937_64& rng, double lo, double hi,
                   std::size_t max_tries = 20000);

struct SolverSummary {
  std::string solver;
  std::string status = "ok";
  double best_feasible_objective = std::numeric_limits<double>::quiet_NaN();
  double time_to_first_feasible_s = -1.0;
  long outer_iterations = 0;
  double mean_outer_time_s = 0.0;
  double std_outer_time_s = 0.0;
  double final_objective = 0.0;
  double final_max_infeasibility = 0.0;
  long inner_iterations = 0;
};

/// Statistics derived from a trace alone (completed outer iterations only).
SolverSummary summarize(const SolverTrace& trace);

struct ComparisonSummary {
  std::vector<SolverSummary> solvers;
  std::optional<double> oracle_objective;
  Vector oracle_point;
};

void write_trace_csv(const std::filesystem::path& path, const SolverTrace& trace);
SolverTrace read_trace_csv(const std::filesystem::path& path);
void write_iterates_csv(const std::filesystem::path& path, const SolverTrace& trace);
void write_summary_csv(const std::filesystem::path& path, const ComparisonSummary& summary);

struct RunReport {
  ComparisonSummary summary;
  std::vector<std::filesystem::path> files;
  bool numerical_failure = false;
  Vector start;
  std::vector<SolverTrace> traces;
};

/// Runs every configured solver from the same initial point, writes
/// <solver>_trace.csv, <solver>_iterates.csv, summary.csv and config.json.
RunReport run(const ExperimentConfig& cfg);

struct TractabilityResult {
  double ed = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::vector<Vector> finals;
  std::vector<double> initial_objectives;
  double best_feasible_objective = std::numeric_limits<double>::infinity();
  long feasible_runs = 0;
};

/// Max pairwise distance of final PGA solutions over the lowest initial
/// objective, against 0.01 ||u_max - u_min|| over the lowest feasible objective.
TractabilityResult tractability_metrics(const std::vector<Vector>& finals, const std::vector<double>& initial_objectives,
                                        double best_feasible_objective, const FeasibleSet& set);
TractabilityResult tractability_study(const ExperimentConfig& cfg, std::size_t n_inits);

struct SweepRow {
  double C = 0.0;
  double objective = 0.0;
  double signed_worst = 0.0;
  long worst_index = -1;
  long inner_iterations = 0;
};

/// One penalty-method solve per C from the configured initial point.
std::vector<SweepRow> sweep_C(const ExperimentConfig& cfg, const std::vector<double>& Cs);

struct SurrogateTraining {
  nn::SurrogateModel model;
  nn::TrainResult g;
  nn::TrainResult f;
  dhs::Dataset data;
};

dhs::Dataset dataset_for(const ExperimentConfig& cfg);
SurrogateTraining train_surrogate(const ExperimentConfig& cfg);

struct GradientReport {
  double max_error = 0.0;
  double threshold = 0.0;
  std::size_t points = 0;
  bool passed = false;
};

/// Central-FD check of the constraint Jacobian and of the penalty gradient at
/// `n_points` random points of U (delays frozen on dhs_simplified).
GradientReport validate_gradients(const ExperimentConfig& cfg, const PenaltyProblem& problem, std::size_t n_points);

}  // namespace pga::exp
