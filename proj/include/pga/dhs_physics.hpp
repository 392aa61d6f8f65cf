#pragma once

// Node-method model of a single supply pipe between a CHP plant and one
// consumer. External units are MW, degC, kg/s and hours of the step; the
// pipe computation runs in SI (W, kg, s).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pga/opt_core.hpp"

namespace pga::dhs {

struct DhsParams {
  std::vector<Point2> chp_vertices{{0.0, 10.0}, {10.0, 5.0}, {70.0, 35.0}, {0.0, 50.0}};
  std::size_t horizon = 12;
  double a0 = 8.1817;   // heat cost per MW and step
  double a1 = 38.1805;  // power cost per MW and step
  double dt_s = 3600.0;
  double length_m = 4000.0;
  double area_m2 = 1.1;
  double heat_capacity = 4181.3;  // J/(kg degC)
  double heat_transfer = 0.735;   // W/(m degC)
  double density = 963.0;         // kg/m^3
  double ambient_temp = 0.0;
  double return_temp = 0.0;
  double min_flow = 5.0;
  double max_flow = 810.0;
  double min_supply_temp = 70.0;
  double max_supply_temp = 120.0;
  /// Inlet temperature used to turn produced heat into mass flow.
  double supply_temp = 90.0;
  /// Mass flow held fixed when the plant controls temperature instead.
  double nominal_flow = 300.0;

  /// Water mass held by the pipe, rho * A * L.
  double pipe_mass() const { return density * area_m2 * length_m; }
  /// lambda * dt / (A * rho * c), the heat-loss rate per step of residence.
  double loss_rate() const { return heat_transfer * dt_s / (area_m2 * density * heat_capacity); }
  ConvexPolygon chp_region() const { return ConvexPolygon(chp_vertices); }

  void validate() const;
};

/// sum_i a0 h_i + a1 p_i over u = (h_1, p_1, ..., h_T, p_T).
double schedule_cost(std::span<const double> u, const DhsParams& params);
void schedule_cost_gradient(std::span<const double> u, const DhsParams& params, std::span<double> grad);

struct FlowRecord {
  double inlet_temp = 0.0;  // degC
  double mass_flow = 0.0;   // kg/s
};

/// Bounded history of per-step inlet records; lag 0 is the current step.
class PipeHistory {
 public:
  explicit PipeHistory(std::size_t capacity);

  /// Capacity that covers the longest possible delay under `params` flow bounds.
  static std::size_t required_capacity(const DhsParams& params, std::size_t extra = 16);

  void push(FlowRecord record);
  std::size_t size() const noexcept { return count_; }
  std::size_t capacity() const noexcept { return buffer_.size(); }
  const FlowRecord& lag(std::size_t k) const;

 private:
  std::vector<FlowRecord> buffer_;
  std::size_t head_ = 0;  // slot of the most recent record
  std::size_t count_ = 0;
};

struct Delays {
  std::size_t gamma = 0;
  std::size_t n_w = 0;
};

struct FlowMasses {
  double R = 0.0;  // kg
  double S = 0.0;  // kg
};

/// gamma = min n with sum_{k=0..n} m_{i-k} dt >= rho A L;
/// n_w   = min m with sum_{k=1..m} m_{i-k} dt >= rho A L.
Delays delays(const PipeHistory& history, const DhsParams& params);
FlowMasses flow_masses(const PipeHistory& history, Delays d, const DhsParams& params);

/// Mass weight (kg) attached to each lagged inlet temperature by the node
/// method. Weights sum to m_i dt.
struct NodeWeight {
  std::size_t lag = 0;
  double mass = 0.0;
};
std::vector<NodeWeight> node_weights(const PipeHistory& history, Delays d, FlowMasses m,
                                     const DhsParams& params);

/// Outlet temperature before heat loss.
double outlet_temp_no_loss(const PipeHistory& history, const DhsParams& params);
/// Exponential decay of tau_no_loss toward ambient over the residence time.
double outlet_temp_with_loss(double tau_no_loss, const PipeHistory& history, const DhsParams& params);
/// exp(-loss_rate * (gamma + 1/2 + (S - R) / (m_i dt))).
double loss_factor(Delays d, FlowMasses m, double current_flow, const DhsParams& params);

struct FlowFromHeat {
  double mass_flow = 0.0;  // kg/s
  bool clamped = false;
};

/// m = h / (c (tau_in - tau_ret)), clamped into the configured flow bounds.
FlowFromHeat chp_heat_to_flow(double heat_mw, double tau_in, double tau_ret, const DhsParams& params);

struct SimState {
  double inlet_temp = 0.0;
  double outlet_temp = 0.0;
  double mass_flow = 0.0;
};

enum class SupplyControl {
  /// Inlet temperature fixed at params.supply_temp; heat sets the mass flow.
  fixed_temperature,
  /// Mass flow fixed at params.nominal_flow; heat sets the inlet temperature.
  fixed_flow,
};

/// Steady warm-up history at constant heat, long enough for every delay.
PipeHistory warmup_history(const DhsParams& params, double heat_mw,
                           SupplyControl control = SupplyControl::fixed_temperature);

struct SimResult {
  std::vector<double> delivered;   // MW
  std::vector<SimState> states;
  std::vector<double> violations;  // delivered - demand, MW
  std::vector<bool> flow_clamped;
};

/// Rolls the pipe forward over `schedule` = (h_1, p_1, ..., h_T, p_T) in MW.
/// `history` is consumed as the warm-up and extended in place.
SimResult simulate(std::span<const double> schedule, std::span<const double> demand,
                   const DhsParams& params, PipeHistory& history,
                   SupplyControl control = SupplyControl::fixed_temperature);

/// Reads one positive decimal per line (hourly MW). Blank lines and lines
/// starting with '#' are ignored.
std::vector<double> load_demand(const std::filesystem::path& path);
void save_demand(const std::filesystem::path& path, std::span<const double> demand);
/// Multiplicative scaling so that max(v) == target_max.
std::vector<double> scale_demand(std::span<const double> v, double target_max = 67.0);

enum class Season { winter, spring };

/// Daily sinusoid plus noise. Winter days peak at 67 MW and stay above 20 MW;
/// spring days peak at 32 MW.
std::vector<double> synthetic_demand(std::size_t hours, Season season, std::uint64_t seed,
                                     std::size_t start_hour = 6);

/// One training example for the state-transition and output networks.
struct DatasetRow {
  std::size_t episode = 0;
  std::size_t step = 0;
  SimState prev_state;
  /// (h, p) pairs for lags n_w, n_w-1, ..., 0 (oldest first).
  std::vector<double> window;
  SimState state;
  double delivered = 0.0;
};

struct DatasetOptions {
  std::size_t window_n = 11;
  std::size_t episode_length = 12;
  double min_heat = 5.0;
  double test_fraction = 0.2;
};

struct Dataset {
  std::size_t window_n = 11;
  std::vector<DatasetRow> train;
  std::vector<DatasetRow> test;
};

/// Simulates `n_episodes` random-walk schedules inside the CHP region around
/// sampled demand profiles; splits train/test by episode. Deterministic in seed.
Dataset generate_dataset(const DhsParams& params, std::size_t n_episodes, std::uint64_t seed,
                         const DatasetOptions& options = {});

void save_dataset_csv(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace pga::dhs
