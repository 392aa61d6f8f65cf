#include "pga/dhs_physics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "pga/error.hpp"

namespace pga::dhs {

namespace {

constexpr double kWattsPerMegawatt = 1e6;

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ContractViolation(std::string("DhsParams: ") + name + " must be positive and finite");
  }
}

}  // namespace

void DhsParams::validate() const {
  require_positive(dt_s, "dt_s");
  require_positive(length_m, "length_m");
  require_positive(area_m2, "area_m2");
  require_positive(heat_capacity, "heat_capacity");
  require_positive(density, "density");
  require_positive(min_flow, "min_flow");
  require_positive(nominal_flow, "nominal_flow");
  if (!(heat_transfer >= 0.0)) throw ContractViolation("DhsParams: heat_transfer must be non-negative");
  if (!(max_flow > min_flow)) throw ContractViolation("DhsParams: max_flow must exceed min_flow");
  if (!(max_supply_temp > min_supply_temp)) {
    throw ContractViolation("DhsParams: max_supply_temp must exceed min_supply_temp");
  }
  if (supply_temp < min_supply_temp || supply_temp > max_supply_temp) {
    throw ContractViolation("DhsParams: supply_temp outside the supply-temperature bounds");
  }
  if (!(supply_temp > return_temp)) throw InvalidTemperature("supply_temp must exceed return_temp");
  if (horizon == 0) throw ContractViolation("DhsParams: horizon must be positive");
  if (chp_vertices.size() != 4) throw ContractViolation("DhsParams: the CHP region needs four vertices");
  (void)chp_region();
}

double schedule_cost(std::span<const double> u, const DhsParams& params) {
  if (u.size() % 2 != 0) throw ContractViolation("schedule_cost: u must hold (h, p) pairs");
  double J = 0.0;
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) J += params.a0 * u[i] + params.a1 * u[i + 1];
  return J;
}

void schedule_cost_gradient(std::span<const double> u, const DhsParams& params, std::span<double> grad) {
  if (u.size() % 2 != 0 || grad.size() != u.size()) throw ContractViolation("schedule_cost_gradient: bad shape");
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
    grad[i] = params.a0;
    grad[i + 1] = params.a1;
  }
}

PipeHistory::PipeHistory(std::size_t capacity) : buffer_(capacity) {
  if (capacity == 0) throw ContractViolation("PipeHistory: capacity must be positive");
}

std::size_t PipeHistory::required_capacity(const DhsParams& params, std::size_t extra) {
  return static_cast<std::size_t>(std::ceil(params.pipe_mass() / (params.min_flow * params.dt_s))) + 1 + extra;
}

void PipeHistory::push(FlowRecord record) {
  head_ = (count_ == 0) ? 0 : (head_ + 1) % buffer_.size();
  buffer_[head_] = record;
  count_ = std::min(count_ + 1, buffer_.size());
}

const FlowRecord& PipeHistory::lag(std::size_t k) const {
  if (k >= count_) throw InsufficientHistory("pipe history has no record at lag " + std::to_string(k));
  return buffer_[(head_ + buffer_.size() - k) % buffer_.size()];
}

Delays delays(const PipeHistory& history, const DhsParams& params) {
  const double volume = params.pipe_mass();
  const std::size_t n = history.size();
  Delays d;
  bool found = false;
  double cum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    cum += history.lag(k).mass_flow * params.dt_s;
    if (cum >= volume) {
      d.gamma = k;
      found = true;
      break;
    }
  }
  if (!found) throw InsufficientHistory("cumulative flow never reaches the pipe volume (gamma)");
  found = false;
  cum = 0.0;
  for (std::size_t k = 1; k < n; ++k) {
    cum += history.lag(k).mass_flow * params.dt_s;
    if (cum >= volume) {
      d.n_w = k;
      found = true;
      break;
    }
  }
  if (!found) throw InsufficientHistory("cumulative flow never reaches the pipe volume (n_w)");
  return d;
}

FlowMasses flow_masses(const PipeHistory& history, Delays d, const DhsParams& params) {
  FlowMasses m;
  for (std::size_t k = 0; k <= d.gamma; ++k) m.R += history.lag(k).mass_flow * params.dt_s;
  if (d.n_w >= d.gamma + 1) {
    for (std::size_t k = 0; k < d.n_w; ++k) m.S += history.lag(k).mass_flow * params.dt_s;
  } else {
    m.S = m.R;
  }
  return m;
}

std::vector<NodeWeight> node_weights(const PipeHistory& history, Delays d, FlowMasses m,
                                     const DhsParams& params) {
  const double volume = params.pipe_mass();
  std::vector<NodeWeight> w;
  w.push_back({d.gamma, m.R - volume});
  for (std::size_t k = d.gamma + 1; k < d.n_w; ++k) w.push_back({k, history.lag(k).mass_flow * params.dt_s});
  w.push_back({d.n_w, history.lag(0).mass_flow * params.dt_s + volume - m.S});
  return w;
}

double outlet_temp_no_loss(const PipeHistory& history, const DhsParams& params) {
  const Delays d = delays(history, params);
  const FlowMasses m = flow_masses(history, d, params);
  double acc = 0.0;
  for (const NodeWeight& w : node_weights(history, d, m, params)) acc += w.mass * history.lag(w.lag).inlet_temp;
  return acc / (history.lag(0).mass_flow * params.dt_s);
}

double loss_factor(Delays d, FlowMasses m, double current_flow, const DhsParams& params) {
  const double residence = static_cast<double>(d.gamma) + 0.5 + (m.S - m.R) / (current_flow * params.dt_s);
  return std::exp(-params.loss_rate() * residence);
}

double outlet_temp_with_loss(double tau_no_loss, const PipeHistory& history, const DhsParams& params) {
  const Delays d = delays(history, params);
  const FlowMasses m = flow_masses(history, d, params);
  const double e = loss_factor(d, m, history.lag(0).mass_flow, params);
  return params.ambient_temp + (tau_no_loss - params.ambient_temp) * e;
}

FlowFromHeat chp_heat_to_flow(double heat_mw, double tau_in, double tau_ret, const DhsParams& params) {
  if (!(tau_in > tau_ret)) throw InvalidTemperature("inlet temperature must exceed return temperature");
  if (!(heat_mw >= 0.0)) throw ContractViolation("chp_heat_to_flow: heat must be non-negative");
  const double raw = heat_mw * kWattsPerMegawatt / (params.heat_capacity * (tau_in - tau_ret));
  FlowFromHeat out;
  out.mass_flow = std::clamp(raw, params.min_flow, params.max_flow);
  out.clamped = out.mass_flow != raw;
  return out;
}

namespace {

FlowRecord record_for(double heat_mw, const DhsParams& params, SupplyControl control, bool* clamped) {
  FlowRecord r;
  if (control == SupplyControl::fixed_temperature) {
    const FlowFromHeat f = chp_heat_to_flow(heat_mw, params.supply_temp, params.return_temp, params);
    r.inlet_temp = params.supply_temp;
    r.mass_flow = f.mass_flow;
    if (clamped) *clamped = f.clamped;
  } else {
    r.mass_flow = params.nominal_flow;
    r.inlet_temp = params.return_temp + heat_mw * kWattsPerMegawatt / (params.heat_capacity * params.nominal_flow);
    if (clamped) *clamped = false;
  }
  return r;
}

}  // namespace

PipeHistory warmup_history(const DhsParams& params, double heat_mw, SupplyControl control) {
  params.validate();
  PipeHistory history(PipeHistory::required_capacity(params));
  const FlowRecord r = record_for(heat_mw, params, control, nullptr);
  for (std::size_t k = 0; k < history.capacity(); ++k) history.push(r);
  return history;
}

SimResult simulate(std::span<const double> schedule, std::span<const double> demand,
                   const DhsParams& params, PipeHistory& history, SupplyControl control) {
  if (schedule.size() % 2 != 0) throw ContractViolation("simulate: schedule must hold (h, p) pairs");
  const std::size_t T = schedule.size() / 2;
  if (demand.size() != T) throw ContractViolation("simulate: demand length must match the schedule");
  SimResult out;
  out.delivered.reserve(T);
  out.states.reserve(T);
  out.violations.reserve(T);
  out.flow_clamped.reserve(T);
  for (std::size_t i = 0; i < T; ++i) {
    bool clamped = false;
    const FlowRecord r = record_for(schedule[2 * i], params, control, &clamped);
    history.push(r);
    const double tau_nl = outlet_temp_no_loss(history, params);
    const double tau_out = outlet_temp_with_loss(tau_nl, history, params);
    const double y = params.heat_capacity * r.mass_flow * (tau_out - params.return_temp) / kWattsPerMegawatt;
    out.delivered.push_back(y);
    out.states.push_back({r.inlet_temp, tau_out, r.mass_flow});
    out.violations.push_back(y - demand[i]);
    out.flow_clamped.push_back(clamped);
  }
  return out;
}

std::vector<double> load_demand(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open demand file " + path.string());
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream s(line.substr(first));
    double x = 0.0;
    std::string rest;
    if (!(s >> x) || (s >> rest)) {
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": expected one number");
    }
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": demand must be positive");
    }
    v.push_back(x);
  }
  if (v.empty()) throw DataFormatError("demand file " + path.string() + " holds no values");
  return v;
}

void save_demand(const std::filesystem::path& path, std::span<const double> demand) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write demand file " + path.string());
  out << std::setprecision(17);
  for (double x : demand) out << x << '\n';
}

std::vector<double> scale_demand(std::span<const double> v, double target_max) {
  if (v.empty()) throw DataFormatError("scale_demand: empty demand");
  for (double x : v) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DataFormatError("scale_demand: demand must be positive");
  }
  if (!(target_max > 0.0)) throw ContractViolation("scale_demand: target must be positive");
  const double peak = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.begin(), v.end());
  if (peak == target_max) return out;
  const double factor = target_max / peak;
  for (double& x : out) x *= factor;
  *std::max_element(out.begin(), out.end()) = target_max;
  return out;
}

std::vector<double> synthetic_demand(std::size_t hours, Season season, std::uint64_t seed,
                                     std::size_t start_hour) {
  if (hours == 0) throw ContractViolation("synthetic_demand: hours must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.5);
  const double base = season == Season::winter ? 50.0 : 22.0;
  const double amp = season == Season::winter ? 12.0 : 7.0;
  const double peak = season == Season::winter ? 67.0 : 32.0;
  std::vector<double> v(hours);
  for (std::size_t t = 0; t < hours; ++t) {
    const double hour = static_cast<double>((start_hour + t) % 24);
    const double e = std::clamp(noise(rng), -3.0, 3.0);
    v[t] = base + amp * std::sin(2.0 * std::numbers::pi * (hour - 12.0) / 24.0) + e;
  }
  return scale_demand(v, peak);
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

SimState steady_state(const PipeHistory& history, const DhsParams& params) {
  const double tau_nl = outlet_temp_no_loss(history, params);
  return {history.lag(0).inlet_temp, outlet_temp_with_loss(tau_nl, history, params), history.lag(0).mass_flow};
}

}  // namespace

Dataset generate_dataset(const DhsParams& params, std::size_t n_episodes, std::uint64_t seed,
                         const DatasetOptions& options) {
  if (n_episodes == 0) throw ContractViolation("generate_dataset: n_episodes must be >= 1");
  if (options.episode_length == 0) throw ContractViolation("generate_dataset: episode_length must be >= 1");
  params.validate();
  const ConvexPolygon region = params.chp_region();
  const double h_max = region.max_x();
  const double h_min = std::max(options.min_heat, region.min_x());
  const std::size_t nw = options.window_n;
  const std::size_t L = options.episode_length;

  std::mt19937_64 master(seed);
  std::vector<std::size_t> order(n_episodes);
  for (std::size_t e = 0; e < n_episodes; ++e) order[e] = e;
  std::shuffle(order.begin(), order.end(), master);
  std::size_t n_test = static_cast<std::size_t>(std::llround(options.test_fraction * static_cast<double>(n_episodes)));
  if (n_episodes >= 2) n_test = std::clamp<std::size_t>(n_test, 1, n_episodes - 1);
  else n_test = 0;
  std::vector<bool> is_test(n_episodes, false);
  for (std::size_t j = 0; j < n_test; ++j) is_test[order[j]] = true;

  Dataset data;
  data.window_n = nw;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(e)};
    std::mt19937_64 rng(sseq);
    const Season season = uniform(rng, 0.0, 1.0) < 0.7 ? Season::winter : Season::spring;
    const auto start_hour = static_cast<std::size_t>(uniform(rng, 0.0, 24.0));
    const std::vector<double> q = synthetic_demand(L, season, rng(), start_hour);

    double offset = uniform(rng, -10.0, 20.0);
    double phi = uniform(rng, 0.0, 1.0);
    std::normal_distribution<double> step_h(0.0, 4.0);
    std::normal_distribution<double> step_phi(0.0, 0.15);
    const double h_warm = std::clamp(q.front() + uniform(rng, -10.0, 15.0), h_min, h_max);
    const double p_warm = region.lower_y_at(h_warm) + phi * (region.upper_y_at(h_warm) - region.lower_y_at(h_warm));

    std::vector<double> schedule(2 * L);
    for (std::size_t i = 0; i < L; ++i) {
      offset = std::clamp(offset + step_h(rng), -20.0, 25.0);
      phi = std::clamp(phi + step_phi(rng), 0.0, 1.0);
      const double h = std::clamp(q[i] + offset, h_min, h_max);
      const double lo = region.lower_y_at(h);
      const double hi = region.upper_y_at(h);
      schedule[2 * i] = h;
      schedule[2 * i + 1] = lo + phi * (hi - lo);
    }

    PipeHistory history = warmup_history(params, h_warm);
    SimState prev = steady_state(history, params);
    const SimResult sim = simulate(schedule, q, params, history);

    // Decisions padded on the left with the warm-up operating point.
    std::vector<double> padded(2 * nw, 0.0);
    for (std::size_t k = 0; k < nw; ++k) {
      padded[2 * k] = h_warm;
      padded[2 * k + 1] = p_warm;
    }
    padded.insert(padded.end(), schedule.begin(), schedule.end());

    for (std::size_t i = 0; i < L; ++i) {
      DatasetRow row;
      row.episode = e;
      row.step = i;
      row.prev_state = prev;
      row.window.assign(padded.begin() + static_cast<std::ptrdiff_t>(2 * i),
                        padded.begin() + static_cast<std::ptrdiff_t>(2 * (i + nw + 1)));
      row.state = sim.states[i];
      row.delivered = sim.delivered[i];
      prev = sim.states[i];
      (is_test[e] ? data.test : data.train).push_back(std::move(row));
    }
  }
  return data;
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write dataset " + path.string());
  out << "split,episode,step,prev_tau_in,prev_tau_out,prev_mass_flow";
  for (std::size_t k = dataset.window_n + 1; k-- > 0;) out << ",h_lag" << k << ",p_lag" << k;
  out << ",tau_in,tau_out,mass_flow,delivered\n";
  out << std::setprecision(17);
  auto write = [&](const std::vector<DatasetRow>& rows, const char* split) {
    for (const DatasetRow& r : rows) {
      out << split << ',' << r.episode << ',' << r.step << ',' << r.prev_state.inlet_temp << ','
          << r.prev_state.outlet_temp << ',' << r.prev_state.mass_flow;
      for (double x : r.window) out << ',' << x;
      out << ',' << r.state.inlet_temp << ',' << r.state.outlet_temp << ',' << r.state.mass_flow << ','
          << r.delivered << '\n';
    }
  };
  write(dataset.train, "train");
  write(dataset.test, "test");
}

Dataset load_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open dataset " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw DataFormatError("dataset " + path.string() + " is empty");
  const std::size_t columns = static_cast<std::size_t>(std::count(header.begin(), header.end(), ',')) + 1;
  if (columns < 12 || (columns - 10) % 2 != 0) throw DataFormatError("dataset header has an unexpected layout");
  Dataset data;
  data.window_n = (columns - 10) / 2 - 1;
  const std::size_t wlen = 2 * (data.window_n + 1);
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    if (cells.size() != columns) {
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    try {
      DatasetRow r;
      r.episode = std::stoul(cells[1]);
      r.step = std::stoul(cells[2]);
      r.prev_state = {std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5])};
      for (std::size_t k = 0; k < wlen; ++k) r.window.push_back(std::stod(cells[6 + k]));
      const std::size_t base = 6 + wlen;
      r.state = {std::stod(cells[base]), std::stod(cells[base + 1]), std::stod(cells[base + 2])};
      r.delivered = std::stod(cells[base + 3]);
      if (cells[0] == "train") data.train.push_back(std::move(r));
      else if (cells[0] == "test") data.test.push_back(std::move(r));
      else throw DataFormatError("unknown split '" + cells[0] + "'");
    } catch (const std::logic_error&) {
      throw DataFormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return data;
}

}  // namespace pga::dhs
