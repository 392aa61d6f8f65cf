#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "pga/dhs_physics.hpp"
#include "pga/error.hpp"

using namespace pga;
using namespace pga::dhs;

namespace {

PipeHistory constant_history(const DhsParams& p, double temp, double flow, std::size_t n = 40) {
  PipeHistory h(PipeHistory::required_capacity(p));
  for (std::size_t k = 0; k < n; ++k) h.push({temp, flow});
  return h;
}

PipeHistory random_history(const DhsParams& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> flow(p.min_flow, p.max_flow), temp(70, 120);
  PipeHistory h(PipeHistory::required_capacity(p));
  for (std::size_t k = 0; k < h.capacity(); ++k) h.push({temp(rng), flow(rng)});
  return h;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("pga_test_" + name);
}

}  // namespace

TEST_CASE("pipe mass and delays at 300 kg/s") {
  const DhsParams p;
  CHECK(p.pipe_mass() == doctest::Approx(963.0 * 1.1 * 4000.0));
  CHECK(p.pipe_mass() == doctest::Approx(4237200.0));
  const PipeHistory h = constant_history(p, 90, 300);
  const Delays d = delays(h, p);
  CHECK(d.gamma == 3);
  CHECK(d.n_w == 4);
  const FlowMasses m = flow_masses(h, d, p);
  CHECK(m.R == doctest::Approx(4.32e6));
  CHECK(m.S == doctest::Approx(4.32e6));
}

TEST_CASE("single-step fill") {
  DhsParams p;
  p.dt_s = 7200.0;
  const double flow = 700.0;
  CHECK(flow * p.dt_s >= p.pipe_mass());
  const PipeHistory h = constant_history(p, 90, flow);
  const Delays d = delays(h, p);
  CHECK(d.gamma == 0);
  CHECK(d.n_w == 1);
  const FlowMasses m = flow_masses(h, d, p);
  CHECK(m.R == doctest::Approx(flow * p.dt_s));
  CHECK(m.S == doctest::Approx(m.R));
}

TEST_CASE("constant flow gives n_w = gamma + 1") {
  const DhsParams p;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> flow(20, 810);
  for (int k = 0; k < 200; ++k) {
    const double f = flow(rng);
    const double steps = p.pipe_mass() / (f * p.dt_s);
    if (std::abs(steps - std::round(steps)) < 1e-9) continue;
    const PipeHistory h = constant_history(p, 90, f, 300);
    const Delays d = delays(h, p);
    CHECK(d.n_w == d.gamma + 1);
    CHECK(d.gamma == static_cast<std::size_t>(std::ceil(steps)) - 1);
  }
}

TEST_CASE("short history is reported") {
  const DhsParams p;
  PipeHistory h(10);
  h.push({90, 5});
  h.push({90, 5});
  CHECK_THROWS_AS(delays(h, p), InsufficientHistory);
  CHECK(PipeHistory::required_capacity(p, 0) ==
        static_cast<std::size_t>(std::ceil(p.pipe_mass() / (p.min_flow * p.dt_s))) + 1);
}

TEST_CASE("node-method coefficients conserve mass on random histories") {
  const DhsParams p;
  std::mt19937_64 rng(21);
  for (int t = 0; t < 1000; ++t) {
    const PipeHistory h = random_history(p, rng);
    const Delays d = delays(h, p);
    const FlowMasses m = flow_masses(h, d, p);
    CHECK(d.n_w >= d.gamma);
    CHECK(m.R >= p.pipe_mass());
    // Independent sums from the definitions.
    double R = 0.0;
    for (std::size_t k = 0; k <= d.gamma; ++k) R += h.lag(k).mass_flow * p.dt_s;
    CHECK(m.R == doctest::Approx(R).epsilon(1e-12));
    double total = 0.0;
    double lo = 1e9, hi = -1e9;
    std::map<std::size_t, double> per_lag;
    for (const NodeWeight& w : node_weights(h, d, m, p)) {
      per_lag[w.lag] += w.mass;
      total += w.mass;
      lo = std::min(lo, h.lag(w.lag).inlet_temp);
      hi = std::max(hi, h.lag(w.lag).inlet_temp);
    }
    for (const auto& [lag, mass] : per_lag) CHECK(mass >= -1e-6);
    const double step_mass = h.lag(0).mass_flow * p.dt_s;
    CHECK(std::abs(total - step_mass) <= 1e-9 * step_mass);
    const double tau = outlet_temp_no_loss(h, p);
    CHECK(tau >= lo - 1e-9);
    CHECK(tau <= hi + 1e-9);
    const double out = outlet_temp_with_loss(tau, h, p);
    CHECK(out <= tau);
  }
}

TEST_CASE("outlet temperature examples") {
  const DhsParams p;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> flow(5, 810);
  PipeHistory h(PipeHistory::required_capacity(p));
  for (std::size_t k = 0; k < h.capacity(); ++k) h.push({90, flow(rng)});
  CHECK(outlet_temp_no_loss(h, p) == doctest::Approx(90.0).epsilon(1e-14));

  PipeHistory step = constant_history(p, 70, 300);
  step.push({120, 300});
  CHECK(outlet_temp_no_loss(step, p) == doctest::Approx(70.0).epsilon(1e-14));
}

TEST_CASE("heat-loss worked example") {
  const DhsParams p;
  const PipeHistory h = constant_history(p, 90, 300);
  const double exponent = -(0.735 * 3600.0) / (1.1 * 963.0 * 4181.3) * (3 + 0.5 + 0.0);
  CHECK(exponent == doctest::Approx(-0.002091).epsilon(1e-3));
  const Delays d = delays(h, p);
  const double factor = loss_factor(d, flow_masses(h, d, p), 300, p);
  CHECK(factor == doctest::Approx(std::exp(exponent)).epsilon(1e-12));
  CHECK(factor == doctest::Approx(std::exp(-0.002091)).epsilon(5e-5));
  const double tau = outlet_temp_with_loss(90.0, h, p);
  CHECK(tau == doctest::Approx(89.812).epsilon(1e-5));
}

TEST_CASE("heat-loss limits") {
  DhsParams p;
  p.ambient_temp = 10.0;
  const PipeHistory h = constant_history(p, 90, 300);
  CHECK(outlet_temp_with_loss(10.0, h, p) == doctest::Approx(10.0));
  p.heat_transfer = 0.0;
  CHECK(outlet_temp_with_loss(85.0, h, p) == 85.0);
}

TEST_CASE("steady state outlet") {
  DhsParams p;
  p.ambient_temp = 5.0;
  for (double flow : {50.0, 300.0, 700.0}) {
    const PipeHistory h = constant_history(p, 95, flow, 120);
    CHECK(outlet_temp_no_loss(h, p) == 95.0);
    const Delays d = delays(h, p);
    const double expected = 5.0 + 90.0 * std::exp(-p.loss_rate() * (d.gamma + 0.5));
    CHECK(outlet_temp_with_loss(95.0, h, p) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("heat to flow conversion") {
  const DhsParams p;
  const auto zero = chp_heat_to_flow(0.0, 90, 0, p);
  CHECK(zero.mass_flow == 5.0);
  CHECK(zero.clamped);
  const auto f = chp_heat_to_flow(37.63, 90, 0, p);
  CHECK(f.mass_flow == doctest::Approx(37.63e6 / (4181.3 * 90)));
  CHECK(f.mass_flow == doctest::Approx(100.0).epsilon(1e-3));
  CHECK_FALSE(f.clamped);
  CHECK(chp_heat_to_flow(2 * 37.63, 90, 0, p).mass_flow == doctest::Approx(2 * f.mass_flow));
  CHECK(chp_heat_to_flow(1000, 90, 0, p).clamped);
  CHECK_THROWS_AS(chp_heat_to_flow(10, 50, 50, p), InvalidTemperature);
  CHECK_THROWS_AS(chp_heat_to_flow(-1, 90, 0, p), ContractViolation);
}

TEST_CASE("simulation without loss delivers produced heat") {
  DhsParams p;
  p.heat_transfer = 0.0;
  PipeHistory h = warmup_history(p, 40.0);
  const Vector sched{40, 25, 40, 25, 40, 25};
  const auto r = simulate(sched, Vector{30, 30, 30}, p, h);
  for (double y : r.delivered) CHECK(y == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("constant schedule meets a lower constant demand") {
  const DhsParams p;
  PipeHistory h = warmup_history(p, 50.0);
  Vector sched;
  for (int i = 0; i < 12; ++i) sched.insert(sched.end(), {50.0, 30.0});
  const auto r = simulate(sched, Vector(12, 45.0), p, h);
  for (double v : r.violations) CHECK(v >= 0.0);
  for (double y : r.delivered) CHECK(y < 50.0);
}

TEST_CASE("fixed-flow step responds after gamma steps") {
  const DhsParams p;
  PipeHistory h = warmup_history(p, 30.0, SupplyControl::fixed_flow);
  const Delays d = delays(h, p);
  Vector sched;
  for (int i = 0; i < 8; ++i) sched.insert(sched.end(), {60.0, 30.0});
  PipeHistory base = warmup_history(p, 30.0, SupplyControl::fixed_flow);
  Vector flat;
  for (int i = 0; i < 8; ++i) flat.insert(flat.end(), {30.0, 20.0});
  const auto stepped = simulate(sched, Vector(8, 0.0), p, h, SupplyControl::fixed_flow);
  const auto steady = simulate(flat, Vector(8, 0.0), p, base, SupplyControl::fixed_flow);
  for (std::size_t i = 0; i < 8; ++i) {
    if (i < d.gamma) CHECK(stepped.delivered[i] == doctest::Approx(steady.delivered[i]).epsilon(1e-12));
    else CHECK(stepped.delivered[i] > steady.delivered[i] + 1.0);
  }
}

TEST_CASE("delivered heat is causal") {
  const DhsParams p;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> H(10, 70);
  Vector sched;
  for (int i = 0; i < 12; ++i) sched.insert(sched.end(), {H(rng), 30.0});
  PipeHistory h1 = warmup_history(p, 40.0);
  const auto a = simulate(sched, Vector(12, 0.0), p, h1);
  Vector changed = sched;
  changed[2 * 7] += 5.0;
  PipeHistory h2 = warmup_history(p, 40.0);
  const auto b = simulate(changed, Vector(12, 0.0), p, h2);
  for (std::size_t i = 0; i < 7; ++i) CHECK(a.delivered[i] == b.delivered[i]);
}

TEST_CASE("demand scaling, loading and synthetic profiles") {
  const Vector v{10, 100, 50};
  const Vector s = scale_demand(v, 67.0);
  CHECK(*std::max_element(s.begin(), s.end()) == 67.0);
  CHECK(scale_demand(s, 67.0) == s);
  CHECK_THROWS_AS(scale_demand(Vector{}, 67.0), DataFormatError);
  CHECK_THROWS_AS(scale_demand(Vector{1, -2}, 67.0), DataFormatError);

  const auto winter = synthetic_demand(24, Season::winter, 7);
  CHECK(*std::max_element(winter.begin(), winter.end()) == doctest::Approx(67.0).epsilon(1e-12));
  CHECK(*std::min_element(winter.begin(), winter.end()) >= 20.0);
  CHECK(synthetic_demand(24, Season::winter, 7) == winter);
  const auto spring = synthetic_demand(12, Season::spring, 7);
  CHECK(*std::max_element(spring.begin(), spring.end()) == doctest::Approx(32.0).epsilon(1e-12));

  const auto path = temp_file("demand.csv");
  save_demand(path, winter);
  CHECK(load_demand(path) == winter);
  {
    std::ofstream out(path);
    out << "# comment\n\n12.5\nabc\n";
  }
  CHECK_THROWS_AS(load_demand(path), DataFormatError);
  {
    std::ofstream out(path);
    out << "# only a comment\n";
  }
  CHECK_THROWS_AS(load_demand(path), DataFormatError);
  std::filesystem::remove(path);
}

TEST_CASE("dataset generation is deterministic and stays in the CHP region") {
  const DhsParams p;
  const ConvexPolygon poly = p.chp_region();
  const Dataset a = generate_dataset(p, 20, 5);
  const Dataset b = generate_dataset(p, 20, 5);
  REQUIRE(a.train.size() == b.train.size());
  CHECK(a.train.size() + a.test.size() == 20 * p.horizon);
  CHECK(a.test.size() == 4 * p.horizon);
  for (std::size_t r = 0; r < a.train.size(); ++r) {
    CHECK(a.train[r].window == b.train[r].window);
    CHECK(a.train[r].delivered == b.train[r].delivered);
  }
  for (const auto* rows : {&a.train, &a.test}) {
    for (const DatasetRow& row : *rows) {
      REQUIRE(row.window.size() == 2 * (a.window_n + 1));
      for (std::size_t k = 0; k < row.window.size(); k += 2) {
        CHECK(poly.contains({row.window[k], row.window[k + 1]}, 1e-9));
      }
      CHECK(row.state.mass_flow >= p.min_flow);
      CHECK(row.state.mass_flow <= p.max_flow);
    }
  }

  const auto path = temp_file("dataset.csv");
  save_dataset_csv(path, a);
  const Dataset c = load_dataset_csv(path);
  REQUIRE(c.train.size() == a.train.size());
  REQUIRE(c.test.size() == a.test.size());
  CHECK(c.window_n == a.window_n);
  CHECK(c.train[3].window == a.train[3].window);
  CHECK(c.test.back().delivered == a.test.back().delivered);
  CHECK(c.train[5].prev_state.outlet_temp == a.train[5].prev_state.outlet_temp);
  std::filesystem::remove(path);
}
