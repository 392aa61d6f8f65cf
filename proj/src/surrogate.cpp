#include "pga/surrogate.hpp"

#include <fstream>

#include "pga/error.hpp"

namespace pga::nn {

namespace {

nlohmann::json normalizer_json(const Normalizer& n) { return {{"min", n.lo}, {"max", n.hi}}; }

Normalizer normalizer_from(const nlohmann::json& j) {
  Normalizer n{j.at("min").get<Vector>(), j.at("max").get<Vector>()};
  n.validate();
  return n;
}

}  // namespace

void SurrogateModel::validate() const {
  const std::size_t n_in = 3 + 2 * (window_n + 1);
  if (g.inputs() != n_in || g.outputs() != 3) throw ContractViolation("surrogate: g must map 3 + window inputs to 3");
  if (f.inputs() != n_in || f.outputs() != 1) throw ContractViolation("surrogate: f must map 3 + window inputs to 1");
  scaling.state.validate();
  scaling.heat.validate();
  scaling.power.validate();
  scaling.output.validate();
  if (scaling.state.size() != 3 || scaling.heat.size() != 1 || scaling.power.size() != 1 ||
      scaling.output.size() != 1) {
    throw ContractViolation("surrogate: scaling has the wrong feature counts");
  }
}

nlohmann::json SurrogateModel::to_json() const {
  nlohmann::json j;
  j["format"] = "dhs-surrogate";
  j["version"] = 1;
  j["window_n"] = window_n;
  j["scaling"] = {{"state", normalizer_json(scaling.state)},
                  {"heat", normalizer_json(scaling.heat)},
                  {"power", normalizer_json(scaling.power)},
                  {"output", normalizer_json(scaling.output)}};
  j["g"] = g.to_json();
  j["f"] = f.to_json();
  return j;
}

SurrogateModel SurrogateModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "dhs-surrogate") throw DataFormatError("not a surrogate model file");
    if (j.at("version").get<int>() != 1) throw DataFormatError("unsupported surrogate model version");
    SurrogateModel m;
    m.window_n = j.at("window_n").get<std::size_t>();
    const auto& s = j.at("scaling");
    m.scaling.state = normalizer_from(s.at("state"));
    m.scaling.heat = normalizer_from(s.at("heat"));
    m.scaling.power = normalizer_from(s.at("power"));
    m.scaling.output = normalizer_from(s.at("output"));
    m.g = MonotoneNet::from_json(j.at("g"));
    m.f = MonotoneNet::from_json(j.at("f"));
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("malformed surrogate model: ") + e.what());
  } catch (const ContractViolation& e) {
    throw DataFormatError(std::string("inconsistent surrogate model: ") + e.what());
  }
}

void SurrogateModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataFormatError("cannot write model " + path.string());
  out << to_json().dump(1) << '\n';
}

SurrogateModel SurrogateModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataFormatError("cannot open model " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("model " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

UnrollStart warmup_start(const dhs::DhsParams& params, double heat_mw) {
  dhs::PipeHistory history = dhs::warmup_history(params, heat_mw);
  UnrollStart s;
  const double tau_nl = dhs::outlet_temp_no_loss(history, params);
  s.s0 = {history.lag(0).inlet_temp, dhs::outlet_temp_with_loss(tau_nl, history, params), history.lag(0).mass_flow};
  s.h_before = heat_mw;
  s.p_before = params.chp_region().lower_y_at(heat_mw);
  return s;
}

namespace {

struct Tape {
  std::vector<Eigen::VectorXd> x_g;
  std::vector<Eigen::VectorXd> x_f;
  UnrollResult result;
};

Tape run_forward(const SurrogateModel& model, std::span<const double> u, const UnrollStart& start) {
  if (u.size() % 2 != 0 || u.empty()) throw ContractViolation("unroll: u must hold (h, p) pairs");
  const std::size_t T = u.size() / 2;
  const std::size_t nw = model.window_n;
  const FeatureScaling& sc = model.scaling;
  Vector padded(2 * nw);
  for (std::size_t k = 0; k < nw; ++k) {
    padded[2 * k] = start.h_before;
    padded[2 * k + 1] = start.p_before;
  }
  padded.insert(padded.end(), u.begin(), u.end());

  Tape tape;
  tape.result.y.resize(T);
  Eigen::VectorXd s = state_vector(start.s0, sc);
  const auto n_in = static_cast<Eigen::Index>(3 + 2 * (nw + 1));
  for (std::size_t i = 0; i < T; ++i) {
    Eigen::VectorXd xg(n_in);
    xg.head(3) = s;
    for (std::size_t k = 0; k < 2 * (nw + 1); k += 2) {
      xg(static_cast<Eigen::Index>(3 + k)) = sc.heat.normalize(0, padded[2 * i + k]);
      xg(static_cast<Eigen::Index>(4 + k)) = sc.power.normalize(0, padded[2 * i + k + 1]);
    }
    s = model.g.forward(xg);
    Eigen::VectorXd xf = xg;
    xf.head(3) = s;
    tape.result.y[i] = sc.output.denormalize(0, model.f.forward(xf)(0));
    tape.result.states.push_back(s);
    tape.x_g.push_back(std::move(xg));
    tape.x_f.push_back(std::move(xf));
  }
  return tape;
}

void run_backward(const SurrogateModel& model, const Tape& tape, std::span<const double> weights,
                  std::span<double> grad) {
  const std::size_t T = tape.x_g.size();
  if (weights.size() != T || grad.size() != 2 * T) throw ContractViolation("unroll_vjp: shape mismatch");
  const std::size_t nw = model.window_n;
  const FeatureScaling& sc = model.scaling;
  const double h_scale = sc.heat.scale(0);
  const double p_scale = sc.power.scale(0);
  Eigen::VectorXd carry = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd v(1);
  for (std::size_t i = T; i-- > 0;) {
    v(0) = weights[i] * sc.output.scale(0);
    const Eigen::VectorXd gf = model.f.input_vjp(tape.x_f[i], v);
    const Eigen::VectorXd adj_s = carry + gf.head(3);
    const Eigen::VectorXd gg = model.g.input_vjp(tape.x_g[i], adj_s);
    carry = gg.head(3);
    for (std::size_t m = 0; m <= nw; ++m) {
      if (i + m < nw) continue;
      const std::size_t step = i + m - nw;
      const auto col = static_cast<Eigen::Index>(3 + 2 * m);
      grad[2 * step] += (gf(col) + gg(col)) / h_scale;
      grad[2 * step + 1] += (gf(col + 1) + gg(col + 1)) / p_scale;
    }
  }
}

}  // namespace

UnrollResult unroll(const SurrogateModel& model, std::span<const double> u, const UnrollStart& start) {
  return run_forward(model, u, start).result;
}

void unroll_vjp(const SurrogateModel& model, std::span<const double> u, const UnrollStart& start,
                std::span<const double> weights, std::span<double> grad) {
  run_backward(model, run_forward(model, u, start), weights, grad);
}

SurrogateDhsProblem::SurrogateDhsProblem(SurrogateModel model, std::vector<double> demand, dhs::DhsParams params,
                                         double warmup_heat_mw)
    : model_(std::move(model)),
      demand_(std::move(demand)),
      params_(std::move(params)),
      set_(FeasibleSet::per_step_polygon(params_.chp_region(), demand_.size())) {
  params_.validate();
  model_.validate();
  if (demand_.empty()) throw ContractViolation("surrogate DHS: demand must not be empty");
  start_ = warmup_start(params_, warmup_heat_mw >= 0.0 ? warmup_heat_mw : demand_.front());
}

double SurrogateDhsProblem::objective(std::span<const double> u) const {
  if (u.size() != dimension()) throw ContractViolation("surrogate DHS: u has the wrong dimension");
  return dhs::schedule_cost(u, params_);
}

void SurrogateDhsProblem::objective_gradient(std::span<const double> u, std::span<double> grad) const {
  if (u.size() != dimension()) throw ContractViolation("surrogate DHS: u has the wrong dimension");
  dhs::schedule_cost_gradient(u, params_, grad);
}

Vector SurrogateDhsProblem::constraints(std::span<const double> u) const {
  if (u.size() != dimension()) throw ContractViolation("surrogate DHS: u has the wrong dimension");
  return unroll(model_, u, start_).y;
}

void SurrogateDhsProblem::constraints_vjp(std::span<const double> u, std::span<const double> weights,
                                          std::span<double> grad) const {
  if (u.size() != dimension()) throw ContractViolation("surrogate DHS: u has the wrong dimension");
  unroll_vjp(model_, u, start_, weights, grad);
}

Vector SurrogateDhsProblem::constraints_with_vjp(std::span<const double> u, const ConstraintWeighting& weigh,
                                                 std::span<double> grad) const {
  if (u.size() != dimension()) throw ContractViolation("surrogate DHS: u has the wrong dimension");
  const Tape tape = run_forward(model_, u, start_);
  Vector w(horizon(), 0.0);
  weigh(tape.result.y, w);
  run_backward(model_, tape, w, grad);
  return tape.result.y;
}

std::unique_ptr<SurrogateDhsProblem> make_surrogate_problem(SurrogateModel model, std::vector<double> demand,
                                                            const dhs::DhsParams& params, double warmup_heat_mw) {
  if (demand.size() != params.horizon) {
    throw ContractViolation("make_surrogate_problem: demand length must equal the horizon");
  }
  return std::make_unique<SurrogateDhsProblem>(std::move(model), std::move(demand), params, warmup_heat_mw);
}

}  // namespace pga::nn
