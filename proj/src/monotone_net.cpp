#include "pga/monotone_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "pga/error.hpp"

namespace pga::nn {

constexpr int kModelVersion = 1;

void Normalizer::validate() const {
  if (lo.size() != hi.size() || lo.empty()) throw ContractViolation("Normalizer: lo/hi size mismatch");
  for (std::size_t j = 0; j < lo.size(); ++j) {
    if (!(hi[j] > lo[j])) throw ContractViolation("Normalizer: max must exceed min for every feature");
  }
}

Vector Normalizer::normalize(std::span<const double> x) const {
  if (x.size() != size()) throw ContractViolation("Normalizer: size mismatch");
  Vector z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = normalize(j, x[j]);
  return z;
}

Vector Normalizer::denormalize(std::span<const double> z) const {
  if (z.size() != size()) throw ContractViolation("Normalizer: size mismatch");
  Vector x(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) x[j] = denormalize(j, z[j]);
  return x;
}

MonotoneNet::MonotoneNet(std::vector<std::size_t> sizes, std::vector<bool> constrained_inputs,
                         std::uint64_t seed)
    : sizes_(std::move(sizes)), constrained_inputs_(std::move(constrained_inputs)) {
  if (sizes_.size() < 2) throw ContractViolation("MonotoneNet: need at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw ContractViolation("MonotoneNet: layer sizes must be positive");
  }
  if (constrained_inputs_.size() != sizes_.front()) {
    throw ContractViolation("MonotoneNet: one constraint flag per input is required");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    const double fan = static_cast<double>(in);
    Layer layer;
    layer.W.resize(out, in);
    layer.b.resize(out);
    layer.mask.setOnes(out, in);
    if (l == 0) {
      for (Eigen::Index c = 0; c < in; ++c) {
        if (!constrained_inputs_[static_cast<std::size_t>(c)]) layer.mask.col(c).setZero();
      }
    }
    std::uniform_real_distribution<double> pos(0.0, 1.0 / std::sqrt(fan));
    std::uniform_real_distribution<double> sym(-1.0 / std::sqrt(fan), 1.0 / std::sqrt(fan));
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.W(r, c) = layer.mask(r, c) > 0.0 ? pos(rng) : sym(rng);
    }
    const bool hidden = l + 2 < sizes_.size();
    std::uniform_real_distribution<double> bias(-0.25 * std::sqrt(fan), 0.0);
    for (Eigen::Index r = 0; r < out; ++r) layer.b(r) = hidden ? bias(rng) : 0.0;
    layers_.push_back(std::move(layer));
  }
  project_weights();
}

Eigen::VectorXd MonotoneNet::forward(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != inputs()) throw ContractViolation("MonotoneNet: input size mismatch");
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    a = layers_[l].W * a + layers_[l].b;
    if (l + 1 < layers_.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

Eigen::VectorXd MonotoneNet::input_vjp(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  if (static_cast<std::size_t>(x.size()) != inputs()) throw ContractViolation("MonotoneNet: input size mismatch");
  if (static_cast<std::size_t>(v.size()) != outputs()) throw ContractViolation("MonotoneNet: cotangent size mismatch");
  std::vector<Eigen::VectorXd> pre;
  pre.reserve(layers_.size());
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    pre.push_back(layers_[l].W * a + layers_[l].b);
    a = (l + 1 < layers_.size()) ? pre.back().cwiseMax(0.0) : pre.back();
  }
  Eigen::VectorXd g = v;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) g = g.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    g = layers_[l].W.transpose() * g;
  }
  return g;
}

Eigen::MatrixXd MonotoneNet::input_jacobian(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd J(outputs(), inputs());
  for (std::size_t o = 0; o < outputs(); ++o) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(outputs()));
    e(static_cast<Eigen::Index>(o)) = 1.0;
    J.row(static_cast<Eigen::Index>(o)) = input_vjp(x, e).transpose();
  }
  return J;
}

void MonotoneNet::project_weights() {
  for (Layer& layer : layers_) {
    layer.W = (layer.mask.array() > 0.0).select(layer.W.cwiseMax(0.0), layer.W);
  }
}

double MonotoneNet::min_constrained_weight() const {
  double m = std::numeric_limits<double>::infinity();
  for (const Layer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
        if (layer.mask(r, c) > 0.0) m = std::min(m, layer.W(r, c));
      }
    }
  }
  return m;
}

nlohmann::json MonotoneNet::to_json() const {
  nlohmann::json j;
  j["format"] = "monotone-net";
  j["version"] = kModelVersion;
  j["sizes"] = sizes_;
  j["constrained_inputs"] = constrained_inputs_;
  j["layers"] = nlohmann::json::array();
  for (const Layer& layer : layers_) {
    nlohmann::json lj;
    lj["rows"] = layer.W.rows();
    lj["cols"] = layer.W.cols();
    std::vector<double> w;
    std::vector<int> m;
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) {
        w.push_back(layer.W(r, c));
        m.push_back(layer.mask(r, c) > 0.0 ? 1 : 0);
      }
    }
    lj["weights"] = w;
    lj["mask"] = m;
    lj["bias"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
    j["layers"].push_back(lj);
  }
  return j;
}

MonotoneNet MonotoneNet::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "monotone-net") throw DataFormatError("not a monotone-net model");
    if (j.at("version").get<int>() != kModelVersion) {
      throw DataFormatError("unsupported model version " + std::to_string(j.at("version").get<int>()));
    }
    MonotoneNet net;
    net.sizes_ = j.at("sizes").get<std::vector<std::size_t>>();
    net.constrained_inputs_ = j.at("constrained_inputs").get<std::vector<bool>>();
    const auto& layers = j.at("layers");
    if (net.sizes_.size() < 2 || layers.size() + 1 != net.sizes_.size() ||
        net.constrained_inputs_.size() != net.sizes_.front()) {
      throw DataFormatError("model layer sizes are inconsistent");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& lj = layers[l];
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      if (static_cast<std::size_t>(rows) != net.sizes_[l + 1] || static_cast<std::size_t>(cols) != net.sizes_[l]) {
        throw DataFormatError("layer " + std::to_string(l) + " shape does not match the sizes list");
      }
      const auto w = lj.at("weights").get<std::vector<double>>();
      const auto m = lj.at("mask").get<std::vector<int>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      const auto n = static_cast<std::size_t>(rows * cols);
      if (w.size() != n || m.size() != n || b.size() != static_cast<std::size_t>(rows)) {
        throw DataFormatError("layer " + std::to_string(l) + " has the wrong number of entries");
      }
      Layer layer;
      layer.W.resize(rows, cols);
      layer.mask.resize(rows, cols);
      layer.b = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          const auto k = static_cast<std::size_t>(r * cols + c);
          layer.W(r, c) = w[k];
          layer.mask(r, c) = m[k] != 0 ? 1.0 : 0.0;
          if (m[k] != 0 && w[k] < 0.0) throw DataFormatError("negative weight under a sign constraint");
        }
      }
      net.layers_.push_back(std::move(layer));
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("malformed model: ") + e.what());
  }
}

TrainConfig TrainConfig::for_target(Target t) {
  TrainConfig c;
  if (t == Target::g) {
    c.max_epochs = 3000;
    c.early_stop_delta = 1e-6;
    c.patience = 200;
  } else {
    c.max_epochs = 1000;
    c.early_stop_delta = 5e-6;
    c.patience = 35;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractViolation("TrainConfig: learning_rate must be positive");
  if (max_epochs <= 0 || patience <= 0 || batch_size == 0) {
    throw ContractViolation("TrainConfig: epochs, patience and batch size must be positive");
  }
  if (!(early_stop_delta > 0.0)) throw ContractViolation("TrainConfig: early_stop_delta must be positive");
  for (std::size_t h : hidden) {
    if (h == 0) throw ContractViolation("TrainConfig: hidden sizes must be positive");
  }
}

FeatureScaling FeatureScaling::defaults(const dhs::DhsParams& params) {
  const ConvexPolygon region = params.chp_region();
  FeatureScaling s;
  s.state = {{params.min_supply_temp, 70.0, params.min_flow}, {params.max_supply_temp, 115.0, params.max_flow}};
  s.heat = {{region.min_x()}, {region.max_x()}};
  s.power = {{region.min_y()}, {region.max_y()}};
  s.output = {{5.0}, {65.0}};
  return s;
}

Eigen::VectorXd state_vector(const dhs::SimState& state, const FeatureScaling& s) {
  Eigen::VectorXd v(3);
  v << s.state.normalize(0, state.inlet_temp), s.state.normalize(1, state.outlet_temp),
      s.state.normalize(2, state.mass_flow);
  return v;
}

Eigen::VectorXd net_input(const dhs::SimState& state, std::span<const double> window, const FeatureScaling& s) {
  if (window.size() % 2 != 0) throw ContractViolation("net_input: window must hold (h, p) pairs");
  Eigen::VectorXd x(static_cast<Eigen::Index>(3 + window.size()));
  x.head(3) = state_vector(state, s);
  for (std::size_t k = 0; k < window.size(); k += 2) {
    x(static_cast<Eigen::Index>(3 + k)) = s.heat.normalize(0, window[k]);
    x(static_cast<Eigen::Index>(4 + k)) = s.power.normalize(0, window[k + 1]);
  }
  return x;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> design_matrices(const std::vector<dhs::DatasetRow>& rows,
                                                            Target target, const FeatureScaling& s) {
  if (rows.empty()) return {Eigen::MatrixXd(), Eigen::MatrixXd()};
  const auto n_in = static_cast<Eigen::Index>(3 + rows.front().window.size());
  const Eigen::Index n_out = target == Target::g ? 3 : 1;
  Eigen::MatrixXd X(n_in, static_cast<Eigen::Index>(rows.size()));
  Eigen::MatrixXd Y(n_out, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto c = static_cast<Eigen::Index>(r);
    if (static_cast<Eigen::Index>(3 + rows[r].window.size()) != n_in) {
      throw DataFormatError("dataset rows have inconsistent window lengths");
    }
    if (target == Target::g) {
      X.col(c) = net_input(rows[r].prev_state, rows[r].window, s);
      Y.col(c) = state_vector(rows[r].state, s);
    } else {
      X.col(c) = net_input(rows[r].state, rows[r].window, s);
      Y(0, c) = s.output.normalize(0, rows[r].delivered);
    }
  }
  return {X, Y};
}

namespace {

Eigen::MatrixXd forward_batch(const MonotoneNet& net, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    a = (layers[l].W * a).colwise() + layers[l].b;
    if (l + 1 < layers.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

struct ParamAdam {
  AdamState w;
  AdamState b;
};

}  // namespace

double mse(const MonotoneNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.cols() == 0) throw ContractViolation("mse: empty data");
  const Eigen::MatrixXd diff = forward_batch(net, x) - y;
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

TrainResult train_matrices(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                           const Eigen::MatrixXd& x_test, const Eigen::MatrixXd& y_test,
                           const TrainConfig& config, std::vector<bool> constrained_inputs) {
  config.validate();
  if (x_train.cols() == 0) throw ContractViolation("train: empty training set");
  if (x_train.cols() != y_train.cols()) throw ContractViolation("train: input/target count mismatch");
  const bool has_test = x_test.cols() > 0;

  std::vector<std::size_t> sizes{static_cast<std::size_t>(x_train.rows())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(static_cast<std::size_t>(y_train.rows()));
  TrainResult result;
  result.net = MonotoneNet(sizes, std::move(constrained_inputs), config.seed);
  MonotoneNet& net = result.net;
  auto& layers = net.layers();

  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  std::vector<ParamAdam> opt;
  for (const Layer& layer : layers) {
    opt.push_back({AdamState::fresh(static_cast<std::size_t>(layer.W.size()), adam),
                   AdamState::fresh(static_cast<std::size_t>(layer.b.size()), adam)});
  }

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x_train.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const std::size_t L = layers.size();
  std::vector<Eigen::MatrixXd> acts(L + 1);
  std::vector<Eigen::MatrixXd> pre(L);
  Eigen::MatrixXd grad_w;
  Eigen::VectorXd grad_b;

  double best = std::numeric_limits<double>::infinity();
  long since_best = 0;
  MonotoneNet best_net = net;
  for (long epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto B = static_cast<Eigen::Index>(end - start);
      acts[0].resize(x_train.rows(), B);
      Eigen::MatrixXd target(y_train.rows(), B);
      for (Eigen::Index c = 0; c < B; ++c) {
        acts[0].col(c) = x_train.col(order[start + static_cast<std::size_t>(c)]);
        target.col(c) = y_train.col(order[start + static_cast<std::size_t>(c)]);
      }
      for (std::size_t l = 0; l < L; ++l) {
        pre[l] = (layers[l].W * acts[l]).colwise() + layers[l].b;
        acts[l + 1] = (l + 1 < L) ? pre[l].cwiseMax(0.0) : pre[l];
      }
      Eigen::MatrixXd delta = 2.0 * (acts[L] - target) / static_cast<double>(target.size());
      for (std::size_t l = L; l-- > 0;) {
        if (l + 1 < L) delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
        grad_w = delta * acts[l].transpose();
        grad_b = delta.rowwise().sum();
        if (l > 0) delta = layers[l].W.transpose() * delta;
        adam_step(opt[l].w, std::span<double>(layers[l].W.data(), static_cast<std::size_t>(layers[l].W.size())),
                  std::span<const double>(grad_w.data(), static_cast<std::size_t>(grad_w.size())));
        adam_step(opt[l].b, std::span<double>(layers[l].b.data(), static_cast<std::size_t>(layers[l].b.size())),
                  std::span<const double>(grad_b.data(), static_cast<std::size_t>(grad_b.size())));
      }
      net.project_weights();
    }
    const double train_loss = mse(net, x_train, y_train);
    const double test_loss = has_test ? mse(net, x_test, y_test) : train_loss;
    if (!std::isfinite(train_loss)) throw NumericalFailure("training diverged");
    result.train_loss.push_back(train_loss);
    result.test_loss.push_back(test_loss);
    result.epochs = epoch;
    if (test_loss < best - config.early_stop_delta) {
      best = test_loss;
      best_net = net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (result.best_epoch > 0) net = std::move(best_net);
  return result;
}

TrainResult train(const dhs::Dataset& data, const TrainConfig& config, Target target,
                  const FeatureScaling& scaling) {
  if (data.train.empty()) throw ContractViolation("train: dataset has no training rows");
  const auto [x_train, y_train] = design_matrices(data.train, target, scaling);
  const auto [x_test, y_test] = design_matrices(data.test, target, scaling);
  std::vector<bool> constrained(static_cast<std::size_t>(x_train.rows()), true);
  if (config.paper_strict_masks) {
    for (std::size_t j = 0; j < 3; ++j) constrained[j] = false;
  }
  return train_matrices(x_train, y_train, x_test, y_test, config, std::move(constrained));
}

}  // namespace pga::nn
