#pragma once

// Dense ReLU networks whose sign-constrained weights are kept non-negative,
// making the output non-decreasing in every constrained input.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "pga/dhs_physics.hpp"

namespace pga::nn {

/// Per-feature affine map of [lo, hi] onto [0, 1].
struct Normalizer {
  Vector lo;
  Vector hi;

  std::size_t size() const noexcept { return lo.size(); }
  void validate() const;
  double normalize(std::size_t j, double x) const { return (x - lo[j]) / (hi[j] - lo[j]); }
  double denormalize(std::size_t j, double z) const { return lo[j] + z * (hi[j] - lo[j]); }
  double scale(std::size_t j) const { return hi[j] - lo[j]; }
  Vector normalize(std::span<const double> x) const;
  Vector denormalize(std::span<const double> z) const;
};

struct Layer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
  /// 1 where the weight must stay >= 0, 0 where it is free. Same shape as W.
  Eigen::MatrixXd mask;
};

class MonotoneNet {
 public:
  MonotoneNet() = default;
  /// `sizes` = {inputs, hidden..., outputs}. `constrained_inputs[j]` marks input
  /// columns whose first-layer weights are sign-constrained; every later layer
  /// is fully constrained. Weights are drawn from `seed` and then projected.
  MonotoneNet(std::vector<std::size_t> sizes, std::vector<bool> constrained_inputs, std::uint64_t seed);

  std::size_t inputs() const { return sizes_.front(); }
  std::size_t outputs() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  const std::vector<bool>& constrained_inputs() const noexcept { return constrained_inputs_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  /// Input-space vector-Jacobian product v^T d forward / dx at x.
  Eigen::VectorXd input_vjp(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;
  /// Full Jacobian d forward / dx (outputs x inputs).
  Eigen::MatrixXd input_jacobian(const Eigen::VectorXd& x) const;

  /// Clamps every mask-constrained weight to max(w, 0). Idempotent.
  void project_weights();
  /// Smallest mask-constrained weight (+inf when none).
  double min_constrained_weight() const;

  nlohmann::json to_json() const;
  static MonotoneNet from_json(const nlohmann::json& j);

 private:
  std::vector<std::size_t> sizes_;
  std::vector<bool> constrained_inputs_;
  std::vector<Layer> layers_;
};

/// State-transition network g or output network f.
enum class Target { g, f };

struct TrainConfig {
  double learning_rate = 0.001;
  long max_epochs = 3000;
  double early_stop_delta = 1e-6;
  long patience = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden{50, 50};
  /// Leave state-input weights free instead of constraining every input.
  bool paper_strict_masks = false;

  static TrainConfig for_target(Target t);
  void validate() const;
};

/// Feature ranges for the network inputs and outputs.
struct FeatureScaling {
  Normalizer state;   // (tau_in, tau_out, mass_flow)
  Normalizer heat;    // one entry: h range
  Normalizer power;   // one entry: p range
  Normalizer output;  // one entry: delivered heat

  static FeatureScaling defaults(const dhs::DhsParams& params);
};

/// Normalized input row [state(3), (h, p) window oldest first].
Eigen::VectorXd net_input(const dhs::SimState& state, std::span<const double> window, const FeatureScaling& s);
Eigen::VectorXd state_vector(const dhs::SimState& state, const FeatureScaling& s);

struct TrainResult {
  MonotoneNet net;
  std::vector<double> train_loss;  // per epoch, normalized MSE
  std::vector<double> test_loss;
  long epochs = 0;
  bool stopped_early = false;
  long best_epoch = 0;
};

/// Adam on mean squared error in normalized space with a weight projection
/// after every step; keeps the weights of the best test epoch.
TrainResult train(const dhs::Dataset& data, const TrainConfig& config, Target target,
                  const FeatureScaling& scaling);

/// Generic trainer on prepared matrices (columns are samples).
TrainResult train_matrices(const Eigen::MatrixXd& x_train, const Eigen::MatrixXd& y_train,
                           const Eigen::MatrixXd& x_test, const Eigen::MatrixXd& y_test,
                           const TrainConfig& config, std::vector<bool> constrained_inputs);

/// Inputs and targets of `rows` for `target`, one sample per column.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> design_matrices(const std::vector<dhs::DatasetRow>& rows,
                                                            Target target, const FeatureScaling& s);

double mse(const MonotoneNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

}  // namespace pga::nn
