#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace flow::nn {

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Layer sizes or input dimension do not match.
class ShapeError : public NnError {
 public:
  using NnError::NnError;
};
/// Unreadable or foreign network file.
class FormatError : public NnError {
 public:
  using NnError::NnError;
};

inline constexpr int kStateSize = 80;
inline constexpr int kActionCount = 4;

struct Layer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
  bool operator==(const Layer& o) const { return weights == o.weights && bias == o.bias; }
};

/// Per-layer parameter gradients, shaped like the network.
struct Gradients {
  std::vector<Layer> layers;

  Gradients& operator+=(const Gradients& o);
  Gradients& operator*=(double s);
  bool all_finite() const;
  bool all_zero() const;
};

/// Fully connected network, ReLU on hidden layers and a linear output layer.
/// The policy reads the output as softmax logits; the optional baseline
/// reads a single output as a value estimate.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  /// sizes = {inputs, hidden..., outputs}; weights ~ N(0, 2/fan_in), zero biases.
  static Network init(const std::vector<int>& sizes, std::uint64_t seed);

  std::vector<int> sizes() const;
  std::size_t input_size() const { return static_cast<std::size_t>(layers_.front().weights.cols()); }
  std::size_t output_size() const { return static_cast<std::size_t>(layers_.back().weights.rows()); }
  std::size_t parameter_count() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Eigen::VectorXd output(const Eigen::VectorXd& x) const;
  /// Gradient of  d_out . output(x)  with respect to every parameter.
  Gradients backprop(const Eigen::VectorXd& x, const Eigen::VectorXd& d_out) const;
  Gradients zero_gradients() const;

  bool operator==(const Network& o) const { return layers_ == o.layers_; }

 private:
  std::vector<Layer> layers_;
};

/// 80 -> hidden_width x hidden_count -> 4.
Network init_network(int hidden_width, int hidden_count, std::uint64_t seed);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
/// Action probabilities.
Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& state);
/// Gradient of log pi(action | state); the output-logit gradient is onehot - p.
Gradients logp_gradient(const Network& net, const Eigen::VectorXd& state, int action);

/// Adaptive moment estimation, ascent direction.
struct OptimizerState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<Layer> m;
  std::vector<Layer> v;
};

/// Moves the parameters along +scale*grads. An all-zero step leaves both the
/// network and the optimizer untouched. Throws NnError on non-finite input.
void apply_update(Network& net, const Gradients& grads, double scale, OptimizerState& opt);

/// Binary layout, little endian:
///   8 bytes  magic "FLOWPNN\0"
///   u32      format version (1)
///   u32      number of layer sizes L, then L x u32 sizes
///   per layer: weights row-major (out x in) then bias, as f64
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);
/// As load_network, but throws ShapeError unless the sizes equal `expected`.
Network load_network(const std::filesystem::path& path, const std::vector<int>& expected);

}  // namespace flow::nn
