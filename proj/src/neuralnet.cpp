#include "flow/neuralnet.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "flow/random.hpp"

namespace flow::nn {

namespace {

void check_same_shape(const std::vector<Layer>& a, const std::vector<Layer>& b) {
  if (a.size() != b.size()) throw ShapeError("layer count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].weights.rows() != b[i].weights.rows() || a[i].weights.cols() != b[i].weights.cols() ||
        a[i].bias.size() != b[i].bias.size())
      throw ShapeError("layer " + std::to_string(i) + " shape mismatch");
}

std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
  std::vector<Layer> out;
  out.reserve(layers.size());
  for (const auto& l : layers)
    out.push_back(Layer{Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  return out;
}

// Box-Muller on top of the portable uniform draw.
double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

Gradients& Gradients::operator+=(const Gradients& o) {
  check_same_shape(layers, o.layers);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights += o.layers[i].weights;
    layers[i].bias += o.layers[i].bias;
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& l : layers) {
    l.weights *= s;
    l.bias *= s;
  }
  return *this;
}

bool Gradients::all_finite() const {
  for (const auto& l : layers)
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

bool Gradients::all_zero() const {
  for (const auto& l : layers)
    if (!l.weights.isZero(0.0) || !l.bias.isZero(0.0)) return false;
  return true;
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].weights.rows()) throw ShapeError("bias size mismatch");
    if (i > 0 && layers_[i].weights.cols() != layers_[i - 1].weights.rows())
      throw ShapeError("layer " + std::to_string(i) + " input size mismatch");
  }
}

Network Network::init(const std::vector<int>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw ShapeError("need at least input and output sizes");
  for (int s : sizes)
    if (s < 1) throw ShapeError("layer sizes must be positive");
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    const double sd = std::sqrt(2.0 / sizes[i - 1]);
    Layer l{Eigen::MatrixXd(sizes[i], sizes[i - 1]), Eigen::VectorXd::Zero(sizes[i])};
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = sd * standard_normal(rng);
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

std::vector<int> Network::sizes() const {
  std::vector<int> out{static_cast<int>(layers_.front().weights.cols())};
  for (const auto& l : layers_) out.push_back(static_cast<int>(l.weights.rows()));
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

Eigen::VectorXd Network::output(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_size())
    throw ShapeError("input has " + std::to_string(x.size()) + " values, expected " + std::to_string(input_size()));
  Eigen::VectorXd a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    a = layers_[i].weights * a + layers_[i].bias;
    if (i + 1 < layers_.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

Gradients Network::backprop(const Eigen::VectorXd& x, const Eigen::VectorXd& d_out) const {
  if (static_cast<std::size_t>(x.size()) != input_size()) throw ShapeError("input dimension mismatch");
  if (static_cast<std::size_t>(d_out.size()) != output_size()) throw ShapeError("output gradient dimension mismatch");
  std::vector<Eigen::VectorXd> acts{x};  // inputs to each layer
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
    acts.push_back((layers_[i].weights * acts.back() + layers_[i].bias).cwiseMax(0.0));

  Gradients g{zeros_like(layers_)};
  Eigen::VectorXd delta = d_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g.layers[i].weights = delta * acts[i].transpose();
    g.layers[i].bias = delta;
    if (i == 0) break;
    delta = layers_[i].weights.transpose() * delta;
    // ReLU derivative, taken as 0 at the kink
    delta = delta.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
  }
  return g;
}

Gradients Network::zero_gradients() const { return Gradients{zeros_like(layers_)}; }

Network init_network(int hidden_width, int hidden_count, std::uint64_t seed) {
  if (hidden_width < 1 || hidden_count < 1) throw ShapeError("hidden width and count must be at least 1");
  std::vector<int> sizes{kStateSize};
  sizes.insert(sizes.end(), static_cast<std::size_t>(hidden_count), hidden_width);
  sizes.push_back(kActionCount);
  return Network::init(sizes, seed);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& state) { return softmax(net.output(state)); }

Gradients logp_gradient(const Network& net, const Eigen::VectorXd& state, int action) {
  const Eigen::VectorXd p = forward(net, state);
  if (action < 0 || action >= p.size()) throw ShapeError("action out of range: " + std::to_string(action));
  Eigen::VectorXd d = -p;
  d[action] += 1.0;
  return net.backprop(state, d);
}

void apply_update(Network& net, const Gradients& grads, double scale, OptimizerState& opt) {
  check_same_shape(net.layers(), grads.layers);
  if (!std::isfinite(scale) || !grads.all_finite()) throw NnError("non-finite gradient");
  if (scale == 0.0 || grads.all_zero()) return;
  if (opt.m.empty()) {
    opt.m = zeros_like(net.layers());
    opt.v = zeros_like(net.layers());
  }
  check_same_shape(opt.m, grads.layers);
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  auto moment_step = [&](auto& param, const auto& g_raw, auto& m, auto& v) {
    const auto g = (scale * g_raw.array()).eval();
    m.array() = opt.beta1 * m.array() + (1.0 - opt.beta1) * g;
    v.array() = opt.beta2 * v.array() + (1.0 - opt.beta2) * g * g;
    param.array() += opt.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
  };
  for (std::size_t i = 0; i < grads.layers.size(); ++i) {
    auto& layer = net.layers()[i];
    moment_step(layer.weights, grads.layers[i].weights, opt.m[i].weights, opt.v[i].weights);
    moment_step(layer.bias, grads.layers[i].bias, opt.m[i].bias, opt.v[i].bias);
  }
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr std::array<char, 8> kMagic{'F', 'L', 'O', 'W', 'P', 'N', 'N', '\0'};
constexpr std::uint32_t kVersion = 1;
static_assert(std::endian::native == std::endian::little, "file format assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::ifstream& in, const char* what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("truncated network file (") + what + ")");
  return v;
}

}  // namespace

void save_network(const Network& net, const std::filesystem::path& path) {
  std::string out(kMagic.begin(), kMagic.end());
  put(out, kVersion);
  const auto sizes = net.sizes();
  put(out, static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) put(out, static_cast<std::uint32_t>(s));
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put(out, l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put(out, l.bias[r]);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw NnError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw NnError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NnError("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw FormatError(path.string() + ": not a network file");
  const auto version = take<std::uint32_t>(in, "version");
  if (version != kVersion) throw FormatError(path.string() + ": unsupported format version " + std::to_string(version));
  const auto count = take<std::uint32_t>(in, "layer count");
  if (count < 2 || count > 64) throw FormatError(path.string() + ": implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = take<std::uint32_t>(in, "layer size");
    if (s < 1 || s > (1u << 20)) throw FormatError(path.string() + ": implausible layer size");
    sizes.push_back(static_cast<int>(s));
  }
  std::vector<Layer> layers;
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    Layer l{Eigen::MatrixXd(sizes[i], sizes[i - 1]), Eigen::VectorXd(sizes[i])};
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = take<double>(in, "weights");
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = take<double>(in, "bias");
    layers.push_back(std::move(l));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return Network(std::move(layers));
}

Network load_network(const std::filesystem::path& path, const std::vector<int>& expected) {
  Network net = load_network(path);
  if (net.sizes() != expected) throw ShapeError(path.string() + ": layer sizes differ from the configured network");
  return net;
}

}  // namespace flow::nn
