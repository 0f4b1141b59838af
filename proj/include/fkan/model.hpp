#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/array.hpp"
#include "fkan/tape.hpp"

namespace fkan {

/// How dense weights feeding tanh(omega0 * .) are drawn.
enum class InitScheme {
  /// U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
  fan_in,
  /// U(-sqrt(6 / fan_in) / omega0, sqrt(6 / fan_in) / omega0): keeps omega0 * h
  /// at unit scale so the tanh units start outside saturation.
  fan_in_over_omega0,
};

struct ModelConfig {
  int input_dim = 2;    // d_i
  int output_dim = 3;   // d_o
  int latent_dim = 128; // H1, width of the Fourier block
  int grid_size = 250;  // K, harmonics per edge function
  std::vector<int> hidden_widths{256, 256, 256, 512};
  double omega0 = 30.0;
  // Coordinates in [-1, 1] are multiplied by this before the Fourier layer,
  // so the default maps the domain onto one period of sin(x).
  double input_scale = std::numbers::pi;
  InitScheme init = InitScheme::fan_in_over_omega0;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || output_dim < 1 || latent_dim < 1 || grid_size < 1) {
      throw std::invalid_argument("ModelConfig: dimensions and grid size must be >= 1");
    }
    if (hidden_widths.empty()) {
      throw std::invalid_argument("ModelConfig: at least one hidden layer is required");
    }
    for (int w : hidden_widths) {
      if (w < 1) throw std::invalid_argument("ModelConfig: hidden widths must be >= 1");
    }
    if (!(omega0 > 0.0) || !std::isfinite(omega0)) {
      throw std::invalid_argument("ModelConfig: omega0 must be a positive finite number");
    }
    if (!(input_scale > 0.0) || !std::isfinite(input_scale)) {
      throw std::invalid_argument("ModelConfig: input_scale must be a positive finite number");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Coefficients of the learnable edge functions
///   psi_{j,m}(x) = sum_k a[j,m,k] sin(kx) + b[j,m,k] cos(kx).
/// Stored as [H1 x (d_i * K)] matrices with column m*K + (k-1).
struct FourierLayerParams {
  int input_dim = 0;
  int latent_dim = 0;
  int grid_size = 0;
  Array2 a;  // sine coefficients
  Array2 b;  // cosine coefficients

  FourierLayerParams() = default;
  FourierLayerParams(int d_i, int h1, int k)
      : input_dim(d_i),
        latent_dim(h1),
        grid_size(k),
        a(Array2::Zero(h1, static_cast<Eigen::Index>(d_i) * k)),
        b(Array2::Zero(h1, static_cast<Eigen::Index>(d_i) * k)) {
    if (d_i < 1 || h1 < 1 || k < 1) {
      throw std::invalid_argument("FourierLayerParams: d_i, H1 and K must be >= 1");
    }
  }

  // k is 1-based, matching the harmonic index.
  double& sin_coef(int j, int m, int k) { return a(j, m * grid_size + (k - 1)); }
  double& cos_coef(int j, int m, int k) { return b(j, m * grid_size + (k - 1)); }
  double sin_coef(int j, int m, int k) const { return a(j, m * grid_size + (k - 1)); }
  double cos_coef(int j, int m, int k) const { return b(j, m * grid_size + (k - 1)); }
};

struct DenseLayerParams {
  Array2 weight;  // [out x in]
  Array2 bias;    // [out x 1]

  DenseLayerParams() = default;
  DenseLayerParams(int in, int out) : weight(Array2::Zero(out, in)), bias(Array2::Zero(out, 1)) {}

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

/// Fourier layer on the tape: z[j,n] = sum_m sum_k a sin(k x) + b cos(k x).
/// Differentiable with respect to a, b and x.
inline Var fourier_forward(Tape& t, Var a, Var b, Var x, int grid_size) {
  auto [s, c] = ops::sin_cos_features(t, x, grid_size);
  return ops::matmul_add(t, b, c, ops::matmul(t, a, s));
}

/// Inference-only Fourier layer.
inline Array2 fourier_forward(const FourierLayerParams& p, const Array2& x) {
  if (x.rows() != p.input_dim) {
    throw ShapeError("fourier_forward: expected " + std::to_string(p.input_dim) +
                     " input features, got " + shape_string(x));
  }
  Tape t;
  Var out = fourier_forward(t, t.constant(p.a), t.constant(p.b), t.constant(x), p.grid_size);
  return t.value(out);
}

/// Fourier KAN: one layer of learnable Fourier-series edge functions, L
/// dense layers with tanh(omega0 * .) and a linear head.
class Model {
 public:
  Model() = default;
  explicit Model(ModelConfig config)
      : config_(validated(std::move(config))),
        fourier_(config_.input_dim, config_.latent_dim, config_.grid_size) {
    int in = config_.latent_dim;
    for (int w : config_.hidden_widths) {
      hidden_.emplace_back(in, w);
      in = w;
    }
    head_ = DenseLayerParams(in, config_.output_dim);
  }

  const ModelConfig& config() const { return config_; }
  FourierLayerParams& fourier() { return fourier_; }
  const FourierLayerParams& fourier() const { return fourier_; }
  std::vector<DenseLayerParams>& hidden() { return hidden_; }
  const std::vector<DenseLayerParams>& hidden() const { return hidden_; }
  DenseLayerParams& head() { return head_; }
  const DenseLayerParams& head() const { return head_; }

  /// All trainable arrays in declaration order: a, b, (W_i, b_i)..., W_f, b_f.
  std::vector<Array2*> parameters() {
    std::vector<Array2*> out{&fourier_.a, &fourier_.b};
    for (auto& l : hidden_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }
  std::vector<const Array2*> parameters() const {
    std::vector<const Array2*> out;
    for (Array2* p : const_cast<Model*>(this)->parameters()) out.push_back(p);
    return out;
  }

  /// Registers every parameter on the tape as a differentiable leaf.
  std::vector<Var> bind(Tape& t, bool trainable = true) const {
    std::vector<Var> vars;
    for (const Array2* p : parameters()) vars.push_back(trainable ? t.parameter(*p) : t.constant(*p));
    return vars;
  }

  /// Forward pass from raw coordinates x [d_i x N] to outputs [d_o x N].
  Var forward(Tape& t, std::span<const Var> params, Var x) const {
    check_input(t.value(x).rows(), config_.input_dim, "forward");
    Var scaled = ops::scale(t, x, config_.input_scale);
    Var z = fourier_forward(t, params[0], params[1], scaled, config_.grid_size);
    return forward_dense(t, params, z);
  }

  /// Coordinate-only part of the network: the stacked [sin; cos] harmonic
  /// block, constant for a fixed dataset.
  Array2 encode(const Array2& x) const {
    check_input(x.rows(), config_.input_dim, "encode");
    auto [s, c] = ops::harmonics(config_.input_scale * x, config_.grid_size);
    Array2 out(s.rows() + c.rows(), x.cols());
    out << s, c;
    return out;
  }

  /// Forward pass from encode() output. Same function as forward(), but the
  /// Fourier layer reduces to one product with [a | b].
  Var forward_encoded(Tape& t, std::span<const Var> params, Var features) const {
    check_input(t.value(features).rows(), 2 * config_.input_dim * config_.grid_size,
                "forward_encoded");
    Var z = ops::matmul(t, ops::hcat(t, params[0], params[1]), features);
    return forward_dense(t, params, z);
  }

 private:
  static ModelConfig validated(ModelConfig c) {
    c.validate();
    return c;
  }

  static void check_input(Eigen::Index rows, Eigen::Index expected, const char* what) {
    if (rows != expected) {
      throw ShapeError(std::string("Model::") + what + ": expected " + std::to_string(expected) +
                       " feature rows, got " + std::to_string(rows));
    }
  }

  Var forward_dense(Tape& t, std::span<const Var> params, Var z) const {
    std::size_t p = 2;
    for (std::size_t i = 0; i < hidden_.size(); ++i, p += 2) {
      z = ops::tanh_scaled(t, ops::matmul_add(t, params[p], z, params[p + 1]), config_.omega0);
    }
    return ops::matmul_add(t, params[p], z, params[p + 1]);
  }

  ModelConfig config_;
  FourierLayerParams fourier_;
  std::vector<DenseLayerParams> hidden_;
  DenseLayerParams head_;
};

/// Exact trainable-parameter count: 2 K d_i H1 + sum over dense layers of
/// (in * out + out).
inline std::size_t count_params(const ModelConfig& c) {
  c.validate();
  std::size_t n = 2ull * c.grid_size * c.input_dim * c.latent_dim;
  std::size_t in = static_cast<std::size_t>(c.latent_dim);
  for (int w : c.hidden_widths) {
    n += in * w + w;
    in = w;
  }
  n += in * c.output_dim + c.output_dim;
  return n;
}

/// Uniform(-bound, bound) weights with bound = gain * sqrt(6 / fan_in); zero
/// bias.
inline void init_dense(DenseLayerParams& layer, std::mt19937_64& rng, double gain = 1.0) {
  const double bound = gain * std::sqrt(6.0 / layer.in_dim());
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = dist(rng);
  layer.bias.setZero();
}

/// Fourier coefficients ~ N(0, 1 / (d_i K)) so that each latent unit has unit
/// variance at initialization for any K.
inline void init_fourier(FourierLayerParams& p, std::mt19937_64& rng) {
  const double sigma = 1.0 / (std::sqrt(static_cast<double>(p.input_dim)) *
                              std::sqrt(static_cast<double>(p.grid_size)));
  std::normal_distribution<double> dist(0.0, sigma);
  for (Eigen::Index i = 0; i < p.a.size(); ++i) p.a.data()[i] = dist(rng);
  for (Eigen::Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = dist(rng);
}

inline Model init_model(const ModelConfig& config, std::uint64_t seed) {
  Model m(config);
  std::mt19937_64 rng(seed);
  init_fourier(m.fourier(), rng);
  const double gain = config.init == InitScheme::fan_in_over_omega0 ? 1.0 / config.omega0 : 1.0;
  for (auto& l : m.hidden()) init_dense(l, rng, gain);
  // The head feeds no activation, so it always uses the plain fan-in bound.
  init_dense(m.head(), rng);
  return m;
}

inline Model init_model(const ModelConfig& config) { return init_model(config, config.seed); }

}  // namespace fkan
