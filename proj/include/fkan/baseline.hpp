#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/model.hpp"

namespace fkan {

/// Plain tanh(omega0 * .) MLP used as the spectral-bias reference: the Fourier
/// block is replaced by a dense layer of width `first_width`, everything
/// downstream is identical.
class MlpModel {
 public:
  MlpModel() = default;
  MlpModel(const ModelConfig& shape, int first_width) : config_(shape), first_width_(first_width) {
    config_.validate();
    if (first_width < 1) throw std::invalid_argument("MlpModel: first_width must be >= 1");
    int in = config_.input_dim;
    layers_.emplace_back(in, first_width);
    in = first_width;
    for (int w : config_.hidden_widths) {
      layers_.emplace_back(in, w);
      in = w;
    }
    head_ = DenseLayerParams(in, config_.output_dim);
  }

  const ModelConfig& config() const { return config_; }
  int first_width() const { return first_width_; }
  std::vector<DenseLayerParams>& layers() { return layers_; }
  const std::vector<DenseLayerParams>& layers() const { return layers_; }
  DenseLayerParams& head() { return head_; }
  const DenseLayerParams& head() const { return head_; }

  std::vector<Array2*> parameters() {
    std::vector<Array2*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }
  std::vector<const Array2*> parameters() const {
    std::vector<const Array2*> out;
    for (Array2* p : const_cast<MlpModel*>(this)->parameters()) out.push_back(p);
    return out;
  }

  std::vector<Var> bind(Tape& t, bool trainable = true) const {
    std::vector<Var> vars;
    for (const Array2* p : parameters()) vars.push_back(trainable ? t.parameter(*p) : t.constant(*p));
    return vars;
  }

  Array2 encode(const Array2& x) const {
    if (x.rows() != config_.input_dim) {
      throw ShapeError("MlpModel::encode: expected " + std::to_string(config_.input_dim) +
                       " coordinate rows, got " + shape_string(x));
    }
    return config_.input_scale * x;
  }

  Var forward_encoded(Tape& t, std::span<const Var> params, Var z) const {
    std::size_t p = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i, p += 2) {
      z = ops::tanh_scaled(t, ops::matmul_add(t, params[p], z, params[p + 1]), config_.omega0);
    }
    return ops::matmul_add(t, params[p], z, params[p + 1]);
  }

  Var forward(Tape& t, std::span<const Var> params, Var x) const {
    return forward_encoded(t, params, ops::scale(t, x, config_.input_scale));
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Array2* p : parameters()) n += static_cast<std::size_t>(p->size());
    return n;
  }

 private:
  ModelConfig config_;
  int first_width_ = 0;
  std::vector<DenseLayerParams> layers_;
  DenseLayerParams head_;
};

inline std::size_t count_mlp_params(const ModelConfig& shape, int first_width) {
  std::size_t n = 0;
  std::size_t in = static_cast<std::size_t>(shape.input_dim);
  auto add = [&](std::size_t out) {
    n += in * out + out;
    in = out;
  };
  add(static_cast<std::size_t>(first_width));
  for (int w : shape.hidden_widths) add(static_cast<std::size_t>(w));
  add(static_cast<std::size_t>(shape.output_dim));
  return n;
}

/// Width of the replacement dense layer whose total parameter count is
/// closest to count_params(shape). Throws if the best match is off by more
/// than `tolerance` (relative).
inline int matched_first_width(const ModelConfig& shape, double tolerance = 0.01) {
  const auto target = static_cast<double>(count_params(shape));
  // The count is affine in the width: base + per_unit * width.
  const auto base = static_cast<double>(count_mlp_params(shape, 0));
  const auto per_unit = static_cast<double>(count_mlp_params(shape, 1)) - base;
  int best = std::max(1, static_cast<int>(std::lround((target - base) / per_unit)));
  for (int w : {best - 1, best + 1}) {
    if (w >= 1 && std::abs(static_cast<double>(count_mlp_params(shape, w)) - target) <
                      std::abs(static_cast<double>(count_mlp_params(shape, best)) - target)) {
      best = w;
    }
  }
  const double rel = std::abs(static_cast<double>(count_mlp_params(shape, best)) - target) / target;
  if (rel > tolerance) {
    throw std::runtime_error("baseline parameter matching infeasible: best width " +
                             std::to_string(best) + " is off by " + std::to_string(100.0 * rel) +
                             "% (limit " + std::to_string(100.0 * tolerance) + "%)");
  }
  return best;
}

/// Same initialization rules as init_model: tanh-feeding layers follow the
/// configured scheme, the head uses the plain fan-in bound.
inline MlpModel init_mlp(const ModelConfig& shape, int first_width, std::uint64_t seed) {
  MlpModel m(shape, first_width);
  std::mt19937_64 rng(seed);
  const double gain = shape.init == InitScheme::fan_in_over_omega0 ? 1.0 / shape.omega0 : 1.0;
  for (auto& l : m.layers()) init_dense(l, rng, gain);
  init_dense(m.head(), rng);
  return m;
}

}  // namespace fkan
