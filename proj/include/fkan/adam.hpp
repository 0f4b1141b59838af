#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkan/array.hpp"

namespace fkan {

struct AdamState {
  std::vector<Array2> m;  // first moments, one per parameter array
  std::vector<Array2> v;  // second moments
  std::uint64_t step_count = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update, in place. Moment arrays are created on the
/// first call.
inline void adam_step(std::span<Array2* const> params, std::span<const Array2> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(*params[i], grads[i], "adam_step");
    if (!grads[i].allFinite()) {
      throw std::domain_error("adam_step: non-finite gradient in parameter array " +
                              std::to_string(i));
    }
  }
  if (state.m.empty()) {
    for (const Array2* p : params) {
      state.m.push_back(Array2::Zero(p->rows(), p->cols()));
      state.v.push_back(Array2::Zero(p->rows(), p->cols()));
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                     " arrays, got " + std::to_string(params.size()));
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correct1 = 1.0 - std::pow(state.beta1, t);
  const double correct2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(state.m[i], grads[i], "adam_step moments");
    auto g = grads[i].array();
    auto m = state.m[i].array();
    auto v = state.v[i].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    params[i]->array() -=
        state.lr * (m / correct1) / ((v / correct2).sqrt() + state.epsilon);
  }
}

}  // namespace fkan
