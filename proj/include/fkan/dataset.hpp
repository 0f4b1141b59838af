#pragma once

#include <string_view>

#include "fkan/array.hpp"

namespace fkan {

enum class SignalKind { image, volume, synthetic };

inline std::string_view to_string(SignalKind k) {
  switch (k) {
    case SignalKind::image: return "image";
    case SignalKind::volume: return "volume";
    case SignalKind::synthetic: return "synthetic";
  }
  return "unknown";
}

/// Paired coordinates and targets, one sample per column.
struct SignalDataset {
  Array2 coords;   // [d_i x N], entries in [-1, 1]
  Array2 targets;  // [d_o x N]
  SignalKind kind = SignalKind::synthetic;

  Eigen::Index size() const { return coords.cols(); }
  int input_dim() const { return static_cast<int>(coords.rows()); }
  int output_dim() const { return static_cast<int>(targets.rows()); }
};

}  // namespace fkan
