#pragma once

#include <cassert>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fkan {

// Dense row-major matrix of doubles. Batches are stored column-wise:
// a batch of N d-vectors is a d x N array.
using Array2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(const Array2& a) {
  std::ostringstream os;
  os << '[' << a.rows() << " x " << a.cols() << ']';
  return os.str();
}

inline void require_shape(const Array2& a, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
  if (a.rows() != rows || a.cols() != cols) {
    std::ostringstream os;
    os << what << ": expected [" << rows << " x " << cols << "], got " << shape_string(a);
    throw ShapeError(os.str());
  }
}

inline void require_same_shape(const Array2& a, const Array2& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

}  // namespace fkan

// Non-finite values are caught in debug builds only; release builds keep the
// hot loop branch-free. Training has its own always-on divergence guard.
#ifndef NDEBUG
#define FKAN_ASSERT_FINITE(arr) assert((arr).allFinite() && "non-finite value on tape")
#else
#define FKAN_ASSERT_FINITE(arr) ((void)0)
#endif
