#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "causalib/errors.hpp"

namespace causalib {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor of 64-bit floats. Immutable by convention once it
/// enters a computation graph; plain mutable storage everywhere else.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                       std::to_string(data.size()));
  }

  static Tensor zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor full(Shape s, double v) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }
  static Tensor scalar(double v) { return Tensor({}, {v}); }
  static Tensor row(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
  }

  std::size_t size() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  bool is_scalar() const { return data.size() == 1; }

  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const {
    if (shape.size() < 2) return shape.empty() ? 1 : shape[0];
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double item() const {
    if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_str(shape));
    return data[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
inline MatMap as_matrix(Tensor& t) {
  return MatMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void ensure_finite(const Tensor& t, const char* where) {
  if (!all_finite(t)) throw NumericError(std::string(where) + ": non-finite value produced");
}

/// 2-D matrix product via Eigen. Shapes (m,k)x(k,n) -> (m,n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape[1] != b.shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                     shape_str(b.shape));
  Tensor out = Tensor::zeros({a.shape[0], b.shape[1]});
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

// Elementwise helpers (plain tensor arithmetic, no graph involved).

inline Tensor ew_binary(const Tensor& a, const Tensor& b, double (*f)(double, double)) {
  if (!a.same_shape(b))
    throw ShapeError("elementwise: shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, +[](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, +[](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(a, b, +[](double x, double y) { return x * y; });
}
inline Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data) v *= c;
  return out;
}
inline Tensor sign(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) v = (v > 0.0) ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return out;
}
inline Tensor clip(const Tensor& a, double lo, double hi) {
  Tensor out = a;
  for (double& v : out.data) v = std::min(std::max(v, lo), hi);
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace causalib
