#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "binpick/errors.hpp"

namespace binpick {

template <class Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixRM =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major tensor. Shape is a list of dimension sizes; data length
// always equals the product of the shape.
template <class Scalar>
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = ArrayX<Scalar>::Zero(count(shape_));
  }

  Tensor(std::vector<int> shape, std::vector<Scalar> values)
      : shape_(std::move(shape)) {
    if (static_cast<std::int64_t>(values.size()) != count(shape_))
      throw ContractViolation("tensor data length does not match shape");
    data_ = Eigen::Map<const ArrayX<Scalar>>(values.data(), values.size());
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return data_.size(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](std::int64_t i) { return data_[i]; }
  Scalar operator[](std::int64_t i) const { return data_[i]; }

  ArrayX<Scalar>& array() { return data_; }
  const ArrayX<Scalar>& array() const { return data_; }

  // Row-major matrix view of the flat data.
  Eigen::Map<MatrixRM<Scalar>> matrix(int rows, int cols) {
    if (static_cast<std::int64_t>(rows) * cols != size())
      throw ContractViolation("matrix view size mismatch");
    return Eigen::Map<MatrixRM<Scalar>>(data_.data(), rows, cols);
  }
  Eigen::Map<const MatrixRM<Scalar>> matrix(int rows, int cols) const {
    if (static_cast<std::int64_t>(rows) * cols != size())
      throw ContractViolation("matrix view size mismatch");
    return Eigen::Map<const MatrixRM<Scalar>>(data_.data(), rows, cols);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const { return data_.isFinite().all(); }

  void set_zero() { data_.setZero(); }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.array() = data_.template cast<Other>();
    return out;
  }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw ContractViolation("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::string shape_str() const { return shape_to_string(shape_); }

  static std::string shape_to_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << ",";
      os << s[i];
    }
    os << ")";
    return os.str();
  }

private:
  std::vector<int> shape_;
  ArrayX<Scalar> data_;
};

inline void require_shape(const std::vector<int>& expected,
                          const std::vector<int>& actual,
                          const std::string& what) {
  if (expected != actual)
    throw ContractViolation(what + ": expected shape " +
                            Tensor<float>::shape_to_string(expected) +
                            ", got " + Tensor<float>::shape_to_string(actual));
}

// Learnable tensor with gradient and ADAM moment state.
template <class Scalar>
struct Param {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  Tensor<Scalar> m;
  Tensor<Scalar> v;
  std::int64_t step_count = 0;

  Param() = default;
  Param(std::string n, std::vector<int> shape)
      : name(std::move(n)),
        value(shape),
        grad(shape),
        m(shape),
        v(std::move(shape)) {}
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace binpick
