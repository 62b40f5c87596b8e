#pragma once

#include <array>
#include <string>

#include <Eigen/Core>

#include "panodepth/errors.hpp"

namespace pano {

// Dense NCHW tensor. Lower-rank values use trailing singleton dimensions,
// e.g. a bias is (1, C, 1, 1) and a fully connected weight (O, I, 1, 1).
template <typename Scalar>
class Tensor {
 public:
  using Shape = std::array<int, 4>;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor() : shape_{0, 0, 0, 0} {}
  explicit Tensor(const Shape& shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Array::Constant(count(shape), fill)) {}
  Tensor(const Shape& shape, Array values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != count(shape_))
      throw std::invalid_argument("Tensor: value count does not match shape");
  }

  static Eigen::Index count(const Shape& s) {
    return static_cast<Eigen::Index>(s[0]) * s[1] * s[2] * s[3];
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  Eigen::Index size() const { return data_.size(); }
  Eigen::Index plane_size() const { return static_cast<Eigen::Index>(shape_[2]) * shape_[3]; }

  Array& data() { return data_; }
  const Array& data() const { return data_; }

  Scalar& operator()(int n, int c, int y, int x) { return data_(index(n, c, y, x)); }
  Scalar operator()(int n, int c, int y, int x) const { return data_(index(n, c, y, x)); }
  Eigen::Index index(int n, int c, int y, int x) const {
    return ((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }

  Scalar* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const Scalar* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  // (C, H*W) row-major view of batch item n.
  Eigen::Map<Matrix> item(int n) { return {plane(n, 0), shape_[1], plane_size()}; }
  Eigen::Map<const Matrix> item(int n) const { return {plane(n, 0), shape_[1], plane_size()}; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on && grad_.size() != data_.size()) grad_ = Array::Zero(data_.size());
    if (!on) grad_.resize(0);
  }
  Array& grad() { return grad_; }
  const Array& grad() const { return grad_; }
  void zero_grad() { grad_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  // Throws NumericError on NaN/Inf.
  void check_finite(const char* where) const {
    if (!data_.isFinite().all())
      throw NumericError(std::string(where) + ": non-finite value in tensor");
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  Array data_;
  Array grad_;
  bool requires_grad_ = false;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

std::string shape_string(const std::array<int, 4>& s);

}  // namespace pano
