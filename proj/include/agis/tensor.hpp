#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace agis {

using Scalar = double;
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major tensor of arbitrary rank backed by a flat Eigen array.
/// Layout for images is [N,C,H,W] (or [C,H,W] for single images); the
/// flat index of (n,c,h,w) is ((n*C+c)*H+h)*W+w.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = ArrayX::Zero(compute_size(shape_));
  }
  Tensor(std::vector<int> shape, ArrayX data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != compute_size(shape_))
      throw std::invalid_argument("tensor data size does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor constant(std::vector<int> shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }
  static Tensor scalar(Scalar v) { return constant({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  Eigen::Index size() const { return data_.size(); }

  ArrayX& data() { return data_; }
  const ArrayX& data() const { return data_; }
  Scalar* raw() { return data_.data(); }
  const Scalar* raw() const { return data_.data(); }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  /// 4-D accessor, shape must be [N,C,H,W].
  Scalar& at4(int n, int c, int h, int w) {
    return data_[((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar at4(int n, int c, int h, int w) const {
    return data_[((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  /// 3-D accessor, shape must be [C,H,W].
  Scalar& at3(int c, int h, int w) {
    return data_[(static_cast<Eigen::Index>(c) * shape_[1] + h) * shape_[2] + w];
  }
  Scalar at3(int c, int h, int w) const {
    return data_[(static_cast<Eigen::Index>(c) * shape_[1] + h) * shape_[2] + w];
  }
  /// 2-D accessor, shape must be [R,C].
  Scalar& at2(int r, int c) { return data_[static_cast<Eigen::Index>(r) * shape_[1] + c]; }
  Scalar at2(int r, int c) const { return data_[static_cast<Eigen::Index>(r) * shape_[1] + c]; }

  Scalar item() const {
    if (data_.size() != 1) throw std::logic_error("item() on non-scalar tensor");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<int> shape) const {
    if (compute_size(shape) != data_.size())
      throw std::invalid_argument("reshape size mismatch");
    return Tensor(std::move(shape), data_);
  }

  /// View the flat data as a row-major matrix of the given dimensions.
  Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  as_matrix(int rows, int cols) const {
    return {data_.data(), rows, cols};
  }
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
  as_matrix(int rows, int cols) {
    return {data_.data(), rows, cols};
  }

  static Eigen::Index compute_size(const std::vector<int>& shape) {
    Eigen::Index s = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("non-positive tensor dimension");
      s *= d;
    }
    return s;
  }

  static std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }

 private:
  std::vector<int> shape_;
  ArrayX data_;
};

}  // namespace agis
