#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

namespace wavebank {

using Shape = std::vector<int64_t>;

// Dense row-major array of 64-bit floats. Rank 0 is a scalar holding one
// value. Extents must be positive; an empty axis is rejected at
// construction, so a Tensor always holds at least one element.
class Tensor {
 public:
  Tensor();  // rank-0 scalar, value 0.0
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int64_t dim(int axis) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) {
    assert(i >= 0 && i < size());
    return data_[static_cast<size_t>(i)];
  }
  double operator[](int64_t i) const {
    assert(i >= 0 && i < size());
    return data_[static_cast<size_t>(i)];
  }

  // Rank-checked element access for 2-D / 3-D tensors.
  double& at(int64_t i, int64_t j) {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double at(int64_t i, int64_t j) const {
    assert(rank() == 2);
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double& at(int64_t i, int64_t j, int64_t k) {
    assert(rank() == 3);
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at(int64_t i, int64_t j, int64_t k) const {
    assert(rank() == 3);
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double sum() const;

  std::string shape_str() const;  // e.g. "[3,4]"

 private:
  Shape shape_;
  std::vector<double> data_;
};

int64_t shape_size(const Shape& shape);  // product of extents; validates them

}  // namespace wavebank
