#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsc {

// Dense row-major tensor of doubles. Rank 2 ({rows, cols}) is the common
// case; rank 3 ({channels, height, width}) is used for image planes.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<long> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  static Tensor zeros(std::vector<long> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<long> shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
  }

  static Tensor from(std::vector<long> shape, std::vector<double> values) {
    Tensor t;
    if (count(shape) != static_cast<long>(values.size()))
      throw std::invalid_argument("Tensor::from: shape/value count mismatch");
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  static Tensor row(std::vector<double> values) {
    const long n = static_cast<long>(values.size());
    return from({1, n}, std::move(values));
  }

  static Tensor scalar(double v) { return from({1, 1}, {v}); }

  const std::vector<long>& shape() const { return shape_; }
  long ndim() const { return static_cast<long>(shape_.size()); }
  long numel() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  long rows() const { check_rank(2); return shape_[0]; }
  long cols() const { check_rank(2); return shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& at(long i, long j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  double at(long i, long j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
  double& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  double operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) { for (double& x : data_) x = v; }

  void add_inplace(const Tensor& o) {
    if (!same_shape(o)) throw std::invalid_argument("Tensor::add_inplace: shape mismatch " +
                                                    shape_string() + " vs " + o.shape_string());
    const double* src = o.data();
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += src[i];
  }

  std::string shape_string() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  static long count(const std::vector<long>& shape) {
    long n = 1;
    for (long d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

private:
  void check_rank(long r) const {
    if (ndim() != r)
      throw std::logic_error("Tensor: expected rank " + std::to_string(r) + ", have " + shape_string());
  }

  std::vector<long> shape_;
  std::vector<double> data_;
};

}  // namespace dsc
