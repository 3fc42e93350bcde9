#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tempscale {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense row-major tensor of 64-bit reals. Plain value type: copy freely.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> v);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vals() { return data_; }
  const std::vector<double>& vals() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D access; rows = dim(0), cols = dim(1).
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * dim(1) + c]; }

  int rows() const { return shape_[0]; }
  int cols() const { return shape_[1]; }

  bool all_finite() const;
  double item() const;  // value of a single-element tensor

  Tensor reshaped(Shape new_shape) const;

private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain tensor math (no differentiation). Used by the closed-form gradient
// module and anywhere a one-off product is needed.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double linf_dist(const Tensor& a, const Tensor& b);

// Relative error with denominator max(1, |a|, |b|); avoids blowup near zero.
double rel_err(double a, double b);
double max_rel_err(const Tensor& a, const Tensor& b);

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace tempscale
