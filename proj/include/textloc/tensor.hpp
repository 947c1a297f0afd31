#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "textloc/common.hpp"

namespace textloc::ad {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

/// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover everything the
/// encoders need; scalars are shape {1}.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);

  static Tensor scalar(double x);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(int rows, int cols, std::vector<double> values);

  int numel() const { return static_cast<int>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const;
  int cols() const;
  bool is_scalar() const { return numel() == 1; }

  double& at(int i) { return v[static_cast<std::size_t>(i)]; }
  double at(int i) const { return v[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols() + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  double item() const;
};

bool operator==(const Tensor& a, const Tensor& b);

int shape_numel(const Shape& s);

}  // namespace textloc::ad
