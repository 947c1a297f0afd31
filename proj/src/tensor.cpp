#include "textloc/tensor.hpp"

#include <numeric>

namespace textloc::ad {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int shape_numel(const Shape& s) {
  int n = 1;
  for (int d : s) {
    require(d >= 0, "tensor shape has negative dim ", shape_str(s));
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape s, double fill)
    : shape(std::move(s)), v(static_cast<std::size_t>(shape_numel(shape)), fill) {}

Tensor Tensor::scalar(double x) {
  Tensor t({1});
  t.v[0] = x;
  return t;
}

Tensor Tensor::vec(std::vector<double> values) {
  Tensor t;
  t.shape = {static_cast<int>(values.size())};
  t.v = std::move(values);
  return t;
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
  require(static_cast<int>(values.size()) == rows * cols,
          "Tensor::matrix: ", rows, "x", cols, " needs ", rows * cols,
          " values, got ", values.size());
  Tensor t;
  t.shape = {rows, cols};
  t.v = std::move(values);
  return t;
}

int Tensor::rows() const {
  require(rank() == 2, "Tensor::rows on non-matrix ", shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  require(rank() == 2, "Tensor::cols on non-matrix ", shape_str(shape));
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Tensor::item() const {
  require(is_scalar(), "Tensor::item on non-scalar ", shape_str(shape));
  return v[0];
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.v == b.v;
}

}  // namespace textloc::ad
