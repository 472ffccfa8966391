#include "num/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bevfuse::num {

std::int64_t numel(std::span<const int> shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative extent");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(numel(shape)), fill);
}

Tensor Tensor::from(std::vector<int> s, std::vector<double> d) {
  if (numel(s) != static_cast<std::int64_t>(d.size()))
    throw std::invalid_argument("tensor: shape/data size mismatch");
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(d);
  return t;
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw std::out_of_range("tensor: dim index");
  return shape[static_cast<std::size_t>(i)];
}

double& Tensor::at2(int i, int j) {
  return data[static_cast<std::size_t>(i) * shape[1] + j];
}

double Tensor::at2(int i, int j) const {
  return data[static_cast<std::size_t>(i) * shape[1] + j];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument(std::string(what) + ": non-finite value");
}

}  // namespace bevfuse::num
