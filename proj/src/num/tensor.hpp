#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace bevfuse::num {

// Row-major dense array of 64-bit floats.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  static Tensor from(std::vector<int> s, std::vector<double> d);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int i) const;
  int rank() const { return static_cast<int>(shape.size()); }

  double& at2(int i, int j);
  double at2(int i, int j) const;

  bool all_finite() const;
  std::string shape_str() const;
};

std::int64_t numel(std::span<const int> shape);

// Throws std::invalid_argument when any entry is non-finite.
void require_finite(std::span<const double> v, const char* what);

}  // namespace bevfuse::num
