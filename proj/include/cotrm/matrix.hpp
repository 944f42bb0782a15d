#pragma once

#include <cstddef>
#include <vector>

namespace cotrm {

// Dense row-major matrix. Just enough linear algebra for a two-layer MLP;
// all the heavy loops live in policy.cpp.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) {
    return a[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return a[static_cast<std::size_t>(r) * cols + c];
  }

  std::size_t size() const { return a.size(); }

  bool operator==(const Matrix&) const = default;
};

}  // namespace cotrm
