#pragma once

// Dense row-major matrix of doubles, sized for desk-scale transport problems.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace otda {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool empty() const { return rows == 0 || cols == 0; }

  std::vector<double> row(std::size_t i) const {
    return std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
                               data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
  }

  void set_row(std::size_t i, const std::vector<double>& v) {
    for (std::size_t j = 0; j < cols; ++j) (*this)(i, j) = v[j];
  }

  Matrix select_rows(const std::vector<int>& idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < cols; ++j)
        out(r, j) = (*this)(static_cast<std::size_t>(idx[r]), j);
    return out;
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline double squared_distance(const Matrix& a, std::size_t i, const Matrix& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.cols; ++k) {
    const double d = a(i, k) - b(j, k);
    s += d * d;
  }
  return s;
}

}  // namespace otda
