#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsctl {

// Raised for malformed user input (configs, schemas, flags).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised for unusable data (empty pickups, zero demand, bad CSV).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  // Grows a square matrix by one row and column filled with `fill`.
  void grow_square(double fill = 0.0) {
    const std::size_t n = rows_ + 1;
    std::vector<double> next(n * n, fill);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) next[r * n + c] = data_[r * cols_ + c];
    rows_ = cols_ = n;
    data_ = std::move(next);
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace rsctl
