#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dbsa {

/// Dense row-major matrix of doubles. Rows are embedding vectors throughout
/// the library.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void append_row(std::span<const double> values);

  /// Rows of `top` followed by rows of `bottom`; column counts must match.
  static Matrix vstack(const Matrix& top, const Matrix& bottom);

  /// New matrix holding rows `order[0]`, `order[1]`, ...
  Matrix select_rows(std::span<const std::size_t> order) const;

  std::vector<std::vector<double>> to_rows() const;

  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace dbsa
