#include "dbsa/matrix.hpp"

#include <algorithm>

#include "dbsa/error.hpp"

namespace dbsa {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ConsistencyError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m;
  for (const auto& r : rows) m.append_row(r);
  return m;
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw ConsistencyError("row of dimension " + std::to_string(values.size()) +
                           " appended to matrix of dimension " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

Matrix Matrix::vstack(const Matrix& top, const Matrix& bottom) {
  if (!top.empty() && !bottom.empty() && top.cols() != bottom.cols()) {
    throw ConsistencyError("cannot stack matrices of dimension " + std::to_string(top.cols()) +
                           " and " + std::to_string(bottom.cols()));
  }
  Matrix out = top;
  if (out.empty()) out.cols_ = bottom.cols_;
  out.data_.insert(out.data_.end(), bottom.data_.begin(), bottom.data_.end());
  out.rows_ += bottom.rows_;
  return out;
}

Matrix Matrix::select_rows(std::span<const std::size_t> order) const {
  Matrix out(order.size(), cols_);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto src = row(order[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::vector<double>> Matrix::to_rows() const {
  std::vector<std::vector<double>> out;
  out.reserve(rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    const auto src = row(r);
    out.emplace_back(src.begin(), src.end());
  }
  return out;
}

}  // namespace dbsa
