#include <gtest/gtest.h>

#include "dbsa/error.hpp"
#include "dbsa/matrix.hpp"

using dbsa::Matrix;

TEST(Matrix, LiteralAndAccess) {
  Matrix m{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_EQ(m(1, 2), 6.0);
  EXPECT_EQ(m.row(0)[1], 2.0);
}

TEST(Matrix, AppendRowChecksWidth) {
  Matrix m{{1, 2}};
  const std::vector<double> ok{3, 4};
  m.append_row(ok);
  EXPECT_EQ(m.rows(), 2u);
  const std::vector<double> bad{1, 2, 3};
  EXPECT_THROW(m.append_row(bad), dbsa::ConsistencyError);
}

TEST(Matrix, VstackAndSelect) {
  Matrix a{{1}, {2}};
  Matrix b{{3}};
  Matrix s = Matrix::vstack(a, b);
  EXPECT_EQ(s, (Matrix{{1}, {2}, {3}}));
  const std::vector<std::size_t> order{2, 0};
  EXPECT_EQ(s.select_rows(order), (Matrix{{3}, {1}}));
}

TEST(Matrix, FromRowsRoundTrip) {
  std::vector<std::vector<double>> rows{{1, 2}, {3, 4}};
  EXPECT_EQ(Matrix::from_rows(rows).to_rows(), rows);
  EXPECT_THROW(Matrix::from_rows({{1, 2}, {3}}), dbsa::ConsistencyError);
}
