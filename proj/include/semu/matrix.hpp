#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace semu {

// Dense real matrix, row-major. Carries weights, gradients and SVD factors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  bool all_zero() const;
  std::string shape_str() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& m);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& m);

// Throws InvalidInputError when any entry is NaN/Inf; `what` names the operand.
void ensure_finite(const Matrix& m, const std::string& what);

// Text fixture format: first line "rows cols", then one line per row of
// space-separated decimals.
Matrix read_matrix_text(const std::string& path);
void write_matrix_text(const Matrix& m, const std::string& path);
Matrix parse_matrix_text(const std::string& text);
std::string format_matrix_text(const Matrix& m);

}  // namespace semu
