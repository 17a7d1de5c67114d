#include "semu/matrix.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "semu/errors.hpp"

namespace semu {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw InvalidInputError("matrix data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_str());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Matrix::all_zero() const {
  for (double v : data_) {
    if (v != 0.0) return false;
  }
  return true;
}

std::string Matrix::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw InvalidInputError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                            b.shape_str());
  }
}
}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix operator*(double s, const Matrix& m) {
  Matrix out = m;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidInputError("matmul: inner dimensions disagree, " + a.shape_str() + " * " +
                            b.shape_str());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      double* orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a.data()[i] * b.data()[i];
  return sum;
}

double frobenius_norm(const Matrix& m) { return std::sqrt(frobenius_inner(m, m)); }

void ensure_finite(const Matrix& m, const std::string& what) {
  if (!m.all_finite()) {
    throw NumericalError(what + " contains non-finite entries (" + m.shape_str() + ")");
  }
}

Matrix parse_matrix_text(const std::string& text) {
  std::istringstream in(text);
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols)) throw InvalidInputError("matrix text: missing 'rows cols' header");
  if (rows == 0 || cols == 0)
    throw InvalidInputError("matrix text: dimensions must be positive, got " +
                            std::to_string(rows) + "x" + std::to_string(cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    if (!(in >> m.data()[i])) {
      throw InvalidInputError("matrix text: expected " + std::to_string(rows * cols) +
                              " values, got " + std::to_string(i));
    }
  }
  return m;
}

std::string format_matrix_text(const Matrix& m) {
  std::ostringstream out;
  out.precision(17);
  out << m.rows() << " " << m.cols() << "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << " ";
      out << m(i, j);
    }
    out << "\n";
  }
  return out.str();
}

Matrix read_matrix_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_matrix_text(buf.str());
}

void write_matrix_text(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix file: " + path);
  out << format_matrix_text(m);
}

}  // namespace semu
