#pragma once

#include <cstddef>
#include <tuple>
#include <vector>

#include "semu/matrix.hpp"

namespace semu {

// Thin SVD of an n x m matrix: u is n x q, v is m x q, q = min(n, m),
// sigma descending and nonnegative, input == u * diag(sigma) * v^T.
struct SvdFactors {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;

  std::size_t q() const { return sigma.size(); }
  Matrix reconstruct() const;
};

struct RankSelection {
  std::size_t r = 0;
  double explained = 0.0;  // e_r, cumulative share of squared singular values
  double gamma = 0.0;
};

struct TruncatedFactors {
  Matrix u_r;                  // n x r
  std::vector<double> sigma_r;
  Matrix v_r;                  // m x r
};

// One-sided Jacobi SVD. Deterministic: fixed sweep order, 30-sweep budget,
// sign convention "first nonzero entry of each u column is nonnegative".
SvdFactors svd(const Matrix& m);

// Smallest k whose cumulative explained variance e_k reaches gamma.
// gamma == 1.0 counts the singular values above the zero tolerance
// (sigma_i > 1e-12 * sigma_1) instead of chasing rounding in e_k.
RankSelection select_rank(const std::vector<double>& sigma, double gamma);

TruncatedFactors truncate(const SvdFactors& f, std::size_t r);

// G minus its component along A under the Frobenius inner product.
// A zero base is returned unchanged (warned, not thrown).
Matrix perp_project(const Matrix& g, const Matrix& a);

// Orthogonal projection of x onto {A X B^T}: a * (a^T x b) * b^T.
// a and b must have orthonormal columns (Gram deviation <= 1e-8).
Matrix subspace_project(const Matrix& x, const Matrix& a, const Matrix& b);

}  // namespace semu
