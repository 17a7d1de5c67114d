#include "semu/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semu/errors.hpp"
#include "semu/log.hpp"

namespace semu {

Matrix SvdFactors::reconstruct() const {
  // u * diag(sigma) * v^T without materializing diag.
  Matrix us(u.rows(), q());
  for (std::size_t i = 0; i < u.rows(); ++i)
    for (std::size_t j = 0; j < q(); ++j) us(i, j) = u(i, j) * sigma[j];
  return matmul(us, transpose(v));
}

namespace {

// One-sided Jacobi on the columns of a (n x m, n >= m): rotate column pairs
// until all are mutually orthogonal, accumulating the rotations in v.
// Afterwards sigma_j = ||col_j(a)|| and u_j = col_j(a) / sigma_j.
void jacobi_orthogonalize(Matrix& a, Matrix& v) {
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  const int max_sweeps = 30;
  const double rel_tol = 1e-12;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double x = a(i, p);
          const double y = a(i, q);
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        if (std::abs(apq) <= rel_tol * std::sqrt(app * aqq)) continue;
        rotated = true;

        const double tau = (aqq - app) / (2.0 * apq);
        const double t =
            (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;

        for (std::size_t i = 0; i < n; ++i) {
          const double x = a(i, p);
          const double y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double x = v(i, p);
          const double y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    if (!rotated) return;
  }
  throw NumericalError("svd: Jacobi sweep budget exhausted on " +
                       std::to_string(n) + "x" + std::to_string(m) + " matrix");
}

// Fill u columns whose singular value vanished: pick the canonical basis
// vector least represented by the existing columns and Gram-Schmidt it in.
void complete_null_columns(Matrix& u, std::size_t first_bad) {
  const std::size_t n = u.rows();
  const std::size_t q = u.cols();
  for (std::size_t j = first_bad; j < q; ++j) {
    std::size_t best = 0;
    double best_norm = -1.0;
    Matrix best_col;
    for (std::size_t e = 0; e < n; ++e) {
      // residual of e_e against columns 0..j-1
      std::vector<double> col(n, 0.0);
      col[e] = 1.0;
      for (std::size_t k = 0; k < j; ++k) {
        double dot = u(e, k);  // <e_e, u_k>
        for (std::size_t i = 0; i < n; ++i) col[i] -= dot * u(i, k);
      }
      double nrm2 = 0.0;
      for (double x : col) nrm2 += x * x;
      if (nrm2 > best_norm) {
        best_norm = nrm2;
        best = e;
        best_col = Matrix(n, 1, col);
      }
    }
    (void)best;
    if (best_norm <= 0.0)
      throw NumericalError("svd: cannot complete orthonormal basis");
    const double inv = 1.0 / std::sqrt(best_norm);
    for (std::size_t i = 0; i < n; ++i) u(i, j) = best_col(i, 0) * inv;
  }
}

SvdFactors svd_tall(const Matrix& input) {
  const std::size_t n = input.rows();
  const std::size_t m = input.cols();  // n >= m, q = m
  Matrix a = input;
  Matrix v = Matrix::identity(m);
  jacobi_orthogonalize(a, v);

  // Column norms are the singular values; sort descending (stable so equal
  // values keep sweep order — determinism, not numerics).
  std::vector<double> norms(m);
  for (std::size_t j = 0; j < m; ++j) {
    double nrm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm2 += a(i, j) * a(i, j);
    norms[j] = std::sqrt(nrm2);
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdFactors f;
  f.sigma.resize(m);
  f.u = Matrix(n, m);
  f.v = Matrix(m, m);
  const double sigma_max = norms.empty() ? 0.0 : norms[order[0]];
  const double zero_tol = std::max(1e-300, 1e-15 * sigma_max);
  std::size_t rank = m;
  for (std::size_t j = 0; j < m; ++j) {
    const std::size_t src = order[j];
    f.sigma[j] = norms[src];
    for (std::size_t i = 0; i < m; ++i) f.v(i, j) = v(i, src);
    if (norms[src] > zero_tol) {
      const double inv = 1.0 / norms[src];
      for (std::size_t i = 0; i < n; ++i) f.u(i, j) = a(i, src) * inv;
    } else {
      f.sigma[j] = 0.0;
      if (rank == m) rank = j;  // first vanished column
    }
  }
  if (rank < m) complete_null_columns(f.u, rank);

  // Sign convention: first nonzero entry of each u column nonnegative.
  for (std::size_t j = 0; j < m; ++j) {
    double lead = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (f.u(i, j) != 0.0) {
        lead = f.u(i, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (std::size_t i = 0; i < n; ++i) f.u(i, j) = -f.u(i, j);
      for (std::size_t i = 0; i < m; ++i) f.v(i, j) = -f.v(i, j);
    }
  }
  return f;
}

}  // namespace

SvdFactors svd(const Matrix& m) {
  if (m.empty()) throw InvalidInputError("svd: empty matrix");
  ensure_finite(m, "svd input");
  if (m.rows() >= m.cols()) return svd_tall(m);
  // Wide matrix: factor the transpose and swap u/v.
  SvdFactors t = svd_tall(transpose(m));
  SvdFactors f;
  f.u = std::move(t.v);
  f.sigma = std::move(t.sigma);
  f.v = std::move(t.u);
  // Re-apply the sign convention to the swapped factors.
  const std::size_t q = f.sigma.size();
  for (std::size_t j = 0; j < q; ++j) {
    double lead = 0.0;
    for (std::size_t i = 0; i < f.u.rows(); ++i) {
      if (f.u(i, j) != 0.0) {
        lead = f.u(i, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (std::size_t i = 0; i < f.u.rows(); ++i) f.u(i, j) = -f.u(i, j);
      for (std::size_t i = 0; i < f.v.rows(); ++i) f.v(i, j) = -f.v(i, j);
    }
  }
  return f;
}

RankSelection select_rank(const std::vector<double>& sigma, double gamma) {
  if (gamma < 0.0 || gamma > 1.0)
    throw InvalidInputError("select_rank: gamma must lie in [0, 1], got " +
                            std::to_string(gamma));
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] < 0.0)
      throw InvalidInputError("select_rank: negative singular value at index " +
                              std::to_string(i));
    if (i > 0 && sigma[i] > sigma[i - 1])
      throw InvalidInputError("select_rank: singular values not descending at index " +
                              std::to_string(i));
  }

  RankSelection sel;
  sel.gamma = gamma;
  double total = 0.0;
  for (double s : sigma) total += s * s;
  if (total == 0.0) return sel;  // r = 0, explained = 0

  if (gamma == 1.0) {
    // Keep every direction with a genuinely nonzero singular value.
    const double tol = std::max(1e-300, 1e-12 * sigma[0]);
    std::size_t r = 0;
    double cum = 0.0;
    for (double s : sigma) {
      if (s > tol) {
        ++r;
        cum += s * s;
      }
    }
    sel.r = r;
    sel.explained = cum / total;
    return sel;
  }

  double cum = 0.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    // e_0 = 0 handles gamma = 0 -> r = 0 before this loop body runs.
    if (cum / total >= gamma) {
      sel.r = k;
      sel.explained = cum / total;
      return sel;
    }
    cum += sigma[k] * sigma[k];
  }
  sel.r = sigma.size();
  sel.explained = cum / total;
  return sel;
}

TruncatedFactors truncate(const SvdFactors& f, std::size_t r) {
  if (r > f.q())
    throw InvalidInputError("truncate: rank " + std::to_string(r) +
                            " exceeds factor count " + std::to_string(f.q()));
  TruncatedFactors t;
  t.u_r = Matrix(f.u.rows(), r);
  t.v_r = Matrix(f.v.rows(), r);
  t.sigma_r.assign(f.sigma.begin(), f.sigma.begin() + static_cast<std::ptrdiff_t>(r));
  for (std::size_t i = 0; i < f.u.rows(); ++i)
    for (std::size_t j = 0; j < r; ++j) t.u_r(i, j) = f.u(i, j);
  for (std::size_t i = 0; i < f.v.rows(); ++i)
    for (std::size_t j = 0; j < r; ++j) t.v_r(i, j) = f.v(i, j);
  return t;
}

Matrix perp_project(const Matrix& g, const Matrix& a) {
  if (!g.same_shape(a))
    throw InvalidInputError("perp_project: shape mismatch " + g.shape_str() +
                            " vs " + a.shape_str());
  const double a2 = frobenius_inner(a, a);
  if (a2 == 0.0) {
    log::warn("perp_project: degenerate base (zero matrix), gradient unchanged");
    return g;
  }
  const double coef = frobenius_inner(g, a) / a2;
  return g - coef * a;
}

namespace {

void require_orthonormal_columns(const Matrix& m, const char* name) {
  const std::size_t k = m.cols();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < m.rows(); ++t) dot += m(t, i) * m(t, j);
      const double want = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - want) > 1e-8)
        throw InvalidInputError(std::string("subspace_project: columns of ") + name +
                                " are not orthonormal (gram deviation " +
                                std::to_string(std::abs(dot - want)) + ")");
    }
  }
}

}  // namespace

Matrix subspace_project(const Matrix& x, const Matrix& a, const Matrix& b) {
  if (x.rows() != a.rows() || x.cols() != b.rows())
    throw InvalidInputError("subspace_project: x is " + x.shape_str() +
                            " but bases expect " + std::to_string(a.rows()) + "x" +
                            std::to_string(b.rows()));
  require_orthonormal_columns(a, "a");
  require_orthonormal_columns(b, "b");
  // a * (a^T x b) * b^T
  Matrix core = matmul(matmul(transpose(a), x), b);
  return matmul(matmul(a, core), transpose(b));
}

}  // namespace semu
