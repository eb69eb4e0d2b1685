#pragma once

// Dense real matrix primitives shared by every other module.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace affsys {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: wrong sizes, non-finite entries, bad parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A model violates a structural hypothesis (membership, commutation, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entries");
}

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw InvalidInput(std::string(what) + ": expected a non-empty square matrix");
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput(std::string(what) + ": size mismatch");
}

/// Matrix exponential e^M.
///
/// Backed by Eigen's scaling-and-squaring implementation with a degree-13
/// Pade approximant (Higham 2005).
inline Matrix expm(const Matrix& m) {
  require_square(m, "expm");
  require_finite(m, "expm");
  Matrix out = m.exp();
  if (!out.allFinite()) throw NumericalError("expm: overflow");
  return out;
}

/// Commutator AB - BA.
inline Matrix bracket(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "bracket");
  require_square(a, "bracket");
  return a * b - b * a;
}

inline double frobenius_norm(const Matrix& a) { return a.norm(); }

inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_distance");
  return (a - b).norm();
}

/// E_ij with 1-based indices, as in the usual textbook notation.
inline Matrix elementary(Eigen::Index n, Eigen::Index i, Eigen::Index j) {
  Matrix e = Matrix::Zero(n, n);
  e(i - 1, j - 1) = 1.0;
  return e;
}

/// Flattens a matrix into a row-major coordinate vector.
inline Vector flatten(const Matrix& m) {
  Vector v(m.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) v(k++) = m(i, j);
  return v;
}

inline Matrix unflatten(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw InvalidInput("unflatten: size mismatch");
  Matrix m(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v(k++);
  return m;
}

/// Numerical rank of a set of equally sized matrices seen as vectors.
///
/// Uses column-pivoted Householder QR; pivots below tol times the largest
/// pivot are treated as zero.
inline int span_rank(std::span<const Matrix> vectors, double tol = 1e-9) {
  if (vectors.empty()) return 0;
  if (!(tol > 0)) throw InvalidInput("span_rank: tol must be positive");
  const auto rows = vectors.front().rows();
  const auto cols = vectors.front().cols();
  Matrix stacked(rows * cols, static_cast<Eigen::Index>(vectors.size()));
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    const Matrix& v = vectors[k];
    if (v.rows() != rows || v.cols() != cols) throw InvalidInput("span_rank: size mismatch");
    require_finite(v, "span_rank");
    stacked.col(static_cast<Eigen::Index>(k)) = flatten(v);
  }
  if (stacked.norm() == 0.0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(stacked);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  const Eigen::Index diag = std::min(r.rows(), r.cols());
  const double lead = std::abs(r(0, 0));
  int rank = 0;
  for (Eigen::Index k = 0; k < diag; ++k)
    if (std::abs(r(k, k)) > tol * lead) ++rank;
  return rank;
}

inline int span_rank(const std::vector<Matrix>& vectors, double tol = 1e-9) {
  return span_rank(std::span<const Matrix>(vectors), tol);
}

}  // namespace affsys
