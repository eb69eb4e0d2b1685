#pragma once

// Matrix Lie groups, linear vector fields and the semidirect-product lift.

#include "affsys/matcore.hpp"

#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace affsys {

inline constexpr double kDefaultMembershipTol = 1e-8;

enum class GroupKind { GLplus, SL, SO, Heisenberg3, AbelianRn };

inline std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::GLplus: return "glplus";
    case GroupKind::SL: return "sl";
    case GroupKind::SO: return "so";
    case GroupKind::Heisenberg3: return "heis3";
    case GroupKind::AbelianRn: return "rn";
  }
  return "?";
}

using Rng = std::mt19937_64;

/// A connected matrix Lie group together with a basis of its Lie algebra.
///
/// Elements are n x n matrices, except for AbelianRn whose elements are
/// column vectors of length n with addition as the group law. Algebra
/// elements have the same shape as group elements.
class GroupSpec {
 public:
  static std::shared_ptr<const GroupSpec> make(GroupKind kind, int n,
                                               double membership_tol = kDefaultMembershipTol) {
    return std::make_shared<const GroupSpec>(GroupSpec(kind, n, membership_tol));
  }

  const std::string& name() const { return name_; }
  GroupKind kind() const { return kind_; }
  int n() const { return n_; }
  int dim() const { return static_cast<int>(basis_.size()); }
  double membership_tol() const { return tol_; }
  const std::vector<Matrix>& algebra_basis() const { return basis_; }
  bool abelian_rn() const { return kind_ == GroupKind::AbelianRn; }

  Eigen::Index elem_rows() const { return n_; }
  Eigen::Index elem_cols() const { return abelian_rn() ? 1 : n_; }

  bool operator==(const GroupSpec& other) const {
    return kind_ == other.kind_ && n_ == other.n_;
  }

  bool has_shape(const Matrix& g) const {
    return g.rows() == elem_rows() && g.cols() == elem_cols();
  }

  void require_shape(const Matrix& g, const char* what) const {
    if (!has_shape(g))
      throw InvalidInput(std::string(what) + ": element shape does not match group " + name_);
  }

  Matrix identity() const {
    return abelian_rn() ? Matrix(Matrix::Zero(n_, 1)) : Matrix(Matrix::Identity(n_, n_));
  }

  Matrix multiply(const Matrix& g, const Matrix& h) const {
    return abelian_rn() ? Matrix(g + h) : Matrix(g * h);
  }

  Matrix inverse(const Matrix& g) const {
    return abelian_rn() ? Matrix(-g) : Matrix(g.inverse());
  }

  /// Group exponential of an algebra element.
  Matrix exp(const Matrix& y) const {
    require_shape(y, "exp");
    return abelian_rn() ? y : expm(y);
  }

  /// Lie bracket in the algebra (identically zero on R^n).
  Matrix lie_bracket(const Matrix& a, const Matrix& b) const {
    require_shape(a, "lie_bracket");
    require_shape(b, "lie_bracket");
    if (abelian_rn()) return Matrix::Zero(n_, 1);
    return bracket(a, b);
  }

  /// Value at g of the right-invariant field whose value at e is y.
  Matrix right_invariant(const Matrix& y, const Matrix& g) const {
    return abelian_rn() ? y : Matrix(y * g);
  }

  bool contains(const Matrix& g) const { return contains(g, tol_); }

  bool contains(const Matrix& g, double tol) const {
    require_shape(g, "group_membership");
    if (!g.allFinite()) return false;
    const Eigen::Index n = n_;
    switch (kind_) {
      case GroupKind::GLplus:
        return g.determinant() > 0.0;
      case GroupKind::SL:
        return std::abs(g.determinant() - 1.0) <= tol;
      case GroupKind::SO:
        return (g.transpose() * g - Matrix::Identity(n, n)).norm() <= tol && g.determinant() > 0.0;
      case GroupKind::Heisenberg3:
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j <= i; ++j)
            if (std::abs(g(i, j) - (i == j ? 1.0 : 0.0)) > tol) return false;
        return true;
      case GroupKind::AbelianRn:
        return true;
    }
    return false;
  }

  bool in_algebra(const Matrix& y) const { return in_algebra(y, tol_); }

  bool in_algebra(const Matrix& y, double tol) const {
    if (!has_shape(y) || !y.allFinite()) return false;
    const double scaled = tol * std::max(1.0, y.norm());
    switch (kind_) {
      case GroupKind::GLplus:
      case GroupKind::AbelianRn:
        return true;
      case GroupKind::SL:
        return std::abs(y.trace()) <= scaled;
      case GroupKind::SO:
        return (y + y.transpose()).norm() <= scaled;
      case GroupKind::Heisenberg3:
        for (Eigen::Index i = 0; i < n_; ++i)
          for (Eigen::Index j = 0; j <= i; ++j)
            if (std::abs(y(i, j)) > scaled) return false;
        return true;
    }
    return false;
  }

  /// Coordinates of an algebra element in algebra_basis().
  Vector coordinates(const Matrix& z) const {
    require_shape(z, "coordinates");
    return basis_qr_.solve(flatten(z));
  }

  Matrix from_coordinates(const Vector& c) const {
    if (c.size() != dim()) throw InvalidInput("from_coordinates: wrong coordinate count");
    Matrix z = Matrix::Zero(elem_rows(), elem_cols());
    for (int k = 0; k < dim(); ++k) z += c(k) * basis_[static_cast<std::size_t>(k)];
    return z;
  }

  /// Nearest point on the group for the kinds where a cheap projection exists.
  Matrix project(const Matrix& g) const {
    switch (kind_) {
      case GroupKind::SO: {
        Eigen::JacobiSVD<Matrix> svd(g, Eigen::ComputeFullU | Eigen::ComputeFullV);
        return svd.matrixU() * svd.matrixV().transpose();
      }
      case GroupKind::SL: {
        const double det = g.determinant();
        if (det <= 0.0) return g;
        return g / std::pow(det, 1.0 / n_);
      }
      default:
        return g;
    }
  }

  Matrix random_algebra(Rng& rng, double scale = 1.0) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector c(dim());
    for (int k = 0; k < dim(); ++k) c(k) = normal(rng);
    Matrix y = from_coordinates(c);
    const double norm = y.norm();
    return norm > 0 ? Matrix(y * (scale / norm)) : y;
  }

  Matrix random_element(Rng& rng, double scale = 1.0) const {
    return exp(random_algebra(rng, scale));
  }

 private:
  GroupSpec(GroupKind kind, int n, double tol) : kind_(kind), n_(n), tol_(tol) {
    if (n < 1 || n > 64) throw InvalidInput("group dimension out of range");
    if (kind == GroupKind::Heisenberg3 && n != 3)
      throw InvalidInput("heisenberg group is 3x3");
    name_ = std::string(to_string(kind)) + "(" + std::to_string(n) + ")";
    const Eigen::Index m = n;
    switch (kind) {
      case GroupKind::GLplus:
        for (int i = 1; i <= n; ++i)
          for (int j = 1; j <= n; ++j) basis_.push_back(elementary(m, i, j));
        break;
      case GroupKind::SL:
        for (int i = 1; i <= n; ++i)
          for (int j = 1; j <= n; ++j)
            if (i != j) basis_.push_back(elementary(m, i, j));
        for (int i = 1; i < n; ++i) basis_.push_back(elementary(m, i, i) - elementary(m, i + 1, i + 1));
        break;
      case GroupKind::SO:
        for (int i = 1; i <= n; ++i)
          for (int j = i + 1; j <= n; ++j) basis_.push_back(elementary(m, j, i) - elementary(m, i, j));
        break;
      case GroupKind::Heisenberg3:
        basis_ = {elementary(3, 1, 2), elementary(3, 2, 3), elementary(3, 1, 3)};
        break;
      case GroupKind::AbelianRn:
        for (int k = 0; k < n; ++k) {
          Matrix e = Matrix::Zero(m, 1);
          e(k, 0) = 1.0;
          basis_.push_back(e);
        }
        break;
    }
    Matrix stacked(elem_rows() * elem_cols(), static_cast<Eigen::Index>(basis_.size()));
    for (std::size_t k = 0; k < basis_.size(); ++k)
      stacked.col(static_cast<Eigen::Index>(k)) = flatten(basis_[k]);
    basis_qr_.compute(stacked);
  }

  GroupKind kind_;
  int n_;
  double tol_;
  std::string name_;
  std::vector<Matrix> basis_;
  Eigen::ColPivHouseholderQR<Matrix> basis_qr_;
};

using GroupRef = std::shared_ptr<const GroupSpec>;

inline bool same_group(const GroupRef& a, const GroupRef& b) { return a && b && *a == *b; }

/// K g K^{-1}, written as I + K (g - I) K^{-1} so the identity is fixed exactly.
inline Matrix conjugate(const Matrix& k, const Matrix& k_inv, const Matrix& g) {
  Matrix out = k * (g - Matrix::Identity(g.rows(), g.cols())) * k_inv;
  out.diagonal().array() += 1.0;
  return out;
}

/// A linear vector field: its flow is a one-parameter group of automorphisms.
///
/// Two backends are representable. Inner(X) has flow g -> e^{tX} g e^{-tX}
/// and value Xg - gX. AbelianMap(A) lives on R^n only, with flow
/// x -> e^{tA} x and value Ax.
class LinearField {
 public:
  enum class Kind { Inner, AbelianMap };

  static LinearField inner(GroupRef group, Matrix x) {
    if (!group) throw InvalidInput("linear field needs a group");
    if (group->abelian_rn())
      throw ValidationError("inner fields are not defined on " + group->name() + "; use an abelian map");
    if (!group->in_algebra(x))
      throw ValidationError("inner generator is not in the algebra of " + group->name());
    return LinearField(Kind::Inner, std::move(group), std::move(x));
  }

  static LinearField abelian_map(GroupRef group, Matrix a) {
    if (!group) throw InvalidInput("linear field needs a group");
    if (!group->abelian_rn())
      throw ValidationError("abelian maps are only valid on R^n, not on " + group->name());
    if (a.rows() != group->n() || a.cols() != group->n())
      throw InvalidInput("abelian map has the wrong size");
    require_finite(a, "abelian_map");
    return LinearField(Kind::AbelianMap, std::move(group), std::move(a));
  }

  /// The zero field in whichever backend the group supports.
  static LinearField zero(GroupRef group) {
    if (!group) throw InvalidInput("linear field needs a group");
    const Eigen::Index n = group->n();
    if (group->abelian_rn()) return abelian_map(std::move(group), Matrix::Zero(n, n));
    return inner(std::move(group), Matrix::Zero(n, n));
  }

  Kind kind() const { return kind_; }
  const Matrix& generator() const { return gen_; }
  const GroupRef& group() const { return group_; }
  bool is_zero(double tol = 0.0) const { return gen_.norm() <= tol; }

  /// phi_t(g).
  Matrix flow(double t, const Matrix& g) const {
    group_->require_shape(g, "linear_flow");
    if (kind_ == Kind::AbelianMap) return expm(t * gen_) * g;
    return conjugate(expm(t * gen_), expm(-t * gen_), g);
  }

  /// The field evaluated at g.
  Matrix value(const Matrix& g) const {
    group_->require_shape(g, "linear field value");
    if (kind_ == Kind::AbelianMap) return gen_ * g;
    return gen_ * g - g * gen_;
  }

  bool operator==(const LinearField& other) const {
    return kind_ == other.kind_ && same_group(group_, other.group_) && gen_ == other.gen_;
  }

 private:
  LinearField(Kind kind, GroupRef group, Matrix gen)
      : kind_(kind), group_(std::move(group)), gen_(std::move(gen)) {}

  Kind kind_;
  GroupRef group_;
  Matrix gen_;
};

inline Matrix linear_flow(const LinearField& field, double t, const Matrix& g) {
  return field.flow(t, g);
}

/// Matrix of the derivation induced by the field, in algebra_basis()
/// coordinates. e^{tD} is the differential of the flow at the identity.
inline Matrix derivation_matrix(const LinearField& field) {
  if (field.kind() == LinearField::Kind::AbelianMap) return field.generator();
  const GroupSpec& group = *field.group();
  const auto& basis = group.algebra_basis();
  Matrix d(group.dim(), group.dim());
  for (int k = 0; k < group.dim(); ++k)
    d.col(k) = group.coordinates(bracket(field.generator(), basis[static_cast<std::size_t>(k)]));
  return d;
}

struct CommutationReport {
  bool pass = true;
  std::vector<std::pair<std::size_t, std::size_t>> offending;
};

inline void require_common_group(std::span<const LinearField> fields, const char* what) {
  for (const auto& f : fields)
    if (!same_group(f.group(), fields.front().group()))
      throw InvalidInput(std::string(what) + ": fields live on different groups");
}

inline CommutationReport check_commutation(std::span<const LinearField> fields, double tol = 1e-10) {
  CommutationReport report;
  if (fields.empty()) return report;
  require_common_group(fields, "check_commutation");
  std::vector<Matrix> ders;
  ders.reserve(fields.size());
  for (const auto& f : fields) ders.push_back(derivation_matrix(f));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    for (std::size_t j = i + 1; j < fields.size(); ++j) {
      bool ok = bracket(ders[i], ders[j]).norm() <= tol;
      if (fields[i].kind() == LinearField::Kind::Inner)
        ok = ok && bracket(fields[i].generator(), fields[j].generator()).norm() <= tol;
      if (!ok) {
        report.pass = false;
        report.offending.emplace_back(i, j);
      }
    }
  }
  return report;
}

/// An automorphism of the form g -> K g K^{-1} (inner) or x -> K x (abelian).
struct Automorphism {
  LinearField::Kind kind;
  Matrix k;
  Matrix k_inv;

  Matrix operator()(const Matrix& g) const {
    if (kind == LinearField::Kind::AbelianMap) return k * g;
    return conjugate(k, k_inv, g);
  }
};

/// Sum_i t_i * generator_i: the generator of rho(t) for commuting fields.
inline Matrix combined_generator(std::span<const LinearField> fields, const Vector& tvec) {
  if (fields.empty()) throw InvalidInput("rho: field list is empty");
  if (tvec.size() != static_cast<Eigen::Index>(fields.size()))
    throw InvalidInput("rho: time vector length does not match field count");
  require_common_group(fields, "rho");
  Matrix sum = Matrix::Zero(fields.front().generator().rows(), fields.front().generator().cols());
  for (std::size_t i = 0; i < fields.size(); ++i)
    sum += tvec(static_cast<Eigen::Index>(i)) * fields[i].generator();
  return sum;
}

inline Automorphism rho_automorphism(std::span<const LinearField> fields, const Vector& tvec) {
  const Matrix gen = combined_generator(fields, tvec);
  return Automorphism{fields.front().kind(), expm(gen), expm(-gen)};
}

/// rho(t_0, ..., t_m)(g), evaluated as a single flow of the summed generator.
inline Matrix rho(std::span<const LinearField> fields, const Vector& tvec, const Matrix& g) {
  fields.front().group()->require_shape(g, "rho");
  return rho_automorphism(fields, tvec)(g);
}

/// rho(t) as the literal composition phi^0_{t_0} o ... o phi^m_{t_m}.
inline Matrix rho_composed(std::span<const LinearField> fields, const Vector& tvec, const Matrix& g) {
  if (fields.empty()) throw InvalidInput("rho: field list is empty");
  if (tvec.size() != static_cast<Eigen::Index>(fields.size()))
    throw InvalidInput("rho: time vector length does not match field count");
  require_common_group(fields, "rho");
  Matrix out = g;
  for (std::size_t i = fields.size(); i-- > 0;) out = fields[i].flow(tvec(static_cast<Eigen::Index>(i)), out);
  return out;
}

struct SemidirectElement {
  Matrix g;
  Vector r;
};

/// The group G x_rho R^{m+1} with product (g,t)(h,s) = (g rho_t(h), t+s).
class SemidirectProduct {
 public:
  explicit SemidirectProduct(std::vector<LinearField> fields) : fields_(std::move(fields)) {
    if (fields_.empty()) throw InvalidInput("semidirect product needs at least one field");
    require_common_group(fields_, "semidirect product");
  }

  const GroupSpec& group() const { return *fields_.front().group(); }
  std::size_t width() const { return fields_.size(); }
  std::span<const LinearField> fields() const { return fields_; }

  SemidirectElement identity() const {
    return {group().identity(), Vector::Zero(static_cast<Eigen::Index>(width()))};
  }

  SemidirectElement multiply(const SemidirectElement& a, const SemidirectElement& b) const {
    check(a);
    check(b);
    return {group().multiply(a.g, rho(fields_, a.r, b.g)), a.r + b.r};
  }

  SemidirectElement inverse(const SemidirectElement& a) const {
    check(a);
    const Vector back = -a.r;
    return {rho(fields_, back, group().inverse(a.g)), back};
  }

  /// n-term approximation of exp(t(W, s)), computed as the n-th power of
  /// (exp(t/n W), t/n s) under the semidirect product.
  SemidirectElement exp(const Matrix& w, const Vector& s, double t, long n) const {
    if (n < 1) throw InvalidInput("semidirect_exp: n must be at least 1");
    if (s.size() != static_cast<Eigen::Index>(width()))
      throw InvalidInput("semidirect_exp: s has the wrong length");
    if (!group().in_algebra(w)) throw ValidationError("semidirect_exp: W is not in the algebra");
    const double tau = t / static_cast<double>(n);
    const SemidirectElement step{group().exp(tau * w), tau * s};
    SemidirectElement acc = identity();
    for (long i = 0; i < n; ++i) acc = multiply(acc, step);
    return acc;
  }

 private:
  void check(const SemidirectElement& a) const {
    group().require_shape(a.g, "semidirect element");
    if (a.r.size() != static_cast<Eigen::Index>(width()))
      throw InvalidInput("semidirect element has the wrong R^{m+1} length");
  }

  std::vector<LinearField> fields_;
};

}  // namespace affsys
