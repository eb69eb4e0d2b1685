#pragma once

// Lie group homomorphisms and numerical checks of conjugation between
// affine systems.

#include "affsys/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace affsys {

/// F: G -> H with its differential at the identity. The differential is a
/// dim(H) x dim(G) matrix acting on algebra_basis() coordinates.
class Homomorphism {
 public:
  enum class Kind { Identity, Determinant, UserTable };
  using Map = std::function<Matrix(const Matrix&)>;

  static Homomorphism identity(GroupRef group) {
    if (!group) throw InvalidInput("homomorphism needs a group");
    const int d = group->dim();
    return Homomorphism(Kind::Identity, group, group, [](const Matrix& g) { return g; }, Matrix::Identity(d, d));
  }

  /// log det: a matrix group into R^1, the positive reals in log coordinates.
  static Homomorphism determinant(GroupRef source) {
    if (!source || source->abelian_rn()) throw InvalidInput("determinant needs a matrix group");
    auto target = GroupSpec::make(GroupKind::AbelianRn, 1);
    Matrix diff(1, source->dim());
    for (int k = 0; k < source->dim(); ++k) diff(0, k) = source->algebra_basis()[static_cast<std::size_t>(k)].trace();
    auto map = [](const Matrix& g) {
      const double det = g.determinant();
      if (!(det > 0)) throw ValidationError("determinant homomorphism needs det > 0");
      Matrix out(1, 1);
      out(0, 0) = std::log(det);
      return out;
    };
    return Homomorphism(Kind::Determinant, std::move(source), std::move(target), map, std::move(diff));
  }

  static Homomorphism user_table(GroupRef source, GroupRef target, Map map, Matrix differential) {
    if (!source || !target || !map) throw InvalidInput("user homomorphism needs groups and a map");
    if (differential.rows() != target->dim() || differential.cols() != source->dim())
      throw InvalidInput("differential must be dim(target) x dim(source)");
    require_finite(differential, "homomorphism differential");
    return Homomorphism(Kind::UserTable, std::move(source), std::move(target), std::move(map),
                        std::move(differential));
  }

  Kind kind() const { return kind_; }
  const GroupRef& source() const { return source_; }
  const GroupRef& target() const { return target_; }
  const Matrix& differential() const { return diff_; }

  Matrix operator()(const Matrix& g) const {
    source_->require_shape(g, "homomorphism argument");
    Matrix out = map_(g);
    if (!target_->has_shape(out)) throw InvalidInput("homomorphism returned the wrong shape");
    return out;
  }

  /// dF_e applied to an algebra element of the source.
  Matrix push_forward(const Matrix& z) const { return target_->from_coordinates(diff_ * source_->coordinates(z)); }

 private:
  Homomorphism(Kind kind, GroupRef source, GroupRef target, Map map, Matrix diff)
      : kind_(kind), source_(std::move(source)), target_(std::move(target)), map_(std::move(map)),
        diff_(std::move(diff)) {}

  Kind kind_;
  GroupRef source_;
  GroupRef target_;
  Map map_;
  Matrix diff_;
};

inline std::string_view to_string(Homomorphism::Kind k) {
  switch (k) {
    case Homomorphism::Kind::Identity: return "identity";
    case Homomorphism::Kind::Determinant: return "det";
    case Homomorphism::Kind::UserTable: return "user";
  }
  return "?";
}

struct HomomorphismReport {
  double identity_error = 0.0;
  double multiplicative_error = 0.0;
  double differential_error = 0.0;
  bool pass = false;
};

/// F(e) = e, F(gh) = F(g)F(h) on random pairs, and dF_e against central
/// differences of F along exp(+-h b_k).
inline HomomorphismReport validate_homomorphism(const Homomorphism& f, int samples = 100, std::uint64_t seed = 0,
                                                double tol = 1e-9, double diff_tol = 1e-6) {
  const GroupSpec& src = *f.source();
  const GroupSpec& tgt = *f.target();
  HomomorphismReport r;
  r.identity_error = frobenius_distance(f(src.identity()), tgt.identity());
  Rng rng(seed);
  for (int k = 0; k < samples; ++k) {
    const Matrix g = src.random_element(rng), h = src.random_element(rng);
    const Matrix lhs = f(src.multiply(g, h));
    const Matrix rhs = tgt.multiply(f(g), f(h));
    r.multiplicative_error = std::max(r.multiplicative_error, frobenius_distance(lhs, rhs) / std::max(1.0, rhs.norm()));
  }
  const double step = 1e-5;
  Matrix numeric(tgt.dim(), src.dim());
  for (int k = 0; k < src.dim(); ++k) {
    const Matrix& b = src.algebra_basis()[static_cast<std::size_t>(k)];
    const Matrix tangent = (f(src.exp(step * b)) - f(src.exp(-step * b))) / (2 * step);
    numeric.col(k) = tgt.coordinates(tangent);
  }
  r.differential_error = (numeric - f.differential()).norm();
  r.pass = r.identity_error <= tol && r.multiplicative_error <= tol && r.differential_error <= diff_tol;
  return r;
}

namespace detail {

inline void require_field_groups(const Homomorphism& f, const LinearField& g_field, const LinearField& h_field) {
  if (!same_group(g_field.group(), f.source()) || !same_group(h_field.group(), f.target()))
    throw InvalidInput("fields do not live on the homomorphism's source and target");
}

}  // namespace detail

/// Largest ||F(phi_t(g)) - psi_t(F(g))|| over ts and `samples` random g.
inline double flow_conjugation_error(const Homomorphism& f, const LinearField& g_field, const LinearField& h_field,
                                     const std::vector<double>& ts, int samples, std::uint64_t seed = 0) {
  detail::require_field_groups(f, g_field, h_field);
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    const Matrix g = f.source()->random_element(rng);
    const Matrix fg = f(g);
    for (double t : ts) worst = std::max(worst, frobenius_distance(f(g_field.flow(t, g)), h_field.flow(t, fg)));
  }
  return worst;
}

inline bool check_flow_conjugation(const Homomorphism& f, const LinearField& g_field, const LinearField& h_field,
                                   const std::vector<double>& ts, int samples, double tol,
                                   std::uint64_t seed = 0) {
  return flow_conjugation_error(f, g_field, h_field, ts, samples, seed) <= tol;
}

/// Largest ||dF_e e^{t DG} - e^{t DH} dF_e|| over ts.
inline double derivation_intertwine_error(const Homomorphism& f, const Matrix& dg, const Matrix& dh,
                                          const std::vector<double>& ts) {
  const Matrix& df = f.differential();
  if (dg.rows() != df.cols() || dg.cols() != df.cols() || dh.rows() != df.rows() || dh.cols() != df.rows())
    throw InvalidInput("derivation matrices do not match the algebra dimensions");
  double worst = 0.0;
  for (double t : ts) worst = std::max(worst, (df * expm(t * dg) - expm(t * dh) * df).norm());
  return worst;
}

inline bool check_derivation_intertwine(const Homomorphism& f, const Matrix& dg, const Matrix& dh,
                                        const std::vector<double>& ts, double tol) {
  return derivation_intertwine_error(f, dg, dh, ts) <= tol;
}

struct ConditionResult {
  std::string name;
  bool pass = false;
  double worst_error = 0.0;
  std::vector<std::string> witnesses;
};

/// (a) trajectory: F(phi_t(g, u)) = theta_t(F(g), u) over signals and points.
/// (b) structural: each linear pair conjugated by F, and dF_e Z_j = W_j.
/// pass follows (a). anomaly marks disagreement between (a) and (b).
struct ConjugationReport {
  bool pass = false;
  double worst_error = 0.0;
  bool trajectory = false;
  bool structural = false;
  bool anomaly = false;
  std::vector<ConditionResult> conditions;
};

inline ConjugationReport check_system_conjugation(const Homomorphism& f, const AffineSystem& sys_g,
                                                  const AffineSystem& sys_h, const std::vector<ControlSignal>& signals,
                                                  int points, double tol, std::uint64_t seed = 0,
                                                  const SolveOptions& opts = {}) {
  if (sys_g.m() != sys_h.m()) throw InvalidInput("systems have different numbers of controls");
  if (!same_group(sys_g.group(), f.source()) || !same_group(sys_h.group(), f.target()))
    throw InvalidInput("systems do not live on the homomorphism's source and target");
  if (points < 0) throw InvalidInput("points must be nonnegative");
  const GroupSpec& src = *sys_g.group();

  ConditionResult traj{"trajectory", true, 0.0, {}};
  Rng rng(seed);
  std::vector<Matrix> starts{src.identity()};
  for (int k = 0; k < points; ++k) starts.push_back(src.random_element(rng, 0.8));
  for (std::size_t s = 0; s < signals.size(); ++s) {
    for (std::size_t p = 0; p < starts.size(); ++p) {
      const Matrix lhs = f(solve_piecewise(sys_g, starts[p], signals[s], opts).endpoint());
      const Matrix rhs = solve_piecewise(sys_h, f(starts[p]), signals[s], opts).endpoint();
      const double err = frobenius_distance(lhs, rhs);
      traj.worst_error = std::max(traj.worst_error, err);
      if (!(err <= tol)) {
        traj.pass = false;
        traj.witnesses.push_back("signal " + std::to_string(s) + " point " + std::to_string(p));
      }
    }
  }

  auto label = [](std::size_t i) { return i == 0 ? std::string("drift") : "control " + std::to_string(i); };
  const auto g_fields = sys_g.linear_fields();
  const auto h_fields = sys_h.linear_fields();
  const std::vector<double> ts{-1.0, -0.5, 0.5, 1.0};

  ConditionResult flows{"flow_conjugation", true, 0.0, {}};
  ConditionResult derivs{"derivation_intertwine", true, 0.0, {}};
  for (std::size_t i = 0; i < g_fields.size(); ++i) {
    const double err = flow_conjugation_error(f, g_fields[i], h_fields[i], ts, std::max(points, 1), seed + i + 1);
    flows.worst_error = std::max(flows.worst_error, err);
    if (!(err <= tol)) {
      flows.pass = false;
      flows.witnesses.push_back(label(i));
    }
    const double derr =
        derivation_intertwine_error(f, derivation_matrix(g_fields[i]), derivation_matrix(h_fields[i]), ts);
    derivs.worst_error = std::max(derivs.worst_error, derr);
    if (!(derr <= tol)) {
      derivs.pass = false;
      derivs.witnesses.push_back(label(i));
    }
  }

  ConditionResult invariants{"invariant_matching", true, 0.0, {}};
  std::vector<std::pair<Matrix, Matrix>> pairs{{sys_g.drift_invariant(), sys_h.drift_invariant()}};
  for (std::size_t j = 0; j < sys_g.m(); ++j) pairs.emplace_back(sys_g.controlled()[j].invariant, sys_h.controlled()[j].invariant);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double err = frobenius_distance(f.push_forward(pairs[i].first), pairs[i].second);
    invariants.worst_error = std::max(invariants.worst_error, err);
    if (!(err <= tol)) {
      invariants.pass = false;
      invariants.witnesses.push_back(label(i));
    }
  }

  ConjugationReport r;
  r.trajectory = traj.pass;
  r.structural = flows.pass && invariants.pass;
  r.pass = r.trajectory;
  r.anomaly = r.trajectory != r.structural;
  r.worst_error = traj.worst_error;
  r.conditions = {std::move(traj), std::move(flows), std::move(invariants), std::move(derivs)};
  return r;
}

}  // namespace affsys
