#pragma once

// Solution formulas for affine systems and the RK4 reference integrator.

#include "affsys/systems.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace affsys {

struct SolveOptions {
  Method method = Method::automatic;
  long n_initial = 64;
  long n_max = 1L << 20;
  double convergence_tol = 1e-10;
  double rk4_dt = 1e-3;
  /// Run the product formula even when the linear fields do not commute.
  bool force = false;
  /// Richardson-extrapolate the n-doubling sequence before the Cauchy test.
  bool extrapolate = true;
  /// Tolerance of the commutation test gating the exact formulas.
  double commutation_tol = 1e-10;

  void check() const {
    if (n_initial < 1) throw InvalidInput("n_initial must be at least 1");
    if (n_max < n_initial) throw InvalidInput("n_max must be at least n_initial");
    if (!(convergence_tol > 0) || !(rk4_dt > 0) || !(commutation_tol > 0))
      throw InvalidInput("tolerances must be positive");
  }
};

/// The n-doubling loop did not settle before n_max.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Matrix previous, Matrix last, long n, double delta)
      : Error(what), previous_(std::move(previous)), last_(std::move(last)), n_(n), delta_(delta) {}

  const Matrix& previous() const { return previous_; }
  const Matrix& last() const { return last_; }
  long n() const { return n_; }
  double delta() const { return delta_; }

 private:
  Matrix previous_;
  Matrix last_;
  long n_;
  double delta_;
};

namespace detail {

inline void require_commuting(const AffineSystem& system, const SolveOptions& opts, const char* what) {
  if (opts.force) return;
  const auto report = validate(system, opts.commutation_tol);
  if (!report.commuting)
    throw ValidationError(std::string(what) + ": linear fields do not commute (use force to override)");
}

inline void require_member(const GroupSpec& group, const Matrix& g, double factor, const char* what) {
  if (!g.allFinite()) throw NumericalError(std::string(what) + ": non-finite result");
  if (!group.contains(g, factor * group.membership_tol()))
    throw NumericalError(std::string(what) + ": result left the group " + group.name());
}

// Powers C^i are accumulated incrementally and re-anchored with a fresh
// exponential every kReanchor steps to bound round-off growth.
inline constexpr long kReanchor = 256;
inline constexpr int kMaxRichardsonOrder = 8;

}  // namespace detail

/// The n-term product
///   prod_{i=0}^{n-1} rho(i t/n, i u_1 t/n, ..., i u_m t/n)(exp(t/n W)),
/// W = Y + sum_j u_j Y_j, taken left to right in increasing i.
inline Matrix product_formula_terms(const AffineSystem& system, const Vector& u, double t, long n) {
  if (n < 1) throw InvalidInput("product formula needs n >= 1");
  const GroupSpec& group = *system.group();
  const auto fields = system.linear_fields();
  const double tau = t / static_cast<double>(n);
  const Matrix step = group.exp(tau * system.invariant_part(u));
  const Matrix gen = combined_generator(fields, tau * system.augmented(u));
  const bool inner = fields.front().kind() == LinearField::Kind::Inner;
  const Matrix c1 = expm(gen);
  const Matrix c1_inv = expm(-gen);

  const auto side = gen.rows();
  Matrix c = Matrix::Identity(side, side);
  Matrix c_inv = Matrix::Identity(side, side);
  Matrix acc = group.identity();
  for (long i = 0; i < n; ++i) {
    if (i > 0 && i % detail::kReanchor == 0) {
      c = expm(static_cast<double>(i) * gen);
      c_inv = expm(-static_cast<double>(i) * gen);
    }
    const Matrix term = inner ? conjugate(c, c_inv, step) : Matrix(c * step);
    acc = group.multiply(acc, term);
    c = c * c1;
    c_inv = c_inv * c1_inv;
  }
  return acc;
}

struct ProductFormulaResult {
  Matrix value;
  /// Largest n evaluated.
  long n = 0;
  /// Frobenius distance between the last two estimates.
  double delta = 0.0;
};

/// phi_t(e, u) as the limit of product_formula_terms under n-doubling.
///
/// Starting at n_initial, n doubles until two successive estimates differ by
/// at most convergence_tol. With extrapolate set, the estimates are the
/// diagonal of a Richardson table built on the doubling sequence (the product
/// has an asymptotic expansion in powers of 1/n); otherwise they are the raw
/// products.
inline ProductFormulaResult solve_product_formula_detailed(const AffineSystem& system, const Vector& u,
                                                           double t, const SolveOptions& opts = {}) {
  opts.check();
  system.require_control(u);
  detail::require_commuting(system, opts, "product formula");
  const GroupSpec& group = *system.group();
  if (t == 0.0) return {group.identity(), 0, 0.0};

  std::vector<std::vector<Matrix>> table;
  Matrix previous;
  long n = opts.n_initial;
  double delta = 0.0;
  for (int level = 0;; ++level) {
    std::vector<Matrix> row{product_formula_terms(system, u, t, n)};
    if (opts.extrapolate && level > 0) {
      const auto& above = table.back();
      const int order = std::min(level, detail::kMaxRichardsonOrder);
      for (int j = 1; j <= order; ++j) {
        const double factor = std::ldexp(1.0, j) - 1.0;
        const Matrix& coarse = above[static_cast<std::size_t>(j - 1)];
        row.push_back(row.back() + (row.back() - coarse) / factor);
      }
    }
    const Matrix estimate = row.back();
    if (!estimate.allFinite()) throw NumericalError("product formula: non-finite iterate");
    if (level > 0) {
      delta = frobenius_distance(estimate, previous);
      if (delta <= opts.convergence_tol) {
        detail::require_member(group, estimate, 10.0, "product formula");
        return {estimate, n, delta};
      }
    }
    if (n > opts.n_max / 2) {
      throw ConvergenceError("product formula did not converge by n = " + std::to_string(n), previous,
                             estimate, n, delta);
    }
    previous = estimate;
    table.push_back(std::move(row));
    n *= 2;
  }
}

inline Matrix solve_product_formula(const AffineSystem& system, const Vector& u, double t,
                                    const SolveOptions& opts = {}) {
  return solve_product_formula_detailed(system, u, t, opts).value;
}

/// Closed form for commuting inner fields:
///   exp(t(X + Y + sum_j u_j (X_j + Y_j))) exp(-t(X + sum_j u_j X_j)).
///
/// On R^n the analogous exact solution of x' = A_u x + W from 0 is used,
/// read off the exponential of the augmented matrix [[A_u, W], [0, 0]].
inline Matrix solve_closed_inner(const AffineSystem& system, const Vector& u, double t,
                                 double commutation_tol = 1e-10) {
  const auto report = validate(system, commutation_tol);
  if (!report.inner) throw ValidationError("closed form needs inner linear fields");
  if (!report.commuting) throw ValidationError("closed form needs commuting linear fields");
  const GroupSpec& group = *system.group();
  const Matrix x = system.linear_generator(u);
  const Matrix w = system.invariant_part(u);
  if (t == 0.0) return group.identity();
  Matrix out;
  if (group.abelian_rn()) {
    const Eigen::Index n = group.n();
    Matrix aug = Matrix::Zero(n + 1, n + 1);
    aug.topLeftCorner(n, n) = x;
    aug.topRightCorner(n, 1) = w;
    out = expm(t * aug).topRightCorner(n, 1);
  } else {
    out = expm(t * (x + w)) * expm(-t * x);
  }
  detail::require_member(group, out, 10.0, "closed form");
  return out;
}

/// Direct formulas for invariant and bilinear systems at an arbitrary point;
/// nullopt when the system is neither.
inline std::optional<Matrix> solve_special_case(const AffineSystem& system, const Matrix& g, const Vector& u,
                                                double t, double commutation_tol = 1e-10) {
  const GroupSpec& group = *system.group();
  if (system.all_linear_zero()) return group.multiply(group.exp(t * system.invariant_part(u)), g);
  if (system.all_invariant_zero()) {
    if (!validate(system, commutation_tol).commuting) return std::nullopt;
    const auto fields = system.linear_fields();
    return rho(fields, t * system.augmented(u), g);
  }
  return std::nullopt;
}

/// auto resolves to closed_inner for inner commuting systems, else product_formula.
inline Method resolve_method(const AffineSystem& system, const SolveOptions& opts) {
  if (opts.method != Method::automatic) return opts.method;
  const auto report = validate(system, opts.commutation_tol);
  return report.inner && report.commuting ? Method::closed_inner : Method::product_formula;
}

Trajectory solve_rk4(const AffineSystem& system, const Matrix& g, const ControlSignal& signal, double dt,
                     int samples_per_segment = 1);

/// phi_t(g, u) = phi_t(e, u) rho(t, u_1 t, ..., u_m t)(g) for a constant control.
inline Matrix solve_from_point(const AffineSystem& system, const Matrix& g, const Vector& u, double t,
                               const SolveOptions& opts = {}) {
  const GroupSpec& group = *system.group();
  group.require_shape(g, "solve_from_point");
  if (!group.contains(g, 10.0 * group.membership_tol()))
    throw ValidationError("solve_from_point: start point is not in " + group.name());
  system.require_control(u);
  if (t == 0.0) return g;

  const Method method = resolve_method(system, opts);
  Matrix out;
  switch (method) {
    case Method::rk4:
      if (t < 0.0) throw InvalidInput("rk4 integrates forward in time only");
      return solve_rk4(system, g, ControlSignal::constant(u, std::abs(t)), opts.rk4_dt).endpoint();
    case Method::special_case: {
      auto special = solve_special_case(system, g, u, t, opts.commutation_tol);
      if (!special) throw ValidationError("system is neither invariant nor commuting bilinear");
      out = std::move(*special);
      break;
    }
    case Method::closed_inner:
    case Method::product_formula:
    case Method::automatic: {
      const Matrix at_identity = method == Method::closed_inner
                                     ? solve_closed_inner(system, u, t, opts.commutation_tol)
                                     : solve_product_formula(system, u, t, opts);
      const auto fields = system.linear_fields();
      out = group.multiply(at_identity, rho(fields, t * system.augmented(u), g));
      break;
    }
  }
  detail::require_member(group, out, 10.0, "solve_from_point");
  return out;
}

/// Concatenates constant-control solutions segment by segment (cocycle
/// property). Each segment contributes samples_per_segment equally spaced
/// points ending at its right boundary; the start point is at t = 0.
inline Trajectory solve_piecewise(const AffineSystem& system, const Matrix& g, const ControlSignal& signal,
                                  const SolveOptions& opts = {}, int samples_per_segment = 1) {
  opts.check();
  if (samples_per_segment < 1) throw InvalidInput("samples_per_segment must be at least 1");
  signal.check_against(system);
  const Method method = resolve_method(system, opts);
  if (method == Method::rk4) return solve_rk4(system, g, signal, opts.rk4_dt, samples_per_segment);

  const GroupSpec& group = *system.group();
  group.require_shape(g, "solve_piecewise");
  Trajectory traj;
  traj.method = method;
  traj.signal = signal;
  traj.forced = method == Method::product_formula && !validate(system, opts.commutation_tol).commuting;
  traj.times.push_back(0.0);
  traj.points.push_back(g);
  SolveOptions seg_opts = opts;
  seg_opts.method = method;
  double t0 = 0.0;
  Matrix start = g;
  for (const auto& seg : signal.segments()) {
    for (int k = 1; k <= samples_per_segment; ++k) {
      const double local = seg.duration * k / samples_per_segment;
      traj.times.push_back(t0 + local);
      traj.points.push_back(solve_from_point(system, start, seg.u, local, seg_opts));
    }
    t0 += seg.duration;
    start = traj.points.back();
  }
  return traj;
}

/// Classical fixed-step RK4 on the system's vector field.
///
/// Inside each constant segment steps have length dt, the last one shortened
/// to land on the sample time. SO and SL points are projected back onto the
/// group after every step.
inline Trajectory solve_rk4(const AffineSystem& system, const Matrix& g, const ControlSignal& signal, double dt,
                            int samples_per_segment) {
  if (!(dt > 0)) throw InvalidInput("rk4 step must be positive");
  if (samples_per_segment < 1) throw InvalidInput("samples_per_segment must be at least 1");
  const GroupSpec& group = *system.group();
  group.require_shape(g, "solve_rk4");
  signal.check_against(system);

  Trajectory traj;
  traj.method = Method::rk4;
  traj.signal = signal;
  traj.times.push_back(0.0);
  traj.points.push_back(g);
  Matrix x = g;
  double t0 = 0.0;
  for (const auto& seg : signal.segments()) {
    const auto f = [&](const Matrix& p) { return vector_field_eval(system, p, seg.u); };
    double local = 0.0;
    for (int k = 1; k <= samples_per_segment; ++k) {
      const double target = seg.duration * k / samples_per_segment;
      while (local < target) {
        double h = dt;
        if (local + h >= target * (1.0 - 1e-14)) h = target - local;
        const Matrix k1 = f(x);
        const Matrix k2 = f(x + 0.5 * h * k1);
        const Matrix k3 = f(x + 0.5 * h * k2);
        const Matrix k4 = f(x + h * k3);
        x = group.project(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        if (!x.allFinite()) throw NumericalError("rk4 produced non-finite values");
        local = (h == target - local) ? target : local + h;
      }
      traj.times.push_back(t0 + target);
      traj.points.push_back(x);
    }
    t0 += seg.duration;
  }
  return traj;
}

}  // namespace affsys
