#pragma once

// Controllability diagnostics: the associated right-invariant system, the
// Lie algebra rank condition and sampled reachable sets.
//
// The reachability checks are one-sided. A hit is evidence for the
// corresponding hypothesis; a miss says nothing, since the cloud is finite.

#include "affsys/solvers.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

namespace affsys {

/// dg/dt = (X + Y)(g) + sum_j u_j (X_j + Y_j)(g), all right-invariant.
struct InvariantSystem {
  GroupRef group;
  Matrix drift;
  std::vector<Matrix> controlled;
};

namespace detail {

inline void require_inner_for_invariant(const AffineSystem& system, const char* what) {
  if (!validate(system).inner) throw ValidationError(std::string(what) + ": system is not inner");
  if (system.group()->abelian_rn() && !system.all_linear_zero())
    throw ValidationError(std::string(what) + ": nonzero linear maps on R^n are never inner");
}

}  // namespace detail

inline InvariantSystem associated_invariant_system(const AffineSystem& system) {
  detail::require_inner_for_invariant(system, "associated_invariant_system");
  InvariantSystem inv{system.group(), system.drift_invariant(), {}};
  // On R^n the linear part is zero here, and an n x n generator has no place in the algebra.
  const bool add_linear = !system.group()->abelian_rn();
  if (add_linear) inv.drift += system.drift_linear().generator();
  for (const auto& c : system.controlled())
    inv.controlled.push_back(add_linear ? Matrix(c.linear.generator() + c.invariant) : c.invariant);
  return inv;
}

/// Checks phi^A_t(g, u) = phi^I_t(g, u) exp(-t X_u) at e and three random g.
/// The affine side comes from the product formula, the invariant side from
/// exp(t(X_u + W)) g.
inline bool verify_affine_invariant_relation(const AffineSystem& system, const Vector& u, double t, double tol,
                                             std::uint64_t seed = 0) {
  try {
    detail::require_inner_for_invariant(system, "verify_affine_invariant_relation");
    if (!validate(system).commuting) return false;
    const GroupSpec& group = *system.group();
    const InvariantSystem inv = associated_invariant_system(system);
    Matrix z = inv.drift;
    for (std::size_t j = 0; j < inv.controlled.size(); ++j)
      z += u(static_cast<Eigen::Index>(j)) * inv.controlled[j];
    const Matrix invariant_step = group.exp(t * z);
    const Matrix correction = group.abelian_rn() ? group.identity() : expm(-t * system.linear_generator(u));

    Rng rng(seed);
    std::vector<Matrix> points{group.identity()};
    for (int k = 0; k < 3; ++k) points.push_back(group.random_element(rng, 0.8));
    SolveOptions opts;
    opts.method = Method::product_formula;
    for (const auto& g : points) {
      const Matrix affine = solve_from_point(system, g, u, t, opts);
      const Matrix invariant = group.multiply(group.multiply(invariant_step, g), correction);
      if (!(frobenius_distance(affine, invariant) <= tol)) return false;
    }
    return true;
  } catch (const Error&) {
    return false;
  }
}

/// Basis of the smallest bracket-closed subspace containing the generators.
inline std::vector<Matrix> larc_closure(const InvariantSystem& inv, double tol = 1e-9) {
  const GroupSpec& group = *inv.group;
  std::vector<Matrix> generators{inv.drift};
  generators.insert(generators.end(), inv.controlled.begin(), inv.controlled.end());

  std::vector<Matrix> basis;
  auto try_add = [&](const Matrix& v) {
    const double norm = v.norm();
    if (!(norm > tol)) return false;
    basis.push_back(v / norm);
    if (span_rank(basis, tol) == static_cast<int>(basis.size())) return true;
    basis.pop_back();
    return false;
  };

  std::vector<Matrix> frontier;
  for (const auto& g : generators)
    if (try_add(g)) frontier.push_back(basis.back());
  while (!frontier.empty() && static_cast<int>(basis.size()) < group.dim()) {
    std::vector<Matrix> next;
    for (const auto& g : generators)
      for (const auto& f : frontier)
        if (try_add(group.lie_bracket(g, f))) next.push_back(basis.back());
    frontier = std::move(next);
  }
  return basis;
}

inline int larc_rank(const InvariantSystem& inv, double tol = 1e-9) {
  return static_cast<int>(larc_closure(inv, tol).size());
}

struct SamplerConfig {
  int k_segments = 4;
  int n_samples = 0;
  SolveOptions solve;
  unsigned threads = 1;
};

/// Endpoints of random piecewise-constant controls from a common base point.
struct ReachSample {
  GroupRef group;
  Matrix base;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  SamplerConfig config;
  std::vector<Matrix> points;
  std::vector<ControlSignal> signals;
};

/// The control signal of sample `index`, drawn from its own seed sequence
/// so the result does not depend on evaluation order.
inline ControlSignal reach_signal(const AffineSystem& system, double horizon, int k_segments, std::uint64_t seed,
                                  std::uint64_t index) {
  if (!system.control_set()) throw InvalidInput("sampling needs a bounded control set");
  const ControlBox box = *system.control_set();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  Rng rng(seq);
  std::uniform_real_distribution<double> draw(box.lo, box.hi);
  std::vector<Segment> segs;
  for (int k = 0; k < k_segments; ++k) {
    Vector u(static_cast<Eigen::Index>(system.m()));
    for (Eigen::Index j = 0; j < u.size(); ++j) u(j) = draw(rng);
    segs.push_back({horizon / k_segments, std::move(u)});
  }
  return ControlSignal(std::move(segs));
}

inline ReachSample sample_reachable(const AffineSystem& system, const Matrix& g, double horizon,
                                    const SamplerConfig& config, std::uint64_t seed) {
  if (!system.control_set()) throw InvalidInput("sampling needs a bounded control set");
  const ControlBox box = *system.control_set();
  if (!std::isfinite(box.lo) || !std::isfinite(box.hi) || !(box.lo <= box.hi))
    throw InvalidInput("sampling needs a bounded control set");
  if (!(horizon > 0) || !std::isfinite(horizon)) throw InvalidInput("horizon must be positive");
  if (config.k_segments < 1) throw InvalidInput("k_segments must be at least 1");
  if (config.n_samples < 0) throw InvalidInput("n_samples must be nonnegative");
  const GroupSpec& group = *system.group();
  group.require_shape(g, "sample_reachable");
  if (!group.contains(g, 10.0 * group.membership_tol()))
    throw ValidationError("sample_reachable: base point is not in " + group.name());

  ReachSample out{system.group(), g, horizon, seed, config, {}, {}};
  const auto count = static_cast<std::size_t>(config.n_samples);
  out.points.resize(count);
  out.signals.resize(count);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        out.signals[i] = reach_signal(system, horizon, config.k_segments, seed, i);
        out.points[i] = solve_piecewise(system, g, out.signals[i], config.solve).endpoint();
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
        return;
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

struct HitDiagnostic {
  bool hit = false;
  double distance = std::numeric_limits<double>::infinity();
};

inline double cloud_distance(const ReachSample& cloud, const Matrix& target) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : cloud.points) best = std::min(best, frobenius_distance(p, target));
  return best;
}

/// Whether exp(t X_u) lies within eps of the cloud.
inline HitDiagnostic check_exp_in_reachable(const AffineSystem& system, const Vector& u, double t,
                                            const ReachSample& cloud, double eps) {
  detail::require_inner_for_invariant(system, "check_exp_in_reachable");
  if (cloud.points.empty()) throw InvalidInput("check_exp_in_reachable: empty cloud");
  system.require_control(u);
  const GroupSpec& group = *system.group();
  const Matrix target = group.abelian_rn() ? group.identity() : expm(t * system.linear_generator(u));
  HitDiagnostic d;
  d.distance = cloud_distance(cloud, target);
  d.hit = d.distance <= eps;
  return d;
}

/// Fraction of random unit directions d for which some cloud point lies
/// within eps of exp(radius d). eps defaults to radius / 4.
inline double check_identity_interior(const ReachSample& cloud, double radius, int directions,
                                      std::uint64_t seed = 0, double eps = -1.0) {
  if (cloud.points.empty()) throw InvalidInput("check_identity_interior: empty cloud");
  if (!(radius > 0)) throw InvalidInput("radius must be positive");
  if (directions < 1) throw InvalidInput("directions must be at least 1");
  const GroupSpec& group = *cloud.group;
  if (frobenius_distance(cloud.base, group.identity()) > group.membership_tol())
    throw ValidationError("check_identity_interior: cloud is not based at the identity");
  if (eps < 0) eps = 0.25 * radius;
  Rng rng(seed);
  int covered = 0;
  for (int k = 0; k < directions; ++k) {
    const Matrix target = group.exp(group.random_algebra(rng, radius));
    if (cloud_distance(cloud, target) <= eps) ++covered;
  }
  return static_cast<double>(covered) / directions;
}

}  // namespace affsys
