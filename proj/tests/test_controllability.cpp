#include "affsys/controllability.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace affsys {
namespace {

using testing::diag;
using testing::mat;
using testing::vec;

// Inner drift X = Y = Lz / 2 with invariant controls Lx, Ly on SO(3).
AffineSystem so3_tracking_system() {
  auto so3 = GroupSpec::make(GroupKind::SO, 3);
  const Matrix z = Matrix::Zero(3, 3);
  return testing::make_system(so3, 0.5 * testing::lz(), 0.5 * testing::lz(),
                              {{z, testing::lx()}, {z, testing::ly()}});
}

AffineSystem so3_bilinear_system() {
  auto so3 = GroupSpec::make(GroupKind::SO, 3);
  const Matrix z = Matrix::Zero(3, 3);
  return testing::make_system(so3, 0.5 * testing::lz(), z, {{0.3 * testing::lz(), z}});
}

SamplerConfig sampler(int k, int n, unsigned threads = 1) {
  SamplerConfig c;
  c.k_segments = k;
  c.n_samples = n;
  c.threads = threads;
  return c;
}

TEST(AssociatedInvariantSystem, AlreadyInvariant) {
  const auto sys = testing::catalog()[3].system;
  const auto inv = associated_invariant_system(sys);
  EXPECT_EQ(inv.drift, sys.drift_invariant());
  ASSERT_EQ(inv.controlled.size(), 2u);
  EXPECT_EQ(inv.controlled[1], sys.controlled()[1].invariant);
}

TEST(AssociatedInvariantSystem, AddsInnerGenerator) {
  auto gl2 = GroupSpec::make(GroupKind::GLplus, 2);
  const AffineSystem sys(gl2, LinearField::inner(gl2, diag({1, -1})), mat({{0, 1}, {0, 0}}));
  EXPECT_EQ(associated_invariant_system(sys).drift, mat({{1, 1}, {0, -1}}));
}

TEST(AssociatedInvariantSystem, RejectsLinearMapsOnRn) {
  EXPECT_THROW(associated_invariant_system(testing::catalog().back().system), ValidationError);
  auto r2 = GroupSpec::make(GroupKind::AbelianRn, 2);
  const AffineSystem invariant_only(r2, LinearField::zero(r2), mat({{1}, {2}}));
  EXPECT_EQ(associated_invariant_system(invariant_only).drift, mat({{1}, {2}}));
}

TEST(AffineInvariantRelation, Examples) {
  auto gl2 = GroupSpec::make(GroupKind::GLplus, 2);
  const AffineSystem uncontrolled(gl2, LinearField::inner(gl2, diag({0.3, -0.2})), mat({{0.1, 0.4}, {0.2, 0}}),
                                  {{LinearField::zero(gl2), Matrix::Zero(2, 2)}});
  EXPECT_TRUE(verify_affine_invariant_relation(uncontrolled, vec({0}), 0.8, 1e-8));
  EXPECT_TRUE(verify_affine_invariant_relation(so3_bilinear_system(), vec({0.4}), 1.3, 1e-8));
  EXPECT_TRUE(verify_affine_invariant_relation(testing::catalog().front().system, vec({0.7}), 0.9, 1e-8));
}

TEST(AffineInvariantRelation, FalseWhenPreconditionsFail) {
  auto sl2 = GroupSpec::make(GroupKind::SL, 2);
  const AffineSystem non_commuting(sl2, LinearField::inner(sl2, testing::sl_e()), Matrix::Zero(2, 2),
                                   {{LinearField::inner(sl2, testing::sl_f()), Matrix::Zero(2, 2)}});
  EXPECT_FALSE(verify_affine_invariant_relation(non_commuting, vec({0.5}), 0.5, 1e-8));
  EXPECT_FALSE(verify_affine_invariant_relation(testing::catalog().back().system, vec({0.5}), 0.5, 1e-8));
}

TEST(AffineInvariantRelation, HoldsAcrossCatalog) {
  Rng rng(83);
  for (const auto& entry : testing::catalog()) {
    if (!entry.inner_generators) continue;
    for (int trial = 0; trial < 20; ++trial) {
      const Vector u = testing::random_control(entry.system, rng);
      const double t = testing::uniform(rng, -1.0, 1.0);
      EXPECT_TRUE(verify_affine_invariant_relation(entry.system, u, t, 1e-8, rng())) << entry.name;
    }
  }
}

TEST(LarcRank, Examples) {
  auto so3 = GroupSpec::make(GroupKind::SO, 3);
  EXPECT_EQ(larc_rank({so3, testing::lx(), {testing::ly()}}), 3);
  auto r3 = GroupSpec::make(GroupKind::AbelianRn, 3);
  EXPECT_EQ(larc_rank({r3, mat({{1}, {0}, {2}}), {}}), 1);
  auto heis = GroupSpec::make(GroupKind::Heisenberg3, 3);
  EXPECT_EQ(larc_rank({heis, elementary(3, 1, 2), {elementary(3, 2, 3)}}), 3);
  EXPECT_EQ(larc_rank({so3, Matrix::Zero(3, 3), {}}), 0);
  auto sl2 = GroupSpec::make(GroupKind::SL, 2);
  EXPECT_EQ(larc_rank({sl2, testing::sl_h(), {2 * testing::sl_h()}}), 1);
  EXPECT_EQ(larc_rank({sl2, testing::sl_e(), {testing::sl_f()}}), 3);
}

TEST(LarcRank, MonotoneIdempotentBounded) {
  Rng rng(89);
  for (auto kind : {GroupKind::GLplus, GroupKind::SL, GroupKind::SO, GroupKind::Heisenberg3}) {
    auto group = GroupSpec::make(kind, 3);
    for (int trial = 0; trial < 10; ++trial) {
      // Mix random generators with ones from a small subalgebra.
      InvariantSystem inv{group, group->random_algebra(rng), {}};
      if (trial % 2 == 0) inv.drift = group->algebra_basis().front();
      const int base = larc_rank(inv);
      EXPECT_LE(base, group->dim());

      InvariantSystem bigger = inv;
      bigger.controlled.push_back(trial % 3 == 0 ? group->algebra_basis().back() : group->random_algebra(rng));
      const int grown = larc_rank(bigger);
      EXPECT_GE(grown, base);
      EXPECT_LE(grown, group->dim());

      auto closure = larc_closure(bigger);
      InvariantSystem again{group, closure.front(), {closure.begin() + 1, closure.end()}};
      EXPECT_EQ(larc_rank(again), grown);

      std::shuffle(bigger.controlled.begin(), bigger.controlled.end(), rng);
      std::swap(bigger.drift, bigger.controlled.front());
      EXPECT_EQ(larc_rank(bigger), grown);
    }
  }
}

TEST(SampleReachable, EmptyAndZeroSystems) {
  const auto sys = testing::catalog().front().system;
  const auto empty = sample_reachable(sys, Matrix::Identity(2, 2), 1.0, sampler(3, 0), 1);
  EXPECT_TRUE(empty.points.empty());

  auto gl2 = GroupSpec::make(GroupKind::GLplus, 2);
  const AffineSystem zero(gl2, LinearField::zero(gl2), Matrix::Zero(2, 2),
                          {{LinearField::zero(gl2), Matrix::Zero(2, 2)}}, ControlBox{});
  const Matrix g = mat({{2, 1}, {0, 1}});
  const auto cloud = sample_reachable(zero, g, 1.0, sampler(3, 20), 1);
  for (const auto& p : cloud.points) EXPECT_EQ(p, g);
}

TEST(SampleReachable, So3InvariantCloudIsOrthogonalAndSpread) {
  const auto sys = testing::catalog()[3].system;
  const auto cloud = sample_reachable(sys, Matrix::Identity(3, 3), 2.0, sampler(4, 500), 31);
  ASSERT_EQ(cloud.points.size(), 500u);
  double min_spread = INFINITY;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Matrix& p = cloud.points[i];
    EXPECT_LE((p.transpose() * p - Matrix::Identity(3, 3)).norm(), 1e-10);
    EXPECT_NEAR(p.determinant(), 1.0, 1e-10);
    for (std::size_t j = 0; j < i; ++j) min_spread = std::min(min_spread, frobenius_distance(p, cloud.points[j]));
  }
  EXPECT_GT(min_spread, 0.0);
}

TEST(SampleReachable, RequiresBoundedControls) {
  auto gl2 = GroupSpec::make(GroupKind::GLplus, 2);
  const AffineSystem unbounded(gl2, LinearField::zero(gl2), Matrix::Zero(2, 2),
                               {{LinearField::zero(gl2), testing::sl_e()}});
  EXPECT_THROW(sample_reachable(unbounded, Matrix::Identity(2, 2), 1.0, sampler(2, 5), 1), InvalidInput);
}

TEST(SampleReachable, DeterministicAcrossRunsAndThreads) {
  for (const auto& entry : testing::catalog()) {
    const auto& sys = entry.system;
    const Matrix g = sys.group()->identity();
    const auto a = sample_reachable(sys, g, 1.0, sampler(3, 40, 1), 77);
    const auto b = sample_reachable(sys, g, 1.0, sampler(3, 40, 1), 77);
    const auto c = sample_reachable(sys, g, 1.0, sampler(3, 40, 4), 77);
    const auto other = sample_reachable(sys, g, 1.0, sampler(3, 40, 1), 78);
    bool differs = false;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      for (std::size_t s = 0; s < a.signals[i].segments().size(); ++s) {
        EXPECT_EQ(a.signals[i].segments()[s].u, b.signals[i].segments()[s].u);
        EXPECT_EQ(a.signals[i].segments()[s].u, c.signals[i].segments()[s].u);
      }
      EXPECT_LE(frobenius_distance(a.points[i], b.points[i]), 1e-12) << entry.name;
      EXPECT_LE(frobenius_distance(a.points[i], c.points[i]), 1e-12) << entry.name;
      differs = differs || frobenius_distance(a.points[i], other.points[i]) > 1e-9;
      EXPECT_TRUE(sys.group()->contains(a.points[i], 10 * sys.group()->membership_tol())) << entry.name;
    }
    EXPECT_TRUE(differs) << entry.name;
  }
}

TEST(CheckExpInReachable, TimeZeroTargetsIdentity) {
  const auto sys = so3_bilinear_system();
  const auto cloud = sample_reachable(sys, Matrix::Identity(3, 3), 1.0, sampler(2, 10), 5);
  const auto d = check_exp_in_reachable(sys, vec({0.5}), 0.0, cloud, 1e-9);
  EXPECT_TRUE(d.hit);
  EXPECT_LE(d.distance, 1e-12);
}

TEST(CheckExpInReachable, BilinearCloudMisses) {
  const auto sys = so3_bilinear_system();
  const auto cloud = sample_reachable(sys, Matrix::Identity(3, 3), 1.0, sampler(2, 50), 5);
  for (const auto& p : cloud.points) EXPECT_LE(frobenius_distance(p, Matrix::Identity(3, 3)), 1e-12);
  const auto d = check_exp_in_reachable(sys, vec({1.0}), 1.0, cloud, 0.05);
  EXPECT_FALSE(d.hit);
  EXPECT_GT(d.distance, 0.5);
}

TEST(CheckExpInReachable, ControllableSystemHits) {
  const auto sys = so3_tracking_system();
  const auto cloud = sample_reachable(sys, Matrix::Identity(3, 3), 1.0, sampler(4, 2000), 2024);
  const auto d = check_exp_in_reachable(sys, vec({0, 0}), 1.0, cloud, 0.05);
  EXPECT_TRUE(d.hit);
  // Pinned on first run for this seed.
  EXPECT_NEAR(d.distance, 0.024001660443460925, 1e-9);
}

TEST(CheckExpInReachable, Errors) {
  const auto sys = so3_tracking_system();
  ReachSample empty{sys.group(), Matrix::Identity(3, 3), 1.0, 0, {}, {}, {}};
  EXPECT_THROW(check_exp_in_reachable(sys, vec({0, 0}), 1.0, empty, 0.05), InvalidInput);
  const auto rn = testing::catalog().back().system;
  const auto cloud = sample_reachable(rn, rn.group()->identity(), 1.0, sampler(1, 3), 1);
  EXPECT_THROW(check_exp_in_reachable(rn, vec({0}), 1.0, cloud, 0.05), ValidationError);
}

TEST(CheckIdentityInterior, TrivialCloud) {
  auto so3 = GroupSpec::make(GroupKind::SO, 3);
  ReachSample cloud{so3, so3->identity(), 1.0, 0, {}, {so3->identity()}, {}};
  EXPECT_EQ(check_identity_interior(cloud, 0.1, 64), 0.0);
  cloud.points.clear();
  EXPECT_THROW(check_identity_interior(cloud, 0.1, 64), InvalidInput);
}

TEST(CheckIdentityInterior, DenseBallCovers) {
  auto so3 = GroupSpec::make(GroupKind::SO, 3);
  ReachSample cloud{so3, so3->identity(), 1.0, 0, {}, {}, {}};
  for (int a = -8; a <= 8; ++a)
    for (int b = -8; b <= 8; ++b)
      for (int c = -8; c <= 8; ++c) cloud.points.push_back(so3->exp(so3->from_coordinates(0.01 * Eigen::Vector3d(a, b, c))));
  EXPECT_EQ(check_identity_interior(cloud, 0.1, 64, 3), 1.0);
}

TEST(CheckIdentityInterior, RequiresIdentityBase) {
  const auto sys = testing::catalog()[3].system;
  const auto cloud = sample_reachable(sys, expm(testing::lx()), 0.2, sampler(2, 5), 1);
  EXPECT_THROW(check_identity_interior(cloud, 0.1, 8), ValidationError);
}

TEST(CheckIdentityInterior, So3InvariantRegression) {
  const auto sys = testing::catalog()[3].system;
  const auto cloud = sample_reachable(sys, Matrix::Identity(3, 3), 0.2, sampler(4, 2000), 2024);
  // Pinned on first run for this seed.
  EXPECT_DOUBLE_EQ(check_identity_interior(cloud, 0.1, 64, 7), 0.21875);
}

}  // namespace
}  // namespace affsys
