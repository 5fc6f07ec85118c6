#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lion/deq.hpp"
#include "lion/errors.hpp"
#include "lion/gradcheck.hpp"
#include "lion/linalg.hpp"
#include "lion/ops.hpp"
#include "oracles.hpp"

namespace lion::deq {
namespace {

using testing::random_tensor;

DeqCell scalar_cell(double w, double u, double b) {
  DeqCell c;
  c.W = Tensor::matrix({{w}});
  c.U = Tensor::matrix({{u}});
  c.b = Tensor::vector({b});
  c.kappa = 0.9;
  c.activation = Activation::identity;
  return c;
}

DeqCell random_cell(std::size_t h, std::size_t d, std::uint64_t seed, Activation act = Activation::tanh) {
  Rng rng = Rng(seed).split("cell");
  return make_cell(h, d, rng, 0.9, act);
}

TEST(CellForward, Examples) {
  DeqCell c = scalar_cell(0.0, 2.0, 1.0);
  const Tensor x = Tensor::vector({3.0});
  for (double z : {-4.0, 0.0, 9.0}) EXPECT_EQ(cell_forward(c, Tensor::vector({z}), x)[0], 7.0);

  const DeqCell s = scalar_cell(0.5, 1.0, 0.0);
  EXPECT_EQ(cell_forward(s, Tensor::vector({4.0}), Tensor::vector({1.0}))[0], 3.0);

  DeqCell t = random_cell(4, 3, 1);
  t.b = Tensor::zeros({4});
  EXPECT_EQ(cell_forward(t, Tensor::zeros({4}), Tensor::zeros({3})), Tensor::zeros({4}));
}

TEST(CellForward, ShapeErrors) {
  const DeqCell c = random_cell(4, 3, 2);
  EXPECT_THROW(cell_forward(c, Tensor::zeros({3}), Tensor::zeros({3})), DimensionError);
  EXPECT_THROW(cell_forward(c, Tensor::zeros({4}), Tensor::zeros({4})), DimensionError);
}

TEST(SpectralNormalize, DiagonalExample) {
  DeqCell c = scalar_cell(0.0, 1.0, 0.0);
  c.W = Tensor::matrix({{2, 0}, {0, 1}});
  c.U = Tensor::matrix({{1}, {1}});
  c.b = Tensor::zeros({2});
  const DeqCell n = spectral_normalize(c);
  EXPECT_NEAR(n.W(0, 0), 0.9, 1e-12);
  EXPECT_NEAR(n.W(1, 1), 0.45, 1e-12);
  EXPECT_EQ(n.W(0, 1), 0.0);
}

TEST(SpectralNormalize, SmallAndZeroWeightsUnchanged) {
  DeqCell c = random_cell(5, 3, 3);
  c.W = scale(c.W, 0.5 / testing::sigma_max(c.W));
  EXPECT_TRUE(bit_equal(spectral_normalize(c).W, c.W));
  c.W = Tensor::zeros({5, 5});
  EXPECT_TRUE(bit_equal(spectral_normalize(c).W, c.W));
  EXPECT_THROW(spectral_normalize(c, 5), ArgumentError);
}

TEST(SpectralNormalize, BoundHoldsAgainstSvdOracle) {
  Rng rng = Rng(4).split("sn");
  for (int trial = 0; trial < 30; ++trial) {
    DeqCell c = random_cell(8, 4, 100 + trial);
    c.W = random_tensor({8, 8}, rng, -3.0, 3.0);
    const DeqCell n = spectral_normalize(c);
    EXPECT_LE(linalg::spectral_norm(n.W, 1000).sigma_max, c.kappa + 1e-6);
    EXPECT_LE(testing::sigma_max(n.W), c.kappa + 1e-6);
    // Idempotent up to estimation error.
    EXPECT_LE(relative_error(spectral_normalize(n).W, n.W), 1e-9);
  }
}

TEST(Contraction, HoldsOnSeededPairs) {
  Rng rng = Rng(5).split("pairs");
  for (int pair = 0; pair < 50; ++pair) {
    const DeqCell c = random_cell(2 + rng.below(15), 2 + rng.below(15), 200 + pair);
    const Tensor x = random_tensor({c.input_dim()}, rng);
    const Tensor z1 = random_tensor({c.state_dim()}, rng, -3, 3), z2 = random_tensor({c.state_dim()}, rng, -3, 3);
    const double lhs = norm2(sub(cell_forward(c, z1, x), cell_forward(c, z2, x)));
    EXPECT_LE(lhs, c.kappa * norm2(sub(z1, z2)) * (1 + 1e-9)) << "pair " << pair;
  }
}

TEST(SolveForward, ScalarGeometricFixedPoint) {
  const DeqCell c = scalar_cell(0.5, 1.0, 0.0);
  for (int depth : {0, 5}) {
    SolverConfig cfg;
    cfg.tol = 1e-10;
    cfg.anderson_depth = depth;
    const SolveReport r = solve_forward(c, Tensor::vector({1.0}), cfg);
    ASSERT_TRUE(r.converged);
    EXPECT_NEAR(r.z_star[0], 2.0, 1e-9);
  }
}

TEST(SolveForward, IdentityActivationMatchesDenseSolve) {
  Rng rng = Rng(6).split("lin");
  for (int trial = 0; trial < 10; ++trial) {
    const DeqCell c = random_cell(7, 5, 300 + trial, Activation::identity);
    const Tensor x = random_tensor({5}, rng);
    SolverConfig cfg;
    cfg.tol = 1e-12;
    const SolveReport r = solve_forward(c, x, cfg);
    ASSERT_TRUE(r.converged);
    EXPECT_LE(relative_error(r.z_star, testing::from_eigen(testing::linear_fixed_point(c, x))), 1e-10);
  }
}

TEST(SolveForward, TanhConvergesAndMatchesLongRun) {
  Rng rng = Rng(7).split("tanh");
  for (int trial = 0; trial < 20; ++trial) {
    const DeqCell c = random_cell(2 + rng.below(15), 2 + rng.below(15), 400 + trial);
    const Tensor x = random_tensor({c.input_dim()}, rng);
    const SolveReport r = solve_forward(c, x, SolverConfig{});
    ASSERT_TRUE(r.converged);
    EXPECT_LE(r.residual, 1e-8);
    EXPECT_LE(norm2(sub(cell_forward(c, r.z_star, x), r.z_star)), 1e-8);
    SolverConfig slow;
    slow.anderson_depth = 0;
    slow.tol = 1e-14;
    slow.max_iters = 5000;
    const SolveReport ref = solve_forward(c, x, slow);
    // ||z - z*|| <= residual / (1 - kappa).
    EXPECT_LE(norm2(sub(r.z_star, ref.z_star)), 1e-8 / (1 - c.kappa) + 1e-12);
  }
}

TEST(SolveForward, ExhaustedBudgetReportsNotConverged) {
  const DeqCell c = random_cell(6, 4, 8);
  SolverConfig cfg;
  cfg.tol = 1e-30;
  cfg.max_iters = 20;
  const SolveReport r = solve_forward(c, Tensor::vector({1, 2, 3, 4}), cfg);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 20);
}

TEST(SolveForward, NonFiniteIterateThrows) {
  const FixedPointMap blowup = [](const Tensor& z) { return scale(add(z, Tensor::vector({1.0})), 1e200); };
  SolverConfig cfg;
  cfg.anderson_depth = 0;
  EXPECT_THROW(solve_fixed_point(blowup, Tensor::vector({1.0}), cfg), DivergenceError);
}

TEST(SolverConfig, Validation) {
  SolverConfig c;
  c.tol = 0.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = SolverConfig{};
  c.max_iters = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(SolveForward, UniqueFixedPointFromDifferentStarts) {
  Rng rng = Rng(9).split("starts");
  const DeqCell c = random_cell(10, 6, 9);
  const Tensor x = random_tensor({6}, rng);
  const SolverConfig cfg;
  const Tensor ref = solve_forward(c, x, cfg).z_star;
  for (int s = 0; s < 5; ++s) {
    const SolveReport r = solve_forward(c, x, cfg, random_tensor({10}, rng, -5.0, 5.0));
    ASSERT_TRUE(r.converged);
    EXPECT_LE(norm2(sub(r.z_star, ref)), 10 * cfg.tol);
  }
}

TEST(SolveAdjoint, ScalarAndZeroJacobian) {
  const DeqCell s = scalar_cell(0.5, 1.0, 0.0);
  const Tensor o = solve_adjoint(s, Tensor::vector({2.0}), Tensor::vector({1.0}), Tensor::vector({1.0}), SolverConfig{});
  EXPECT_NEAR(o[0], 2.0, 1e-8);

  DeqCell z = random_cell(4, 3, 10);
  z.W = Tensor::zeros({4, 4});
  const Tensor y = Tensor::vector({1, -2, 3, -4});
  const Tensor x = Tensor::vector({0.1, 0.2, 0.3});
  EXPECT_EQ(solve_adjoint(z, solve_forward(z, x, SolverConfig{}).z_star, x, y, SolverConfig{}), y);
}

TEST(SolveAdjoint, MatchesDenseSolve) {
  Rng rng = Rng(11).split("adj");
  for (Activation act : {Activation::identity, Activation::tanh}) {
    for (int trial = 0; trial < 5; ++trial) {
      const DeqCell c = random_cell(6, 4, 500 + trial, act);
      const Tensor x = random_tensor({4}, rng), y = random_tensor({6}, rng);
      SolverConfig cfg;
      cfg.tol = 1e-12;
      const Tensor zs = solve_forward(c, x, cfg).z_star;
      const Tensor o = solve_adjoint(c, zs, x, y, cfg);
      EXPECT_LE(relative_error(o, testing::from_eigen(testing::dense_adjoint(c, zs, x, y))), 1e-8);
    }
  }
}

TEST(SolveAdjoint, NonConvergenceThrowsWithResidual) {
  const DeqCell c = random_cell(6, 4, 12);
  const Tensor x = Tensor::vector({1, 2, 3, 4});
  const Tensor zs = solve_forward(c, x, SolverConfig{}).z_star;
  SolverConfig cfg;
  cfg.tol = 1e-30;
  cfg.max_iters = 5;
  try {
    solve_adjoint(c, zs, x, Tensor::vector({1, 1, 1, 1, 1, 1}), cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(DeqVjp, ScalarClosedForm) {
  // z* = u x / (1 - w), so dz*/dx = u / (1 - w).
  const DeqCell c = scalar_cell(0.5, 3.0, 0.0);
  const Tensor x = Tensor::vector({0.7});
  SolverConfig cfg;
  cfg.tol = 1e-13;
  const Tensor zs = solve_forward(c, x, cfg).z_star;
  EXPECT_NEAR(zs[0], 3.0 * 0.7 / 0.5, 1e-12);
  const VjpResult r = deq_vjp(c, zs, x, Tensor::vector({1.0}), cfg);
  EXPECT_NEAR(r.grad_x[0], 3.0 / 0.5, 1e-10);
}

TEST(DeqVjp, MatchesFiniteDifferencesAndUnrolledBackprop) {
  Rng rng = Rng(13).split("vjp");
  for (int trial = 0; trial < 6; ++trial) {
    const DeqCell c = random_cell(2 + rng.below(8), 2 + rng.below(8), 600 + trial);
    const Tensor x = random_tensor({c.input_dim()}, rng), y = random_tensor({c.state_dim()}, rng);
    const SolverConfig cfg;
    const Tensor zs = solve_forward(c, x, cfg).z_star;
    const Tensor implicit = gradcheck::flatten(deq_vjp(c, zs, x, y, cfg));
    SolverConfig tight;
    tight.tol = 1e-13;
    tight.max_iters = 2000;
    EXPECT_LE(relative_error(implicit, gradcheck::finite_difference_vjp(c, x, y, tight, 1e-5)), 1e-5);
    EXPECT_LE(relative_error(implicit, gradcheck::flatten(gradcheck::unrolled_vjp(c, x, y, 500))), 1e-5);
  }
}

TEST(Stack, VjpMatchesFiniteDifferences) {
  Rng rng = Rng(14).split("stack");
  std::vector<DeqCell> cells{random_cell(5, 5, 700), random_cell(5, 5, 701), random_cell(5, 5, 702)};
  const Tensor x = random_tensor({5}, rng), y = random_tensor({5}, rng);
  SolverConfig cfg;
  cfg.tol = 1e-13;
  cfg.max_iters = 2000;
  StackTrace trace;
  stack_forward(cells, x, cfg, &trace);
  ASSERT_EQ(trace.fixed_points.size(), 3u);
  std::vector<CellGrads> grads;
  for (const auto& c : cells) grads.push_back(CellGrads::zeros_like(c));
  const Tensor gx = stack_vjp(cells, trace, y, cfg, grads);
  const Tensor fd = finite_diff_grad([&](const Tensor& t) { return dot(y, stack_forward(cells, t, cfg)); }, x, 1e-5);
  EXPECT_LE(relative_error(gx, fd), 1e-6);
}

TEST(Anderson, BeatsPicardOnMostCases) {
  Rng rng = Rng(15).split("anderson");
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const DeqCell c = random_cell(2 + rng.below(15), 2 + rng.below(15), 800 + trial);
    const Tensor x = random_tensor({c.input_dim()}, rng);
    SolverConfig picard;
    picard.anderson_depth = 0;
    const SolveReport a = solve_forward(c, x, SolverConfig{});
    const SolveReport p = solve_forward(c, x, picard);
    ASSERT_TRUE(a.converged);
    if (a.iterations < p.iterations) ++wins;
  }
  EXPECT_GE(wins, 18);
}

}  // namespace
}  // namespace lion::deq
