#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lion/deq.hpp"

namespace lion::gradcheck {

/// Reverse-mode gradient of y . z_T where z_{t+1} = cell(z_t, x), z_0 = 0,
/// differentiated through all `iters` Picard steps.
deq::VjpResult unrolled_vjp(const deq::DeqCell& cell, const Tensor& x, const Tensor& y, int iters);

/// Central-difference gradient of y . z*(x, W, U, b), flattened as
/// [x, W, U, b]. Each perturbed point is solved with `cfg`.
Tensor finite_difference_vjp(const deq::DeqCell& cell, const Tensor& x, const Tensor& y,
                             const deq::SolverConfig& cfg, double step);

/// [grad_x, W, U, b] as one flat vector.
Tensor flatten(const deq::VjpResult& r);

struct Options {
  int cases = 20;
  std::uint64_t seed = 0;
  double kappa = 0.9;
  std::size_t max_dim = 16;
  deq::SolverConfig solver{};  // for the implicit solve under test
  double fd_step = 1e-5;
  int unroll_iters = 500;
  double fd_tol = 1e-4;
  double unrolled_tol = 1e-5;
};

struct CaseResult {
  int index = 0;
  std::size_t state_dim = 0;
  std::size_t input_dim = 0;
  bool solver_converged = false;
  int forward_iterations = 0;
  double forward_residual = 0.0;
  double fd_rel_error = 0.0;
  double unrolled_rel_error = 0.0;
  std::string solver_message;  // set when the implicit solve failed

  bool gradients_ok(const Options& o) const noexcept {
    return solver_converged && fd_rel_error <= o.fd_tol && unrolled_rel_error <= o.unrolled_tol;
  }
};

struct Summary {
  std::vector<CaseResult> cases;
  int solver_failures = 0;
  int gradient_failures = 0;
  int worst_case = -1;  // largest unrolled (or FD) error among converged cases

  bool passed() const noexcept { return solver_failures == 0 && gradient_failures == 0; }
};

/// Seeded tanh cells with state/input dims in [2, max_dim]; for each, the
/// implicit gradient is compared with finite differences and unrolled
/// backprop. A failed implicit solve is recorded as a solver failure and
/// skips the gradient comparison for that case.
Summary run(const Options& opts);

}  // namespace lion::gradcheck
