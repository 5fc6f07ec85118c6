#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lion/ops.hpp"
#include "lion/rng.hpp"
#include "lion/tensor.hpp"

namespace lion::deq {

using lion::Activation;

/// One equilibrium prompt block: z* = act(W z* + U x + b).
///
/// W is stored already rescaled (the "effective" state weight): callers keep
/// the contraction by re-running spectral_normalize after every update.
struct DeqCell {
  Tensor W;  // [h x h]
  Tensor U;  // [h x d]
  Tensor b;  // [h]
  double kappa = 0.9;
  Activation activation = Activation::tanh;

  std::size_t state_dim() const noexcept { return W.rows(); }
  std::size_t input_dim() const noexcept { return U.cols(); }
  /// Throws DimensionError / ArgumentError on inconsistent fields.
  void validate() const;
};

/// Uniform(+-1/sqrt(fan_in)) initialization, spectrally normalized.
DeqCell make_cell(std::size_t state_dim, std::size_t input_dim, Rng& rng, double kappa = 0.9,
                  Activation activation = Activation::tanh);

struct SolverConfig {
  double tol = 1e-8;
  int max_iters = 500;
  int anderson_depth = 5;  // 0 = plain Picard
  double damping = 1.0;

  void validate() const;
};

struct SolveReport {
  Tensor z_star;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

using FixedPointMap = std::function<Tensor(const Tensor&)>;

/// Iterates z <- map(z) (Picard with damping, or Anderson over the last
/// `anderson_depth` residuals) until ||map(z) - z|| <= tol. The reported
/// residual is measured at the returned z_star. Exhausting max_iters yields
/// converged=false; a non-finite iterate throws DivergenceError.
SolveReport solve_fixed_point(const FixedPointMap& map, Tensor z0, const SolverConfig& cfg);

/// act(W z + U x + b).
Tensor cell_forward(const DeqCell& cell, const Tensor& z, const Tensor& x);

/// Replaces W by W * min(1, kappa / sigma_max(W)) with sigma_max from power
/// iteration (at most `power_iters` sweeps, at least 10 required). A zero W
/// is returned unchanged.
DeqCell spectral_normalize(DeqCell cell, int power_iters = 200);

/// Forward equilibrium solve from z0 (zeros when absent).
SolveReport solve_forward(const DeqCell& cell, const Tensor& x, const SolverConfig& cfg,
                          const std::optional<Tensor>& z0 = std::nullopt);

/// Solves o = J^T o + y with J = d cell_forward / dz at (z_star, x).
/// Throws DivergenceError carrying the residual when the solve fails.
Tensor solve_adjoint(const DeqCell& cell, const Tensor& z_star, const Tensor& x, const Tensor& y,
                     const SolverConfig& cfg);

struct CellGrads {
  Tensor W;
  Tensor U;
  Tensor b;

  static CellGrads zeros_like(const DeqCell& cell);
  void accumulate(const CellGrads& other);
};

struct VjpResult {
  Tensor grad_x;
  CellGrads grad_params;
};

/// Vector-Jacobian product of the fixed point z*(x, W, U, b) against y:
/// one backward pass of the cell body seeded with the adjoint solution.
VjpResult deq_vjp(const DeqCell& cell, const Tensor& z_star, const Tensor& x, const Tensor& y,
                  const SolverConfig& cfg);

/// Per-cell record kept by stack_forward for the backward pass.
struct StackTrace {
  std::vector<Tensor> inputs;
  std::vector<Tensor> fixed_points;
  int total_iterations = 0;
};

/// Composes cells sequentially (cell k consumes the fixed point of k-1).
/// Throws DivergenceError if any solve fails to converge.
Tensor stack_forward(std::span<const DeqCell> cells, const Tensor& x, const SolverConfig& cfg,
                     StackTrace* trace = nullptr);

/// Backward through a stack; accumulates parameter grads into `grads` (one
/// per cell) and returns the cotangent of the stack input.
Tensor stack_vjp(std::span<const DeqCell> cells, const StackTrace& trace, const Tensor& y,
                 const SolverConfig& cfg, std::span<CellGrads> grads);

}  // namespace lion::deq
