#include "lion/deq.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "lion/errors.hpp"
#include "lion/linalg.hpp"
#include "lion/ops.hpp"

namespace lion::deq {

namespace {

constexpr double kBlowUp = 1e150;

/// U x + b
Tensor injection(const DeqCell& cell, const Tensor& x) {
  if (x.rank() != 1 || x.size() != cell.input_dim()) {
    throw DimensionError("DEQ input " + x.shape_string() + " does not match U " + cell.U.shape_string());
  }
  return add(matvec(cell.U, x), cell.b);
}

Tensor preactivation(const DeqCell& cell, const Tensor& z, const Tensor& x) {
  if (z.rank() != 1 || z.size() != cell.state_dim()) {
    throw DimensionError("DEQ state " + z.shape_string() + " does not match W " + cell.W.shape_string());
  }
  return add(matvec(cell.W, z), injection(cell, x));
}

bool all_finite(const Tensor& t, double bound) {
  for (double v : t.data()) {
    if (!std::isfinite(v) || std::abs(v) > bound) return false;
  }
  return true;
}

}  // namespace

void DeqCell::validate() const {
  if (W.rank() != 2 || W.rows() != W.cols()) throw DimensionError("DEQ W must be square, got " + W.shape_string());
  if (U.rank() != 2 || U.rows() != W.rows()) {
    throw DimensionError("DEQ U " + U.shape_string() + " does not match W " + W.shape_string());
  }
  if (b.rank() != 1 || b.size() != W.rows()) {
    throw DimensionError("DEQ b " + b.shape_string() + " does not match W " + W.shape_string());
  }
  if (!(kappa > 0.0 && kappa < 1.0)) throw ArgumentError("DEQ kappa must lie in (0,1)");
}

DeqCell make_cell(std::size_t state_dim, std::size_t input_dim, Rng& rng, double kappa,
                  Activation activation) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(state_dim + input_dim));
  auto fill = [&](Tensor t) {
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
  };
  DeqCell cell{fill(Tensor({state_dim, state_dim})), fill(Tensor({state_dim, input_dim})),
               fill(Tensor({state_dim})), kappa, activation};
  cell.validate();
  return spectral_normalize(std::move(cell));
}

void SolverConfig::validate() const {
  if (!(tol > 0.0)) throw ArgumentError("solver tol must be positive");
  if (max_iters < 1) throw ArgumentError("solver max_iters must be >= 1");
  if (anderson_depth < 0) throw ArgumentError("solver anderson_depth must be >= 0");
  if (!(damping > 0.0 && damping <= 1.0)) throw ArgumentError("solver damping must lie in (0,1]");
}

SolveReport solve_fixed_point(const FixedPointMap& map, Tensor z0, const SolverConfig& cfg) {
  cfg.validate();
  if (!z0.is_finite()) throw ArgumentError("fixed-point start must be finite");
  const std::size_t n = z0.size();
  const auto depth = static_cast<std::size_t>(cfg.anderson_depth);
  const double beta = cfg.damping;

  Tensor z = std::move(z0);
  std::deque<Tensor> xs;  // recent iterates
  std::deque<Tensor> gs;  // their residuals map(x) - x
  double residual = 0.0;
  double best = std::numeric_limits<double>::infinity();

  for (int k = 0;; ++k) {
    const Tensor fz = map(z);
    if (!all_finite(fz, kBlowUp)) {
      throw DivergenceError("fixed-point map produced a non-finite value at iteration " + std::to_string(k),
                            residual, k);
    }
    Tensor g = fz;
    for (std::size_t i = 0; i < n; ++i) g[i] -= z[i];
    residual = norm2(g);
    if (residual <= cfg.tol) return {std::move(z), k, residual, true};
    if (k == cfg.max_iters) return {std::move(z), k, residual, false};
    // Anderson can stall or overshoot once its history turns ill-conditioned;
    // a sharp residual rise restarts it from a plain step.
    if (residual > 10.0 * best) {
      xs.clear();
      gs.clear();
    }
    best = std::min(best, residual);

    Tensor next = z;
    if (depth == 0) {
      for (std::size_t i = 0; i < n; ++i) next[i] += beta * g[i];
    } else {
      xs.push_back(z);
      gs.push_back(g);
      if (xs.size() > depth + 1) {
        xs.pop_front();
        gs.pop_front();
      }
      const std::size_t m = xs.size() - 1;
      if (m == 0) {
        for (std::size_t i = 0; i < n; ++i) next[i] += beta * g[i];
      } else {
        // gamma = argmin || g - dG gamma ||, columns are successive differences
        Tensor dg({n, m});
        Tensor dx({n, m});
        for (std::size_t j = 0; j < m; ++j) {
          for (std::size_t i = 0; i < n; ++i) {
            dg(i, j) = gs[j + 1][i] - gs[j][i];
            dx(i, j) = xs[j + 1][i] - xs[j][i];
          }
        }
        Tensor gamma = n >= m ? linalg::lstsq(dg, g, 1e-10) : Tensor({m});
        double gmax = 0.0;
        for (double v : gamma.data()) gmax = std::max(gmax, std::abs(v));
        if (gmax > 1e4) {
          gamma = Tensor({m});
          xs.clear();
          gs.clear();
          xs.push_back(z);
          gs.push_back(g);
        }
        for (std::size_t i = 0; i < n; ++i) {
          double corr = 0.0;
          for (std::size_t j = 0; j < m; ++j) corr += (dx(i, j) + beta * dg(i, j)) * gamma[j];
          next[i] += beta * g[i] - corr;
        }
      }
    }
    if (!all_finite(next, kBlowUp)) {
      throw DivergenceError("fixed-point iterate diverged at iteration " + std::to_string(k), residual, k);
    }
    z = std::move(next);
  }
}

Tensor cell_forward(const DeqCell& cell, const Tensor& z, const Tensor& x) {
  return activate(cell.activation, preactivation(cell, z, x));
}

DeqCell spectral_normalize(DeqCell cell, int power_iters) {
  if (power_iters < 10) throw ArgumentError("spectral_normalize needs at least 10 power iterations");
  cell.validate();
  const double sigma = linalg::spectral_norm(cell.W, power_iters).sigma_max;
  if (sigma == 0.0) return cell;
  // relative slack keeps re-normalization of an already normalized W a no-op
  if (sigma > cell.kappa * (1.0 + 1e-10)) {
    const double s = cell.kappa / sigma;
    for (double& v : cell.W.data()) v *= s;
  }
  return cell;
}

SolveReport solve_forward(const DeqCell& cell, const Tensor& x, const SolverConfig& cfg,
                          const std::optional<Tensor>& z0) {
  const Tensor c = injection(cell, x);
  Tensor start = z0 ? *z0 : Tensor({cell.state_dim()});
  if (start.rank() != 1 || start.size() != cell.state_dim()) {
    throw DimensionError("DEQ start " + start.shape_string() + " does not match W " + cell.W.shape_string());
  }
  const std::size_t h = cell.state_dim();
  const double* w = cell.W.data().data();
  const Activation act = cell.activation;
  auto map = [&](const Tensor& z) {
    Tensor out({h});
    for (std::size_t i = 0; i < h; ++i) {
      double acc = c[i];
      const double* row = w + i * h;
      for (std::size_t j = 0; j < h; ++j) acc += row[j] * z[j];
      out[i] = acc;
    }
    return activate(act, std::move(out));
  };
  return solve_fixed_point(map, std::move(start), cfg);
}

Tensor solve_adjoint(const DeqCell& cell, const Tensor& z_star, const Tensor& x, const Tensor& y,
                     const SolverConfig& cfg) {
  if (y.rank() != 1 || y.size() != cell.state_dim()) {
    throw DimensionError("adjoint seed " + y.shape_string() + " does not match W " + cell.W.shape_string());
  }
  const Tensor slope = activation_slope(cell.activation, preactivation(cell, z_star, x));
  // J = diag(slope) W, so J^T o = W^T (slope * o)
  auto map = [&](const Tensor& o) {
    Tensor out = matvec_transposed(cell.W, hadamard(slope, o));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
    return out;
  };
  SolveReport rep = solve_fixed_point(map, y, cfg);
  if (!rep.converged) {
    throw DivergenceError("adjoint solve did not converge: residual " + std::to_string(rep.residual),
                          rep.residual, rep.iterations);
  }
  return std::move(rep.z_star);
}

CellGrads CellGrads::zeros_like(const DeqCell& cell) {
  return {Tensor::zeros_like(cell.W), Tensor::zeros_like(cell.U), Tensor::zeros_like(cell.b)};
}

void CellGrads::accumulate(const CellGrads& other) {
  axpy(1.0, other.W, W);
  axpy(1.0, other.U, U);
  axpy(1.0, other.b, b);
}

VjpResult deq_vjp(const DeqCell& cell, const Tensor& z_star, const Tensor& x, const Tensor& y,
                  const SolverConfig& cfg) {
  const Tensor o = solve_adjoint(cell, z_star, x, y, cfg);
  const Tensor delta = hadamard(activation_slope(cell.activation, preactivation(cell, z_star, x)), o);
  return {matvec_transposed(cell.U, delta), {outer(delta, z_star), outer(delta, x), delta}};
}

Tensor stack_forward(std::span<const DeqCell> cells, const Tensor& x, const SolverConfig& cfg,
                     StackTrace* trace) {
  if (trace) *trace = StackTrace{};
  Tensor cur = x;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    SolveReport rep = solve_forward(cells[k], cur, cfg);
    if (!rep.converged) {
      throw DivergenceError("DEQ cell " + std::to_string(k) + " did not converge: residual " +
                                std::to_string(rep.residual),
                            rep.residual, rep.iterations);
    }
    if (trace) {
      trace->inputs.push_back(cur);
      trace->fixed_points.push_back(rep.z_star);
      trace->total_iterations += rep.iterations;
    }
    cur = std::move(rep.z_star);
  }
  return cur;
}

Tensor stack_vjp(std::span<const DeqCell> cells, const StackTrace& trace, const Tensor& y,
                 const SolverConfig& cfg, std::span<CellGrads> grads) {
  if (trace.inputs.size() != cells.size() || grads.size() != cells.size()) {
    throw StateError("stack_vjp: trace/grads do not match the cell stack");
  }
  Tensor cot = y;
  for (std::size_t k = cells.size(); k-- > 0;) {
    VjpResult r = deq_vjp(cells[k], trace.fixed_points[k], trace.inputs[k], cot, cfg);
    grads[k].accumulate(r.grad_params);
    cot = std::move(r.grad_x);
  }
  return cot;
}

}  // namespace lion::deq
