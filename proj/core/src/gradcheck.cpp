#include "lion/gradcheck.hpp"

#include <algorithm>

#include "lion/errors.hpp"
#include "lion/ops.hpp"
#include "lion/rng.hpp"

namespace lion::gradcheck {

namespace {

Tensor pre(const deq::DeqCell& cell, const Tensor& z, const Tensor& x) {
  Tensor a = matvec(cell.W, z);
  axpy(1.0, matvec(cell.U, x), a);
  axpy(1.0, cell.b, a);
  return a;
}

// Tight solves for the finite-difference oracle; its error budget is
// dominated by the solve tolerance otherwise.
deq::SolverConfig oracle_solver(const deq::SolverConfig& base) {
  deq::SolverConfig c = base;
  c.tol = 1e-13;
  c.max_iters = std::max(base.max_iters, 2000);
  return c;
}

Tensor uniform_tensor(Tensor::Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

deq::VjpResult unrolled_vjp(const deq::DeqCell& cell, const Tensor& x, const Tensor& y, int iters) {
  if (iters < 1) throw ArgumentError("unrolled_vjp needs at least one iteration");
  std::vector<Tensor> zs{Tensor::zeros({cell.state_dim()})};
  std::vector<Tensor> pres;
  for (int t = 0; t < iters; ++t) {
    pres.push_back(pre(cell, zs.back(), x));
    zs.push_back(activate(cell.activation, pres.back()));
  }
  deq::VjpResult r{Tensor::zeros_like(x), deq::CellGrads::zeros_like(cell)};
  Tensor g = y;
  for (int t = iters - 1; t >= 0; --t) {
    const auto k = static_cast<std::size_t>(t);
    const Tensor delta = hadamard(activation_slope(cell.activation, pres[k]), g);
    axpy(1.0, outer(delta, zs[k]), r.grad_params.W);
    axpy(1.0, outer(delta, x), r.grad_params.U);
    axpy(1.0, delta, r.grad_params.b);
    axpy(1.0, matvec_transposed(cell.U, delta), r.grad_x);
    g = matvec_transposed(cell.W, delta);
  }
  return r;
}

Tensor flatten(const deq::VjpResult& r) {
  std::vector<double> v;
  for (const Tensor* t : {&r.grad_x, &r.grad_params.W, &r.grad_params.U, &r.grad_params.b}) {
    v.insert(v.end(), t->data().begin(), t->data().end());
  }
  return Tensor::vector(std::move(v));
}

Tensor finite_difference_vjp(const deq::DeqCell& cell, const Tensor& x, const Tensor& y,
                             const deq::SolverConfig& cfg, double step) {
  const std::size_t nx = x.size(), nw = cell.W.size(), nu = cell.U.size(), nb = cell.b.size();
  std::vector<double> theta;
  for (const Tensor* t : {&x, &cell.W, &cell.U, &cell.b}) theta.insert(theta.end(), t->data().begin(), t->data().end());

  const auto objective = [&](const Tensor& flat) {
    deq::DeqCell c = cell;
    const auto src = flat.data();
    Tensor xx = x;
    std::copy_n(src.begin(), nx, xx.data().begin());
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(nx), nw, c.W.data().begin());
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(nx + nw), nu, c.U.data().begin());
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(nx + nw + nu), nb, c.b.data().begin());
    // No re-normalization: the perturbed W stays within step of a contraction.
    const deq::SolveReport rep = deq::solve_forward(c, xx, cfg);
    if (!rep.converged) {
      throw DivergenceError("finite-difference solve did not converge", rep.residual, rep.iterations);
    }
    return dot(y, rep.z_star);
  };
  return finite_diff_grad(objective, Tensor::vector(std::move(theta)), step);
}

Summary run(const Options& opts) {
  if (opts.cases < 1) throw ArgumentError("gradcheck needs at least one case");
  if (opts.max_dim < 2) throw ArgumentError("gradcheck max_dim must be >= 2");
  const Rng root = Rng(opts.seed).split("gradcheck");
  Summary s;
  double worst = -1.0;
  for (int i = 0; i < opts.cases; ++i) {
    Rng rng = root.split(static_cast<std::uint64_t>(i));
    CaseResult c;
    c.index = i;
    c.state_dim = 2 + rng.below(opts.max_dim - 1);
    c.input_dim = 2 + rng.below(opts.max_dim - 1);
    const deq::DeqCell cell = deq::make_cell(c.state_dim, c.input_dim, rng, opts.kappa, Activation::tanh);
    const Tensor x = uniform_tensor({c.input_dim}, rng, -1.0, 1.0);
    const Tensor y = uniform_tensor({c.state_dim}, rng, -1.0, 1.0);

    const deq::SolveReport fwd = deq::solve_forward(cell, x, opts.solver);
    c.forward_iterations = fwd.iterations;
    c.forward_residual = fwd.residual;
    c.solver_converged = fwd.converged;
    if (!fwd.converged) {
      c.solver_message = "forward solve did not converge";
      ++s.solver_failures;
      s.cases.push_back(c);
      continue;
    }
    Tensor implicit;
    try {
      implicit = flatten(deq::deq_vjp(cell, fwd.z_star, x, y, opts.solver));
    } catch (const DivergenceError& e) {
      c.solver_converged = false;
      c.solver_message = e.what();
      ++s.solver_failures;
      s.cases.push_back(c);
      continue;
    }
    const Tensor fd = finite_difference_vjp(cell, x, y, oracle_solver(opts.solver), opts.fd_step);
    const Tensor unrolled = flatten(unrolled_vjp(cell, x, y, opts.unroll_iters));
    c.fd_rel_error = relative_error(implicit, fd);
    c.unrolled_rel_error = relative_error(implicit, unrolled);
    if (!c.gradients_ok(opts)) ++s.gradient_failures;
    const double score = std::max(c.fd_rel_error / opts.fd_tol, c.unrolled_rel_error / opts.unrolled_tol);
    if (score > worst) {
      worst = score;
      s.worst_case = i;
    }
    s.cases.push_back(c);
  }
  return s;
}

}  // namespace lion::gradcheck
