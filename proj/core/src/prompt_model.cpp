#include "lion/prompt_model.hpp"

#include <algorithm>
#include <cmath>

#include "lion/errors.hpp"

namespace lion {

namespace {

// Largest double below 1 is 1 - 2^-53; flooring the minor weight there keeps
// both weights inside (0, 1) and their rounded sum exactly 1.
constexpr double kMinorFloor = 0x1.0p-53;

}  // namespace

GateCoeffs gate_coeffs(const GatePair& g) {
  const double m = std::max(g.g_alpha, g.g_beta);
  const double ea = std::exp(g.g_alpha - m);
  const double eb = std::exp(g.g_beta - m);
  // The major weight is >= 1/2, so 1 - major is exact (Sterbenz) and
  // major + minor rounds to exactly 1.
  double major = std::max(ea, eb) / (ea + eb);
  major = std::min(major, 1.0 - kMinorFloor);
  const double minor = 1.0 - major;
  return g.g_alpha >= g.g_beta ? GateCoeffs{major, minor} : GateCoeffs{minor, major};
}

GatePair gate_backward(const GateCoeffs& c, double d_alpha, double d_beta) {
  const double s = c.alpha * c.beta * (d_alpha - d_beta);
  return {s, -s};
}

void LionOptions::validate() const {
  if (!(kappa > 0.0 && kappa < 1.0)) throw ArgumentError("kappa must lie in (0,1)");
  if (layers < 1) throw ArgumentError("layers must be >= 1");
  solver.validate();
}

struct PromptModel::Trace {
  Tensor x;
  deq::StackTrace p1;
  Tensor prompt1;
  GateCoeffs c1{};
  GateCoeffs c2{};
  Tensor x_tilde;
  Backbone::Trace bb_tilde;
  Tensor f_tilde;
  Tensor z;
  deq::StackTrace p2;
  Tensor prompt2;
  Tensor proj_pre;
  Tensor proj_out;
  Tensor z_tilde;
};

PromptModel::PromptModel(Backbone backbone, std::size_t num_classes, Rng& rng, LionOptions opts)
    : backbone_(std::move(backbone)), opts_(opts) {
  opts_.validate();
  if (num_classes < 2) throw ArgumentError("need at least 2 classes");
  backbone_.set_frozen(true);
  const std::size_t d = backbone_.input_dim();
  const std::size_t h = backbone_.output_dim();
  Rng p1_rng = rng.split("p1");
  Rng p2_rng = rng.split("p2");
  Rng proj_rng = rng.split("proj");
  for (int k = 0; k < opts_.layers; ++k) {
    p1_.push_back(deq::make_cell(d, d, p1_rng, opts_.kappa, opts_.activation));
    p2_.push_back(deq::make_cell(h, h, p2_rng, opts_.kappa, opts_.activation));
  }
  proj_ = make_dense(h, h, proj_rng);
  head_ = zero_dense(h, num_classes);
  check_shapes();
  zero_grads();
}

PromptModel::PromptModel(Backbone backbone, std::vector<deq::DeqCell> p1, std::vector<deq::DeqCell> p2,
                         Dense proj, Dense head, GatePair gate1, GatePair gate2, LionOptions opts)
    : backbone_(std::move(backbone)),
      p1_(std::move(p1)),
      p2_(std::move(p2)),
      proj_(std::move(proj)),
      head_(std::move(head)),
      gate1_(gate1),
      gate2_(gate2),
      opts_(opts) {
  opts_.layers = static_cast<int>(p1_.size());
  opts_.validate();
  backbone_.set_frozen(true);
  check_shapes();
  zero_grads();
}

void PromptModel::check_shapes() const {
  const std::size_t d = backbone_.input_dim();
  const std::size_t h = backbone_.output_dim();
  if (p1_.empty() || p1_.size() != p2_.size()) throw ArgumentError("prompt stacks must be non-empty and equal");
  for (const auto& c : p1_) {
    c.validate();
    if (c.state_dim() != d || c.input_dim() != d) throw DimensionError("P1 cell must map input space to itself");
  }
  for (const auto& c : p2_) {
    c.validate();
    if (c.state_dim() != h || c.input_dim() != h) {
      throw DimensionError("P2 cell must map representation space to itself");
    }
  }
  if (proj_.in_dim() != h || proj_.out_dim() != h) throw DimensionError("proj must map h -> h");
  if (head_.in_dim() != h) throw DimensionError("head input must equal the representation size");
  if (head_.out_dim() < 2) throw ArgumentError("head needs at least 2 classes");
}

void PromptModel::zero_grads() {
  // Parameter views handed out by trainable_params() point into these
  // buffers, so they are cleared in place and only reallocated on a shape
  // change.
  const auto reset = [](Tensor& g, const Tensor& like) {
    if (g.same_shape(like)) {
      std::fill(g.data().begin(), g.data().end(), 0.0);
    } else {
      g = Tensor::zeros_like(like);
    }
  };
  const auto reset_cells = [&](std::vector<deq::CellGrads>& gs, const std::vector<deq::DeqCell>& cells) {
    gs.resize(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      reset(gs[k].W, cells[k].W);
      reset(gs[k].U, cells[k].U);
      reset(gs[k].b, cells[k].b);
    }
  };
  reset_cells(grads_.p1, p1_);
  reset_cells(grads_.p2, p2_);
  reset(grads_.proj.W, proj_.W);
  reset(grads_.proj.b, proj_.b);
  reset(grads_.head.W, head_.W);
  reset(grads_.head.b, head_.b);
  grads_.gate1 = {};
  grads_.gate2 = {};
}

Tensor PromptModel::forward_repr(const Tensor& x, Trace& t) const {
  if (x.rank() != 1 || x.size() != input_dim()) {
    throw DimensionError("input " + x.shape_string() + " does not match model input " +
                         std::to_string(input_dim()));
  }
  t.x = x;
  t.prompt1 = deq::stack_forward(p1_, x, opts_.solver, &t.p1);
  t.c1 = gate_coeffs(gate1_);
  t.x_tilde = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) t.x_tilde[i] = t.c1.alpha * x[i] + t.c1.beta * t.prompt1[i];

  t.f_tilde = backbone_.forward(t.x_tilde, &t.bb_tilde);
  t.z = opts_.two_pass ? backbone_.forward(x) : t.f_tilde;
  t.prompt2 = deq::stack_forward(p2_, t.z, opts_.solver, &t.p2);
  t.proj_out = proj_.forward(t.prompt2, &t.proj_pre);

  t.c2 = gate_coeffs(gate2_);
  t.z_tilde = Tensor::zeros_like(t.f_tilde);
  for (std::size_t i = 0; i < t.z_tilde.size(); ++i) {
    t.z_tilde[i] = t.c2.alpha * t.f_tilde[i] + t.c2.beta * t.proj_out[i];
  }
  return t.z_tilde;
}

void PromptModel::backward_repr(const Trace& t, const Tensor& d_repr, double weight) {
  Tensor dz = scale(d_repr, weight);

  // z~ = a2 F(x~) + b2 proj(P2(z))
  const GatePair dg2 = gate_backward(t.c2, dot(dz, t.f_tilde), dot(dz, t.proj_out));
  grads_.gate2.g_alpha += dg2.g_alpha;
  grads_.gate2.g_beta += dg2.g_beta;
  Tensor d_f_tilde = scale(dz, t.c2.alpha);
  const Tensor d_proj_out = scale(dz, t.c2.beta);
  const Tensor d_prompt2 = dense_backward(proj_, t.prompt2, t.proj_pre, d_proj_out, &grads_.proj);
  const Tensor d_z = deq::stack_vjp(p2_, t.p2, d_prompt2, opts_.solver, grads_.p2);
  // two-pass: z = F(x) depends on nothing trainable
  if (!opts_.two_pass) axpy(1.0, d_z, d_f_tilde);

  const Tensor d_x_tilde = backbone_.backward(t.bb_tilde, d_f_tilde);

  // x~ = a1 x + b1 P1(x)
  const GatePair dg1 = gate_backward(t.c1, dot(d_x_tilde, t.x), dot(d_x_tilde, t.prompt1));
  grads_.gate1.g_alpha += dg1.g_alpha;
  grads_.gate1.g_beta += dg1.g_beta;
  deq::stack_vjp(p1_, t.p1, scale(d_x_tilde, t.c1.beta), opts_.solver, grads_.p1);
}

Tensor PromptModel::blend_input(const Tensor& x) const {
  if (x.rank() != 1 || x.size() != input_dim()) {
    throw DimensionError("input " + x.shape_string() + " does not match model input " +
                         std::to_string(input_dim()));
  }
  const Tensor prompt = deq::stack_forward(p1_, x, opts_.solver);
  const GateCoeffs c = gate_coeffs(gate1_);
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = c.alpha * x[i] + c.beta * prompt[i];
  return out;
}

Tensor PromptModel::blend_repr(const Tensor& x) const {
  Trace t;
  return forward_repr(x, t);
}

Tensor PromptModel::forward_full(const Tensor& x) const { return head_.forward(blend_repr(x)); }

Tensor PromptModel::forward_batch(const Tensor& xs) const {
  if (xs.rank() != 2) throw DimensionError("forward_batch expects a matrix, got " + xs.shape_string());
  const std::size_t c = num_classes();
  Tensor out({xs.rows(), c});
  for (std::size_t r = 0; r < xs.rows(); ++r) {
    const Tensor l = forward_full(xs.row_tensor(r));
    for (std::size_t j = 0; j < c; ++j) out(r, j) = l[j];
  }
  return out;
}

double PromptModel::loss(const Dataset& ds, std::span<const std::size_t> batch) const {
  if (batch.empty()) throw ArgumentError("loss over an empty batch");
  double total = 0.0;
  for (std::size_t i : batch) total += cross_entropy(forward_full(ds.sample(i)), ds.labels.at(i));
  return total / static_cast<double>(batch.size());
}

void PromptModel::repr_vjp(const Tensor& x, const Tensor& d_repr) {
  zero_grads();
  Trace t;
  forward_repr(x, t);
  if (!d_repr.same_shape(t.z_tilde)) {
    throw DimensionError("repr cotangent " + d_repr.shape_string() + " vs " + t.z_tilde.shape_string());
  }
  backward_repr(t, d_repr, 1.0);
}

double PromptModel::loss_and_grad(const Dataset& ds, std::span<const std::size_t> batch) {
  if (batch.empty()) throw ArgumentError("loss over an empty batch");
  zero_grads();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  Trace t;
  for (std::size_t i : batch) {
    const std::size_t label = ds.labels.at(i);
    forward_repr(ds.sample(i), t);
    Tensor head_pre;
    const Tensor out = head_.forward(t.z_tilde, &head_pre);
    total += cross_entropy(out, label);
    const Tensor g = cross_entropy_backward(out, label, inv);
    const Tensor d_repr = dense_backward(head_, t.z_tilde, head_pre, g, &grads_.head);
    backward_repr(t, d_repr, 1.0);
  }
  return total * inv;
}

std::vector<ParamRef> PromptModel::trainable_params() {
  std::vector<ParamRef> refs;
  auto add_cells = [&](const char* block, std::vector<deq::DeqCell>& cells, std::vector<deq::CellGrads>& g) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string prefix = std::string(block) + "." + std::to_string(k);
      refs.push_back({prefix + ".W", cells[k].W.data(), g[k].W.data()});
      refs.push_back({prefix + ".U", cells[k].U.data(), g[k].U.data()});
      refs.push_back({prefix + ".b", cells[k].b.data(), g[k].b.data()});
    }
  };
  add_cells("p1", p1_, grads_.p1);
  add_cells("p2", p2_, grads_.p2);
  refs.push_back({"proj.W", proj_.W.data(), grads_.proj.W.data()});
  refs.push_back({"proj.b", proj_.b.data(), grads_.proj.b.data()});
  refs.push_back({"head.W", head_.W.data(), grads_.head.W.data()});
  refs.push_back({"head.b", head_.b.data(), grads_.head.b.data()});
  refs.push_back({"gate1.alpha", {&gate1_.g_alpha, 1}, {&grads_.gate1.g_alpha, 1}});
  refs.push_back({"gate1.beta", {&gate1_.g_beta, 1}, {&grads_.gate1.g_beta, 1}});
  refs.push_back({"gate2.alpha", {&gate2_.g_alpha, 1}, {&grads_.gate2.g_alpha, 1}});
  refs.push_back({"gate2.beta", {&gate2_.g_beta, 1}, {&grads_.gate2.g_beta, 1}});
  return refs;
}

void PromptModel::project() {
  // Copy into the existing W buffers so outstanding parameter views stay valid.
  const auto renorm = [](deq::DeqCell& c) {
    const deq::DeqCell n = deq::spectral_normalize(c);
    std::copy(n.W.data().begin(), n.W.data().end(), c.W.data().begin());
  };
  for (auto& c : p1_) renorm(c);
  for (auto& c : p2_) renorm(c);
}

std::vector<std::pair<std::string, double>> PromptModel::diagnostics() const {
  return {{"alpha1", gate_coeffs(gate1_).alpha}, {"alpha2", gate_coeffs(gate2_).alpha}};
}

std::size_t PromptModel::trainable_count() const noexcept {
  std::size_t n = 0;
  for (const auto& c : p1_) n += c.W.size() + c.U.size() + c.b.size();
  for (const auto& c : p2_) n += c.W.size() + c.U.size() + c.b.size();
  return n + proj_.param_count() + head_.param_count() + 4;
}

std::vector<ParamCountRow> param_count_report(std::size_t d, std::size_t d_tilde, std::size_t layers,
                                              std::size_t prompts, std::size_t m, std::size_t h,
                                              std::size_t classes) {
  for (std::size_t v : {d, d_tilde, layers, prompts, m, h, classes}) {
    if (v == 0) throw ArgumentError("param_count_report arguments must be positive");
  }
  return {
      {"adapter", 2 * d * d_tilde * layers, "2*d*d~*L"},
      {"bias", 2 * d * d_tilde * layers, "2*d*d~*L"},
      {"vpt", prompts * layers * d, "n*L*d"},
      {"lion", m * d_tilde, "m*d~"},
      {"head", h * classes, "h*C"},
  };
}

}  // namespace lion
