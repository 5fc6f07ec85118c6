#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "lion/backbone.hpp"
#include "lion/errors.hpp"
#include "lion/prompt_model.hpp"
#include "lion/robust_opt.hpp"
#include "oracles.hpp"

namespace lion {
namespace {

using testing::random_tensor;

constexpr double kTiny = 0x1p-53;

Dataset toy_data(std::size_t n, std::size_t d, std::size_t classes, std::uint64_t seed) {
  Rng rng = Rng(seed).split("toy");
  Dataset ds;
  ds.inputs = random_tensor({n, d}, rng);
  ds.num_classes = classes;
  for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(i % classes);
  return ds;
}

std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

deq::DeqCell linear_cell(const Tensor& U, const Tensor& b) {
  deq::DeqCell c;
  c.W = Tensor::zeros({U.rows(), U.rows()});
  c.U = U;
  c.b = b;
  c.activation = Activation::identity;
  return c;
}

Dense identity_dense(std::size_t n) { return Dense{Tensor::identity(n), Tensor::zeros({n}), Activation::identity}; }

// Every trainable tensor nonzero and gates off their symmetry point.
PromptModel small_model(std::size_t d, std::size_t hidden, std::size_t h, std::size_t classes, std::uint64_t seed) {
  Rng rng = Rng(seed).split("small");
  Rng bb_rng = rng.split("bb");
  Rng init = rng.split("init");
  LionOptions opts;
  opts.solver.tol = 1e-13;
  opts.solver.max_iters = 2000;
  PromptModel m(Backbone::mlp(d, hidden, h, bb_rng), classes, init, opts);
  Rng extra = rng.split("extra");
  m.head().W = random_tensor({classes, h}, extra);
  m.head().b = random_tensor({classes}, extra);
  m.proj().b = random_tensor({h}, extra, -0.2, 0.2);
  m.gate1() = {0.3, -0.2};
  m.gate2() = {-0.1, 0.4};
  return m;
}

TEST(Gate, Examples) {
  const GateCoeffs even = gate_coeffs({0, 0});
  EXPECT_EQ(even.alpha, 0.5);
  EXPECT_EQ(even.beta, 0.5);
  const GateCoeffs one = gate_coeffs({1, 0});
  EXPECT_NEAR(one.alpha, 0.731059, 1e-6);
  EXPECT_NEAR(one.beta, 0.268941, 1e-6);
  EXPECT_NEAR(one.alpha, std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
  // The exact value 1 - e^-100 is not representable; the minor weight is
  // floored at 2^-53 so both stay inside (0, 1).
  const GateCoeffs sat = gate_coeffs({50, -50});
  EXPECT_EQ(sat.alpha, 1.0 - kTiny);
  EXPECT_EQ(sat.beta, kTiny);
  EXPECT_EQ(sat.alpha + sat.beta, 1.0);
}

TEST(Gate, SimplexPropertyOverWideRange) {
  Rng rng = Rng(21).split("simplex");
  for (int i = 0; i < 2000; ++i) {
    const GatePair g{rng.uniform(-1000, 1000), rng.uniform(-1000, 1000)};
    const GateCoeffs c = gate_coeffs(g);
    ASSERT_EQ(c.alpha + c.beta, 1.0) << g.g_alpha << " " << g.g_beta;
    ASSERT_GT(c.alpha, 0.0);
    ASSERT_LT(c.alpha, 1.0);
    ASSERT_GT(c.beta, 0.0);
    ASSERT_LT(c.beta, 1.0);
  }
  for (double a : {-1e3, 1e3}) {
    const GateCoeffs c = gate_coeffs({a, -a});
    EXPECT_EQ(c.alpha + c.beta, 1.0);
  }
}

TEST(Gate, BackwardMatchesFiniteDifferences) {
  Rng rng = Rng(22).split("gate-fd");
  for (int i = 0; i < 20; ++i) {
    const Tensor g = random_tensor({2}, rng, -3, 3);
    const double da = rng.uniform(-1, 1), db = rng.uniform(-1, 1);
    const auto f = [&](const Tensor& t) {
      const GateCoeffs c = gate_coeffs({t[0], t[1]});
      return da * c.alpha + db * c.beta;
    };
    const GatePair an = gate_backward(gate_coeffs({g[0], g[1]}), da, db);
    EXPECT_LE(relative_error(Tensor::vector({an.g_alpha, an.g_beta}), finite_diff_grad(f, g, 1e-5)), 1e-7);
  }
}

TEST(BlendInput, SaturatedGateReturnsInput) {
  PromptModel m = small_model(6, 7, 5, 2, 1);
  m.gate1() = {50, -50};
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const Tensor x = random_tensor({6}, rng);
    const Tensor xt = m.blend_input(x);
    ASSERT_EQ(xt.shape(), x.shape());
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(xt[k], x[k], 1e-12);
  }
}

TEST(BlendInput, StateIndependentCellClosedForm) {
  Rng rng = Rng(3).split("closed");
  const Tensor U1 = random_tensor({4, 4}, rng), b1 = random_tensor({4}, rng);
  LionOptions opts;
  opts.activation = Activation::identity;
  PromptModel m(Backbone({identity_dense(4)}), {linear_cell(U1, b1)}, {linear_cell(Tensor::identity(4), Tensor::zeros({4}))},
                identity_dense(4), zero_dense(4, 2), {0, 0}, {0, 0}, opts);
  const Tensor x = random_tensor({4}, rng);
  const Tensor expected = add(scale(x, 0.5), scale(add(matvec(U1, x), b1), 0.5));
  EXPECT_LE(relative_error(m.blend_input(x), expected), 1e-14);
}

TEST(BlendRepr, ClosedFormsWithIdentityBackbone) {
  Rng rng = Rng(4).split("repr");
  const Tensor U1 = random_tensor({4, 4}, rng), b1 = random_tensor({4}, rng);
  const Tensor U2 = random_tensor({4, 4}, rng), b2 = random_tensor({4}, rng);
  LionOptions opts;
  opts.activation = Activation::identity;
  PromptModel m(Backbone({identity_dense(4)}), {linear_cell(U1, b1)}, {linear_cell(U2, b2)}, identity_dense(4),
                zero_dense(4, 2), {0, 0}, {0, 0}, opts);
  const Tensor x = random_tensor({4}, rng);
  const Tensor xt = m.blend_input(x);
  const Tensor expected = add(scale(xt, 0.5), scale(add(matvec(U2, x), b2), 0.5));
  EXPECT_LE(relative_error(m.blend_repr(x), expected), 1e-14);

  m.gate2() = {50, -50};
  const Tensor zt = m.blend_repr(x);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(zt[k], xt[k], 1e-12);
}

TEST(BlendRepr, SinglePassFeedsBlendedInputToSecondPrompt) {
  Rng rng = Rng(5).split("single");
  const Tensor U1 = random_tensor({4, 4}, rng), b1 = random_tensor({4}, rng);
  const Tensor U2 = random_tensor({4, 4}, rng), b2 = random_tensor({4}, rng);
  LionOptions opts;
  opts.activation = Activation::identity;
  opts.two_pass = false;
  PromptModel m(Backbone({identity_dense(4)}), {linear_cell(U1, b1)}, {linear_cell(U2, b2)}, identity_dense(4),
                zero_dense(4, 2), {0, 0}, {0, 0}, opts);
  const Tensor x = random_tensor({4}, rng);
  const Tensor xt = m.blend_input(x);
  const Tensor expected = add(scale(xt, 0.5), scale(add(matvec(U2, xt), b2), 0.5));
  EXPECT_LE(relative_error(m.blend_repr(x), expected), 1e-14);
}

TEST(BlendRepr, VjpMatchesFiniteDifferencesOverEveryParameter) {
  PromptModel m = small_model(6, 7, 5, 2, 6);
  Rng rng(7);
  const Tensor x = random_tensor({6}, rng), y = random_tensor({5}, rng);
  m.repr_vjp(x, y);
  for (const ParamRef& p : m.trainable_params()) {
    if (p.name.starts_with("head")) continue;
    std::vector<double> analytic(p.grad.begin(), p.grad.end());
    Tensor base = Tensor::vector(std::vector<double>(p.value.begin(), p.value.end()));
    const auto f = [&](const Tensor& t) {
      std::copy(t.data().begin(), t.data().end(), p.value.begin());
      return dot(y, m.blend_repr(x));
    };
    const Tensor fd = finite_diff_grad(f, base, 1e-5);
    std::copy(base.data().begin(), base.data().end(), p.value.begin());
    EXPECT_LE(relative_error(Tensor::vector(analytic), fd), 1e-5) << p.name;
  }
}

TEST(ForwardFull, ZeroHeadGivesBias) {
  Rng rng = Rng(8).split("zero-head");
  Rng init = rng.split("init");
  PromptModel m(Backbone::mlp(6, 7, 5, rng), 2, init);
  m.head().b = Tensor::vector({0.25, -1.5});
  for (int i = 0; i < 5; ++i) {
    const Tensor out = m.forward_full(random_tensor({6}, rng));
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out, m.head().b);
  }
  EXPECT_EQ(m.num_classes(), 2u);
}

TEST(ForwardFull, BatchEqualsPerSample) {
  PromptModel m = small_model(6, 7, 5, 3, 9);
  Rng rng(10);
  const Tensor xs = random_tensor({12, 6}, rng);
  const Tensor batch = m.forward_batch(xs);
  ASSERT_EQ(batch.shape(), (Tensor::Shape{12, 3}));
  for (std::size_t r = 0; r < 12; ++r) {
    const Tensor one = m.forward_full(xs.row_tensor(r));
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(batch(r, c), one[c], 1e-12);
  }
}

TEST(Loss, UniformLogitsGiveLog2AndEmptyBatchThrows) {
  Rng rng = Rng(11).split("loss");
  Rng init = rng.split("init");
  PromptModel m(Backbone::mlp(6, 7, 5, rng), 2, init);
  const Dataset ds = toy_data(4, 6, 2, 11);
  const std::vector<std::size_t> one{0};
  EXPECT_NEAR(m.loss(ds, one), std::log(2.0), 1e-15);
  EXPECT_NEAR(m.loss_and_grad(ds, one), std::log(2.0), 1e-15);
  EXPECT_THROW(m.loss(ds, std::vector<std::size_t>{}), ArgumentError);
  EXPECT_THROW(m.loss_and_grad(ds, std::vector<std::size_t>{}), ArgumentError);

  // Saturated head: the true class dominates by a wide margin.
  m.head().b = Tensor::vector({40.0, -40.0});
  EXPECT_LT(m.loss(ds, one), 1e-8);
}

TEST(Loss, EndToEndGradientMatchesFiniteDifferences) {
  PromptModel m = small_model(6, 7, 5, 2, 12);
  const Dataset ds = toy_data(5, 6, 2, 12);
  const auto rows = all_rows(ds);
  m.loss_and_grad(ds, rows);
  std::vector<double> analytic, fd;
  for (const ParamRef& p : m.trainable_params()) {
    analytic.insert(analytic.end(), p.grad.begin(), p.grad.end());
    Tensor base = Tensor::vector(std::vector<double>(p.value.begin(), p.value.end()));
    const auto f = [&](const Tensor& t) {
      std::copy(t.data().begin(), t.data().end(), p.value.begin());
      return m.loss(ds, rows);
    };
    const Tensor g = finite_diff_grad(f, base, 1e-5);
    std::copy(base.data().begin(), base.data().end(), p.value.begin());
    fd.insert(fd.end(), g.data().begin(), g.data().end());
  }
  EXPECT_LE(relative_error(Tensor::vector(analytic), Tensor::vector(fd)), 1e-5);
}

TEST(Loss, EveryTrainableParameterReceivesGradient) {
  PromptModel m = small_model(6, 7, 5, 3, 13);
  const Dataset ds = toy_data(9, 6, 3, 13);
  m.loss_and_grad(ds, all_rows(ds));
  for (const ParamRef& p : m.trainable_params()) {
    bool nonzero = false;
    for (double g : p.grad) nonzero = nonzero || g != 0.0;
    EXPECT_TRUE(nonzero) << p.name;
  }
}

TEST(TrainableSet, ExcludesBackboneAndCountsMatch) {
  PromptModel m = small_model(6, 7, 5, 2, 14);
  const auto params = m.trainable_params();
  check_unique_names(params);
  for (const auto& p : params) EXPECT_FALSE(p.name.starts_with("backbone")) << p.name;
  EXPECT_EQ(count_scalars(params), m.trainable_count());
  // p1 36 + 36 + 6, p2 25 + 25 + 5, proj 30, head 12, gates 4.
  EXPECT_EQ(m.trainable_count(), 78u + 55u + 30u + 12u + 4u);
  Backbone bb = m.backbone();
  std::vector<DenseGrads> g = bb.zero_grads();
  EXPECT_THROW(bb.params(g), StateError);
}

TEST(TrainableSet, DeskScaleIsUnderTenPercentOfBackbone) {
  Rng rng = Rng(15).split("desk");
  Rng init = rng.split("init");
  PromptModel m(Backbone::mlp(16, 512, 8, rng), 4, init);
  EXPECT_LT(10 * m.trainable_count(), m.backbone().param_count());
}

TEST(TrainableSet, ViewsStayValidAcrossSteps) {
  PromptModel m = small_model(6, 7, 5, 2, 16);
  const Dataset ds = toy_data(8, 6, 2, 16);
  const auto views = m.trainable_params();
  robust::OptState st;
  st.robust = false;
  for (int s = 0; s < 5; ++s) {
    m.loss_and_grad(ds, all_rows(ds));
    robust::sgd_step(views, 0.05);
    m.project();
  }
  const auto fresh = m.trainable_params();
  ASSERT_EQ(fresh.size(), views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    EXPECT_EQ(fresh[i].value.data(), views[i].value.data()) << views[i].name;
    EXPECT_EQ(fresh[i].grad.data(), views[i].grad.data()) << views[i].name;
  }
  // Steps through the old views landed in the model: W remains a contraction.
  for (const auto& c : m.p1()) EXPECT_LE(testing::sigma_max(c.W), c.kappa + 1e-6);
}

TEST(Frozen, BackboneBitIdenticalAfterStep) {
  PromptModel m = small_model(6, 7, 5, 2, 17);
  const Backbone before = m.backbone();
  const Dataset ds = toy_data(8, 6, 2, 17);
  const auto params = m.trainable_params();
  m.loss_and_grad(ds, all_rows(ds));
  const robust::OptState st;
  robust::step(params, robust::partition(robust::criticality_scores(params), st.tau), st);
  m.project();
  ASSERT_EQ(before.layers().size(), m.backbone().layers().size());
  for (std::size_t k = 0; k < before.layers().size(); ++k) {
    EXPECT_TRUE(bit_equal(before.layers()[k].W, m.backbone().layers()[k].W));
    EXPECT_TRUE(bit_equal(before.layers()[k].b, m.backbone().layers()[k].b));
  }
}

TEST(ParamCountReport, WorkedValues) {
  const auto rows = param_count_report(768, 64, 12, 50, 16, 64, 10);
  const auto find = [&](const std::string& name) {
    for (const auto& r : rows)
      if (r.method == name) return r.count;
    ADD_FAILURE() << "missing row " << name;
    return std::size_t{0};
  };
  EXPECT_EQ(find("adapter"), 1179648u);
  EXPECT_EQ(find("vpt"), 460800u);
  EXPECT_EQ(find("lion"), 1024u);
  EXPECT_EQ(find("head"), 640u);
  EXPECT_THROW(param_count_report(0, 64, 12, 50, 16, 64, 10), ArgumentError);
}

TEST(LionOptions, Validation) {
  LionOptions o;
  o.kappa = 1.0;
  EXPECT_THROW(o.validate(), ArgumentError);
  o = LionOptions{};
  o.layers = 0;
  EXPECT_THROW(o.validate(), ArgumentError);
}

}  // namespace
}  // namespace lion
