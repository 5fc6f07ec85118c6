#include "lion/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "lion/errors.hpp"
#include "lion/linalg.hpp"
#include "lion/ops.hpp"
#include "lion/rng.hpp"

namespace lion::harness {

namespace {

std::vector<std::size_t> balanced_labels(std::size_t classes, std::size_t n) {
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % classes;
  return labels;
}

void check_class_setup(std::size_t classes, std::size_t n) {
  if (classes < 2) throw ArgumentError("need at least 2 classes");
  if (n < 10 * classes) {
    throw ArgumentError("need at least 10 samples per class (" + std::to_string(n) + " for " +
                        std::to_string(classes) + " classes)");
  }
}

// Indices of each class, in dataset order.
std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by[ds.labels[i]].push_back(i);
  return by;
}

// `keep` indices of `pool` picked by a seeded shuffle, restored to order.
std::vector<std::size_t> pick(std::vector<std::size_t> pool, std::size_t keep, Rng rng) {
  rng.shuffle(std::span<std::size_t>(pool));
  pool.resize(keep);
  std::sort(pool.begin(), pool.end());
  return pool;
}

Tensor random_orthogonal(std::size_t d, Rng& rng) {
  // Gram-Schmidt on a Gaussian matrix, twice for stability.
  Tensor q({d, d});
  for (double& v : q.data()) v = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < d; ++i) {
      auto ri = q.row(i);
      for (std::size_t j = 0; j < i; ++j) {
        const auto rj = q.row(j);
        double proj = 0.0;
        for (std::size_t k = 0; k < d; ++k) proj += ri[k] * rj[k];
        for (std::size_t k = 0; k < d; ++k) ri[k] -= proj * rj[k];
      }
      double nrm = 0.0;
      for (double v : ri) nrm += v * v;
      nrm = std::sqrt(nrm);
      if (nrm < 1e-12) throw NumericError("degenerate draw while sampling a rotation");
      for (double& v : ri) v /= nrm;
    }
  }
  return q;
}

}  // namespace

// ---------------------------------------------------------------------------

Dataset make_blobs(std::size_t classes, std::size_t dim, std::size_t n, std::uint64_t seed, Split split,
                   const BlobOptions& opts) {
  check_class_setup(classes, n);
  if (dim == 0) throw ArgumentError("blob dimension must be positive");
  if (!(opts.sigma > 0.0) || !(opts.separation > 0.0)) throw ArgumentError("sigma and separation must be > 0");

  const Rng root = Rng(seed).split("blobs");
  Rng crng = root.split("centers");
  Tensor centers({classes, dim});
  for (double& v : centers.data()) v = crng.normal();
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += std::pow(centers(a, k) - centers(b, k), 2);
      min_dist = std::min(min_dist, std::sqrt(s));
    }
  }
  if (!(min_dist > 0.0)) throw NumericError("coincident blob centres");
  const double gain = opts.separation * opts.sigma / min_dist;
  for (double& v : centers.data()) v *= gain;

  Rng srng = root.split(to_string(split));
  Dataset ds;
  ds.labels = balanced_labels(classes, n);
  ds.inputs = Tensor({n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.inputs.row(i);
    const auto c = centers.row(ds.labels[i]);
    for (std::size_t k = 0; k < dim; ++k) row[k] = c[k] + opts.sigma * srng.normal();
  }
  ds.num_classes = classes;
  ds.split = split;
  ds.seed = seed;
  return ds;
}

Dataset make_glyphs(std::size_t classes, std::size_t n, std::uint64_t seed, Split split, double flip_prob) {
  check_class_setup(classes, n);
  if (!(flip_prob >= 0.0 && flip_prob < 0.5)) throw ArgumentError("flip_prob must lie in [0, 0.5)");
  constexpr int side = 8;
  constexpr std::size_t dim = side * side;

  const Rng root = Rng(seed).split("glyphs");
  Rng prng = root.split("prototypes");
  std::vector<std::vector<double>> protos;
  while (protos.size() < classes) {
    std::vector<double> g(dim, 0.0);
    for (int s = 0; s < 3; ++s) {
      const int kind = static_cast<int>(prng.below(4));
      const int len = 4 + static_cast<int>(prng.below(5));  // 4..8
      int r = static_cast<int>(prng.below(side)), c = static_cast<int>(prng.below(side));
      const int dr[] = {0, 1, 1, 1}, dc[] = {1, 0, 1, -1};
      for (int t = 0; t < len; ++t) {
        if (r < 0 || r >= side || c < 0 || c >= side) break;
        g[static_cast<std::size_t>(r * side + c)] = 1.0;
        r += dr[kind];
        c += dc[kind];
      }
    }
    bool distinct = true;
    for (const auto& p : protos) {
      std::size_t diff = 0;
      for (std::size_t k = 0; k < dim; ++k) diff += p[k] != g[k];
      if (diff < 4) distinct = false;
    }
    if (distinct) protos.push_back(std::move(g));
  }

  Rng srng = root.split(to_string(split));
  Dataset ds;
  ds.labels = balanced_labels(classes, n);
  ds.inputs = Tensor({n, dim});
  for (std::size_t i = 0; i < n; ++i) {
    auto row = ds.inputs.row(i);
    const auto& p = protos[ds.labels[i]];
    for (std::size_t k = 0; k < dim; ++k) row[k] = srng.uniform() < flip_prob ? 1.0 - p[k] : p[k];
  }
  ds.num_classes = classes;
  ds.split = split;
  ds.seed = seed;
  return ds;
}

std::string to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::none: return "none";
    case ShiftKind::invertible_linear: return "invertible_linear";
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::noise: return "noise";
  }
  return "none";
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "none") return ShiftKind::none;
  if (s == "invertible_linear" || s == "linear") return ShiftKind::invertible_linear;
  if (s == "rotation") return ShiftKind::rotation;
  if (s == "noise") return ShiftKind::noise;
  throw ArgumentError("unknown shift '" + s + "'");
}

void ShiftSpec::validate(std::size_t dim) const {
  if (A.rank() != 2 || A.rows() != dim || A.cols() != dim) {
    throw ArgumentError("shift matrix must be " + std::to_string(dim) + "x" + std::to_string(dim) + ", got " +
                        A.shape_string());
  }
  const double det = linalg::determinant(A);
  if (!(std::abs(det) > 1e-6)) throw ArgumentError("shift matrix is not invertible (|det| <= 1e-6)");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ArgumentError("noise sigma must be >= 0");
}

ShiftSpec make_shift(ShiftKind kind, std::size_t dim, std::uint64_t seed, double strength) {
  if (dim == 0) throw ArgumentError("shift dimension must be positive");
  if (!(strength >= 0.0) || !std::isfinite(strength)) throw ArgumentError("shift strength must be >= 0");
  ShiftSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.A = Tensor::identity(dim);
  Rng rng = Rng(seed).split("shift");
  switch (kind) {
    case ShiftKind::none:
      break;
    case ShiftKind::invertible_linear: {
      const double g = strength / std::sqrt(static_cast<double>(dim));
      for (int attempt = 0;; ++attempt) {
        if (attempt == 1000) throw NumericError("could not sample an invertible shift");
        Rng draw = rng.split(static_cast<std::uint64_t>(attempt));
        Tensor a = Tensor::identity(dim);
        for (double& v : a.data()) v += g * draw.normal();
        if (std::abs(linalg::determinant(a)) > 1e-6) {
          spec.A = std::move(a);
          break;
        }
      }
      break;
    }
    case ShiftKind::rotation:
      spec.A = random_orthogonal(dim, rng);
      break;
    case ShiftKind::noise:
      spec.noise_sigma = strength;
      break;
  }
  spec.validate(dim);
  return spec;
}

Dataset apply_shift(const Dataset& ds, const ShiftSpec& spec) {
  ds.validate();
  spec.validate(ds.dim());
  Dataset out = ds;
  out.inputs = matmul(ds.inputs, transpose(spec.A));
  if (spec.noise_sigma > 0.0) {
    Rng rng = Rng(spec.seed).split("shift-noise").split(to_string(ds.split));
    for (double& v : out.inputs.data()) v += spec.noise_sigma * rng.normal();
  }
  return out;
}

Dataset resample_longtail(const Dataset& ds, double imbalance_ratio) {
  ds.validate();
  if (!(imbalance_ratio >= 1.0) || !std::isfinite(imbalance_ratio)) {
    throw ArgumentError("imbalance ratio must be finite and >= 1");
  }
  const auto by = indices_by_class(ds);
  std::size_t n_max = 0;
  for (const auto& v : by) n_max = std::max(n_max, v.size());
  const std::size_t c_count = ds.num_classes;
  const Rng rng = Rng(ds.seed).split("longtail").split(to_string(ds.split));

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < c_count; ++c) {
    const double frac = static_cast<double>(c) / static_cast<double>(c_count - 1);
    const double target = static_cast<double>(n_max) * std::pow(1.0 / imbalance_ratio, frac);
    const std::size_t want = std::min(by[c].size(), static_cast<std::size_t>(std::llround(target)));
    if (want == 0) {
      throw ArgumentError("long-tail resampling would empty class " + std::to_string(c) + " (N_max " +
                          std::to_string(n_max) + ", IR " + std::to_string(imbalance_ratio) + ")");
    }
    const auto chosen = pick(by[c], want, rng.split(static_cast<std::uint64_t>(c)));
    keep.insert(keep.end(), chosen.begin(), chosen.end());
  }
  std::sort(keep.begin(), keep.end());
  return subset(ds, keep);
}

Dataset resample_fewshot(const Dataset& ds, std::size_t shots) {
  ds.validate();
  if (shots == 0) throw ArgumentError("shots must be >= 1");
  const auto by = indices_by_class(ds);
  const Rng rng = Rng(ds.seed).split("fewshot").split(to_string(ds.split));
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < by.size(); ++c) {
    if (by[c].size() < shots) {
      throw ArgumentError("class " + std::to_string(c) + " has " + std::to_string(by[c].size()) +
                          " samples, fewer than " + std::to_string(shots) + " shots");
    }
    const auto chosen = pick(by[c], shots, rng.split(static_cast<std::uint64_t>(c)));
    keep.insert(keep.end(), chosen.begin(), chosen.end());
  }
  std::sort(keep.begin(), keep.end());
  return subset(ds, keep);
}

// ---------------------------------------------------------------------------

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::head_tuning: return "head_tuning";
    case Protocol::full_finetune: return "full_finetune";
    case Protocol::bias_tuning: return "bias_tuning";
    case Protocol::lion: return "lion";
  }
  return "lion";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "head_tuning" || s == "head") return Protocol::head_tuning;
  if (s == "full_finetune" || s == "full") return Protocol::full_finetune;
  if (s == "bias_tuning" || s == "bias") return Protocol::bias_tuning;
  if (s == "lion") return Protocol::lion;
  throw ArgumentError("unsupported protocol '" + s + "'");
}

Pretrained pretrain_backbone(const Dataset& train, const Dataset& test, const PretrainConfig& cfg) {
  train.validate();
  test.validate();
  if (cfg.hidden == 0 || cfg.repr == 0) throw ArgumentError("backbone widths must be positive");
  Rng rng = Rng(cfg.seed).split("pretrain");
  Rng brng = rng.split("backbone");
  Rng hrng = rng.split("head");
  Backbone bb = Backbone::mlp(train.dim(), cfg.hidden, cfg.repr, brng);
  Dense head = make_dense(cfg.repr, train.num_classes, hrng);
  Classifier model(std::move(bb), std::move(head), TuneScope::full);

  robust::OptState opt;
  opt.eta = cfg.eta;
  opt.robust = false;
  const robust::TrainLog log = robust::train(model, train, opt, cfg.train);

  Pretrained out{.backbone = {}, .head = model.head()};
  out.train_accuracy = accuracy(model, train);
  out.test_accuracy = accuracy(model, test);
  out.epochs = static_cast<int>(log.epochs.size());
  out.met_target = out.train_accuracy >= cfg.target_accuracy;
  out.backbone = model.release_backbone();
  return out;
}

ProtocolRun run_protocol(Protocol protocol, const Backbone& backbone, const Dataset& train, const Dataset& test,
                         const ProtocolConfig& cfg) {
  train.validate();
  test.validate();
  if (train.dim() != backbone.input_dim() || test.dim() != backbone.input_dim()) {
    throw DimensionError("data dimension does not match the backbone input (" +
                         std::to_string(backbone.input_dim()) + ")");
  }
  if (train.num_classes != test.num_classes) throw ArgumentError("train and test disagree on the class count");

  const auto t0 = std::chrono::steady_clock::now();
  ProtocolRun run;
  robust::OptState opt;
  opt.eta = cfg.baseline_eta;
  opt.robust = false;

  Backbone bb = backbone;
  bb.set_frozen(true);
  const std::size_t classes = train.num_classes;
  const std::size_t repr = bb.output_dim();
  switch (protocol) {
    case Protocol::head_tuning:
      run.model = std::make_unique<Classifier>(std::move(bb), zero_dense(repr, classes), TuneScope::head);
      break;
    case Protocol::full_finetune:
      run.model = std::make_unique<Classifier>(std::move(bb), zero_dense(repr, classes), TuneScope::full);
      break;
    case Protocol::bias_tuning:
      run.model = std::make_unique<Classifier>(std::move(bb), zero_dense(repr, classes), TuneScope::bias);
      break;
    case Protocol::lion: {
      Rng rng = Rng(cfg.seed).split("lion-init");
      run.model = std::make_unique<PromptModel>(std::move(bb), classes, rng, cfg.lion);
      opt = cfg.lion_opt;
      break;
    }
  }

  run.log = robust::train(*run.model, train, opt, cfg.train);
  const auto t1 = std::chrono::steady_clock::now();

  run.result.protocol = protocol;
  run.result.accuracy = accuracy(*run.model, test);
  run.result.trainable_params = count_scalars(run.model->trainable_params());
  run.result.epochs = static_cast<int>(run.log.epochs.size());
  run.result.wall_time = std::chrono::duration<double>(t1 - t0).count();
  return run;
}

// ---------------------------------------------------------------------------

namespace {

// Row-major dense helpers for the small two-layer model; samples are rows.
using Mat = std::vector<double>;

struct TwoLayer {
  std::size_t d, k;
  Mat W;  // k x d
  Mat v;  // k
};

// Pre-activations W x_i for every sample, stored n x k.
Mat hidden_pre(const TwoLayer& m, const Mat& X, std::size_t n) {
  Mat h(n * m.k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m.k; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < m.d; ++c) s += m.W[j * m.d + c] * X[i * m.d + c];
      h[i * m.k + j] = s;
    }
  }
  return h;
}

// Mean squared error of v^T relu(B h_i) against y.
double feature_loss(const Mat& feats, const Mat& v, const Mat& y, std::size_t k) {
  double total = 0.0;
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < n; ++i) {
    double p = 0.0;
    for (std::size_t j = 0; j < k; ++j) p += v[j] * feats[i * k + j];
    total += (p - y[i]) * (p - y[i]);
  }
  return total / static_cast<double>(n);
}

Mat relu_of(Mat h) {
  for (double& x : h) x = std::max(x, 0.0);
  return h;
}

// Largest eigenvalue of (1/n) F^T F via the shared power iteration.
double gram_top(const Mat& F, std::size_t n, std::size_t cols) {
  Tensor t({n, cols}, F);
  const double s = linalg::spectral_norm(t, 2000, 1e-12).sigma_max;
  return s * s / static_cast<double>(n);
}

// Gradient descent on v with fixed features. Least squares in v is convex,
// so a 1/L step makes monotone progress.
double fit_head(const Mat& feats, Mat v, const Mat& y, std::size_t k, int max_iters) {
  const std::size_t n = y.size();
  const double top = gram_top(feats, n, k);
  if (top == 0.0) return feature_loss(feats, v, y, k);  // nothing to learn from
  const double lr = 1.0 / (2.0 * top);
  Mat g(k);
  for (int it = 0; it < max_iters; ++it) {
    std::fill(g.begin(), g.end(), 0.0);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < k; ++j) p += v[j] * feats[i * k + j];
      const double r = p - y[i];
      loss += r * r;
      for (std::size_t j = 0; j < k; ++j) g[j] += 2.0 * r * feats[i * k + j];
    }
    if (loss / static_cast<double>(n) < 1e-10) break;
    for (std::size_t j = 0; j < k; ++j) v[j] -= lr * g[j] / static_cast<double>(n);
  }
  return feature_loss(feats, v, y, k);
}

// Gradient descent on W with v fixed, inputs X (n x d).
double fit_first_layer(TwoLayer m, const Mat& X, const Mat& y, int max_iters) {
  const std::size_t n = y.size();
  double vv = 0.0;
  for (double a : m.v) vv += a * a;
  const double lr = 1.0 / (2.0 * vv * gram_top(X, n, m.d));
  Mat g(m.k * m.d);
  double loss = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    const Mat h = hidden_pre(m, X, n);
    std::fill(g.begin(), g.end(), 0.0);
    loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double p = 0.0;
      for (std::size_t j = 0; j < m.k; ++j) p += m.v[j] * std::max(h[i * m.k + j], 0.0);
      const double r = p - y[i];
      loss += r * r;
      for (std::size_t j = 0; j < m.k; ++j) {
        if (h[i * m.k + j] <= 0.0) continue;
        const double coef = 2.0 * r * m.v[j];
        for (std::size_t c = 0; c < m.d; ++c) g[j * m.d + c] += coef * X[i * m.d + c];
      }
    }
    loss /= static_cast<double>(n);
    if (loss < 1e-10) break;
    for (std::size_t q = 0; q < g.size(); ++q) m.W[q] -= lr * g[q] / static_cast<double>(n);
  }
  return feature_loss(relu_of(hidden_pre(m, X, n)), m.v, y, m.k);
}

}  // namespace

bool Prop1Report::asymmetry_confirmed() const noexcept {
  if (output_side_losses.empty()) return false;
  const double worst_out = *std::min_element(output_side_losses.begin(), output_side_losses.end());
  return input_side_loss <= 1e-3 && control_loss <= 1e-3 && worst_out >= 0.5;
}

Prop1Report verify_proposition1(std::uint64_t seed, const Prop1Config& cfg) {
  if (cfg.dim == 0 || cfg.width == 0 || cfg.samples < cfg.dim) throw ArgumentError("degenerate problem size");
  if (cfg.restarts < 1 || cfg.max_iters < 1) throw ArgumentError("restarts and max_iters must be >= 1");
  const std::size_t d = cfg.dim, k = cfg.width, n = cfg.samples;
  const Rng root = Rng(seed).split("prop1");

  // Positive inputs and positive weights keep every pre-activation positive.
  Rng xr = root.split("inputs");
  Mat X(n * d);
  for (double& x : X) x = xr.uniform(0.5, 1.5);
  Rng wr = root.split("teacher");
  TwoLayer teacher{d, k, Mat(k * d), Mat(k)};
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < d; ++c) teacher.W[j * d + c] = wr.uniform(0.1, 0.4) + (j % d == c ? 1.0 : 0.0);
  }
  for (double& a : teacher.v) a = wr.uniform(0.5, 1.5);
  const Mat feats = relu_of(hidden_pre(teacher, X, n));
  Mat y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) y[i] += teacher.v[j] * feats[i * k + j];
  }
  const double ymin = *std::min_element(y.begin(), y.end());
  if (ymin < 1.0) {
    for (double& t : y) t /= ymin;
  }

  Prop1Report rep;
  rep.min_target = *std::min_element(y.begin(), y.end());

  // Pretraining: the readout by least squares on the fixed features.
  const Tensor v_fit = linalg::lstsq(Tensor({n, k}, feats), Tensor::vector(y));
  TwoLayer pre{d, k, teacher.W, Mat(v_fit.data().begin(), v_fit.data().end())};
  rep.pretrain_loss = feature_loss(feats, pre.v, y, k);
  if (!(rep.pretrain_loss < 1e-6)) {
    throw StateError("pretraining did not reach zero loss (" + std::to_string(rep.pretrain_loss) + ")");
  }

  // Input-side prompt: x -> A x; only W is retrained.
  const ShiftSpec shift = make_shift(ShiftKind::invertible_linear, d, root.split("A").key(), cfg.shift_strength);
  Mat AX(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += shift.A(r, c) * X[i * d + c];
      AX[i * d + r] = s;
    }
  }
  {
    const Tensor w_oracle = matmul(Tensor({k, d}, pre.W), linalg::inverse(shift.A));
    TwoLayer oracle{d, k, Mat(w_oracle.data().begin(), w_oracle.data().end()), pre.v};
    rep.oracle_input_loss = feature_loss(relu_of(hidden_pre(oracle, AX, n)), oracle.v, y, k);
  }
  rep.input_side_loss = fit_first_layer(pre, AX, y, cfg.max_iters);

  // Output-side prompt z -> B z with B = -I, and the B = I control; only v
  // is retrained, from random restarts.
  Mat z_neg(n * k), z_pos(n * k);
  {
    const Mat z = hidden_pre(pre, X, n);
    for (std::size_t q = 0; q < z.size(); ++q) {
      z_neg[q] = std::max(-z[q], 0.0);
      z_pos[q] = std::max(z[q], 0.0);
    }
  }
  rep.control_loss = std::numeric_limits<double>::infinity();
  const Rng rr = root.split("restarts");
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng init = rr.split(static_cast<std::uint64_t>(r));
    Mat v0(k);
    for (double& a : v0) a = init.uniform(-1.0, 1.0);
    rep.output_side_losses.push_back(fit_head(z_neg, v0, y, k, cfg.max_iters));
    rep.control_loss = std::min(rep.control_loss, fit_head(z_pos, v0, y, k, cfg.max_iters));
  }
  rep.output_side_loss = *std::min_element(rep.output_side_losses.begin(), rep.output_side_losses.end());
  return rep;
}

}  // namespace lion::harness
