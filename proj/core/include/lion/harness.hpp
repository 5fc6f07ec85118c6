#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lion/backbone.hpp"
#include "lion/model.hpp"
#include "lion/prompt_model.hpp"
#include "lion/robust_opt.hpp"
#include "lion/tensor.hpp"

namespace lion::harness {

// ---------------------------------------------------------------------------
// Synthetic data

struct BlobOptions {
  double sigma = 0.3;       // per-coordinate noise
  double separation = 4.0;  // minimum centre distance, in units of sigma
};

/// Gaussian clusters, one per class, with balanced class sizes (counts
/// differ by at most one). Centres depend only on `seed`; samples also on
/// `split`. Requires C >= 2 and N >= 10 C.
Dataset make_blobs(std::size_t classes, std::size_t dim, std::size_t n, std::uint64_t seed,
                   Split split = Split::train, const BlobOptions& opts = {});

/// Procedural 8x8 binary glyphs (three random strokes per class prototype,
/// independent pixel flips per sample), flattened to 64 inputs.
Dataset make_glyphs(std::size_t classes, std::size_t n, std::uint64_t seed, Split split = Split::train,
                    double flip_prob = 0.05);

enum class ShiftKind { none, invertible_linear, rotation, noise };

std::string to_string(ShiftKind k);
ShiftKind shift_kind_from_string(const std::string& s);

/// Input-space domain shift x -> A x (+ optional Gaussian noise).
struct ShiftSpec {
  ShiftKind kind = ShiftKind::none;
  Tensor A;  // [d x d]
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Throws ArgumentError when A is not square or |det A| <= 1e-6.
  void validate(std::size_t dim) const;
};

/// Samples a shift. invertible_linear: A = I + strength * G / sqrt(d) with
/// G standard normal, rejection-sampled until |det A| > 1e-6.
/// rotation: random orthogonal A. noise: A = I with `strength` noise.
ShiftSpec make_shift(ShiftKind kind, std::size_t dim, std::uint64_t seed, double strength = 1.0);

Dataset apply_shift(const Dataset& ds, const ShiftSpec& spec);

/// Exponential long-tail profile: class c keeps round(N_max * IR^(-c/(C-1)))
/// samples chosen by a seed-deterministic shuffle. Throws ArgumentError if
/// IR < 1 or a class would be emptied.
Dataset resample_longtail(const Dataset& ds, double imbalance_ratio);

/// Exactly `shots` samples per class (seed-deterministic), in original order.
Dataset resample_fewshot(const Dataset& ds, std::size_t shots);

// ---------------------------------------------------------------------------
// Protocols

enum class Protocol { head_tuning, full_finetune, bias_tuning, lion };

std::string to_string(Protocol p);
/// Throws ArgumentError("unsupported protocol ...") for anything else.
Protocol protocol_from_string(const std::string& s);

struct PretrainConfig {
  std::size_t hidden = 512;
  std::size_t repr = 8;
  double eta = 0.1;
  double target_accuracy = 0.95;
  robust::TrainConfig train{.epochs = 200, .batch_size = 32, .seed = 0, .plateau_patience = 20};
  std::uint64_t seed = 0;
};

struct Pretrained {
  Backbone backbone;
  Dense head;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  int epochs = 0;
  bool met_target = false;
};

/// Trains a fresh tanh MLP backbone and head on the source task with SGD.
Pretrained pretrain_backbone(const Dataset& train, const Dataset& test, const PretrainConfig& cfg);

struct ProtocolConfig {
  robust::TrainConfig train{.epochs = 200, .batch_size = 32, .seed = 0, .plateau_patience = 20};
  double baseline_eta = 0.1;  // plain SGD for head / bias / full
  robust::OptState lion_opt{};
  LionOptions lion{};
  std::uint64_t seed = 0;  // prompt initialization
};

struct ProtocolResult {
  Protocol protocol = Protocol::head_tuning;
  double accuracy = 0.0;  // held-out split
  std::size_t trainable_params = 0;
  int epochs = 0;
  double wall_time = 0.0;  // seconds
};

struct ProtocolRun {
  ProtocolResult result;
  std::unique_ptr<TrainableModel> model;
  robust::TrainLog log;
};

/// Tunes a copy of `backbone` on `train` under `protocol` and scores the
/// result on `test`. The test split never reaches a gradient.
ProtocolRun run_protocol(Protocol protocol, const Backbone& backbone, const Dataset& train, const Dataset& test,
                         const ProtocolConfig& cfg);

// ---------------------------------------------------------------------------
// Input-side vs output-side prompts on f(x) = v^T relu(W x)

struct Prop1Config {
  std::size_t dim = 6;
  std::size_t width = 4;
  std::size_t samples = 256;
  int restarts = 10;
  int max_iters = 200000;
  double shift_strength = 0.2;
};

struct Prop1Report {
  double pretrain_loss = 0.0;
  double oracle_input_loss = 0.0;  // loss of v^ with W = W^ A^-1
  double input_side_loss = 0.0;    // after retraining W on A x
  std::vector<double> output_side_losses;  // per restart, B = -I
  double output_side_loss = 0.0;   // min over restarts
  double control_loss = 0.0;       // B = I, min over restarts
  double min_target = 0.0;

  bool asymmetry_confirmed() const noexcept;
};

/// Builds a zero-loss teacher with entrywise-positive pre-activations and
/// targets >= 1, then (a) retrains W against x_pro = A x, (b) retrains v
/// against z_pro = -z over random restarts, (c) repeats (b) with B = I.
/// Squared loss throughout. Throws StateError if the teacher fit fails.
Prop1Report verify_proposition1(std::uint64_t seed, const Prop1Config& cfg = {});

}  // namespace lion::harness
