#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lion/model.hpp"
#include "lion/tensor.hpp"

namespace lion::robust {

/// How non-crucial parameters are shrunk.
enum class ShrinkRule {
  soft_threshold,  // sign(t) * max(|t| - eta, 0)
  raw_sign,        // t - eta * sign(t)
};

/// How tau turns scores into a cutoff.
enum class ThresholdMode {
  quantile,  // tau is the fraction of scalars ranked below the cutoff
  absolute,  // tau is the score cutoff itself
};

std::string to_string(ShrinkRule r);
ShrinkRule shrink_rule_from_string(const std::string& s);

struct OptState {
  double eta = 0.1;
  double tau = 0.4;
  int repartition_every = 1;  // steps between partition refreshes
  bool repartition_per_epoch = false;  // refresh once at the start of each epoch instead
  ShrinkRule rule = ShrinkRule::soft_threshold;
  ThresholdMode mode = ThresholdMode::quantile;
  /// false: every parameter takes the plain gradient step (no scoring).
  bool robust = true;

  void validate() const;
};

/// Crucial / non-crucial split of the flattened trainable scalars.
struct CriticalityPartition {
  std::vector<double> scores;
  std::vector<bool> crucial_mask;
  std::vector<bool> noncrucial_mask;
  double tau = 0.0;
  double threshold_value = 0.0;

  std::size_t size() const noexcept { return scores.size(); }
  std::size_t crucial_count() const noexcept;
  double crucial_fraction() const noexcept;
};

/// |dL/dtheta * theta| per scalar, flattened in parameter order.
/// Throws StateError if a gradient buffer is missing or misshapen.
std::vector<double> criticality_scores(std::span<const ParamRef> params);

/// Quantile mode: cutoff = k-th smallest score with k = ceil(tau * M)
/// (nearest rank, k >= 1); scores >= cutoff are crucial, so ties go crucial.
/// Throws ArgumentError on empty or non-finite scores.
CriticalityPartition partition(std::vector<double> scores, double tau,
                               ThresholdMode mode = ThresholdMode::quantile);

/// Crucial: theta -= eta * grad. Non-crucial: shrink per `state.rule`.
/// Throws StateError when the partition does not align with `params`.
void step(std::span<const ParamRef> params, const CriticalityPartition& part, const OptState& state);

/// theta -= eta * grad for every scalar.
void sgd_step(std::span<const ParamRef> params, double eta);

/// Mean |theta| over the scalars flagged non-crucial (0 if none).
double noncrucial_mean_abs(std::span<const ParamRef> params, const CriticalityPartition& part);

struct TrainConfig {
  int epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  /// Stop once the epoch loss has not improved by `plateau_rel_tol` for this
  /// many epochs; 0 disables early stopping.
  int plateau_patience = 20;
  double plateau_rel_tol = 1e-4;
  /// Keep a per-step record in the log.
  bool record_steps = false;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  bool repartitioned = false;
  double loss = 0.0;
  double crucial_fraction = 1.0;
  double noncrucial_mean_abs_before = 0.0;
  double noncrucial_mean_abs_after = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double crucial_fraction = 1.0;      // mean over the epoch's steps
  double noncrucial_mean_abs = 0.0;   // at the end of the epoch
  std::vector<std::pair<std::string, double>> diagnostics;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::vector<StepRecord> steps;
  int total_steps = 0;
  bool early_stopped = false;
};

/// Minibatch loop: forward, loss, backward into the model's trainable set,
/// score, partition (refreshed per the state's cadence), step, project.
/// Throws NumericError naming the epoch and step on a non-finite loss.
TrainLog train(TrainableModel& model, const Dataset& data, const OptState& state, const TrainConfig& cfg);

}  // namespace lion::robust
