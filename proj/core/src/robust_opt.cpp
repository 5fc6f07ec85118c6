#include "lion/robust_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lion/errors.hpp"
#include "lion/rng.hpp"

namespace lion::robust {

std::string to_string(ShrinkRule r) { return r == ShrinkRule::soft_threshold ? "soft_threshold" : "raw_sign"; }

ShrinkRule shrink_rule_from_string(const std::string& s) {
  if (s == "soft_threshold") return ShrinkRule::soft_threshold;
  if (s == "raw_sign") return ShrinkRule::raw_sign;
  throw ArgumentError("unknown shrink rule '" + s + "'");
}

void OptState::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ArgumentError("eta must be finite and positive");
  if (mode == ThresholdMode::quantile && !(tau > 0.0 && tau < 1.0)) {
    throw ArgumentError("tau must lie in (0,1) in quantile mode");
  }
  if (mode == ThresholdMode::absolute && !(tau >= 0.0)) throw ArgumentError("absolute tau must be >= 0");
  if (repartition_every < 1) throw ArgumentError("repartition_every must be >= 1");
}

std::size_t CriticalityPartition::crucial_count() const noexcept {
  return static_cast<std::size_t>(std::count(crucial_mask.begin(), crucial_mask.end(), true));
}

double CriticalityPartition::crucial_fraction() const noexcept {
  return scores.empty() ? 1.0 : static_cast<double>(crucial_count()) / static_cast<double>(scores.size());
}

std::vector<double> criticality_scores(std::span<const ParamRef> params) {
  std::vector<double> scores;
  scores.reserve(count_scalars(params));
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) {
      throw StateError("parameter '" + p.name + "' has no gradient buffer of matching size");
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) scores.push_back(std::abs(p.grad[i] * p.value[i]));
  }
  return scores;
}

CriticalityPartition partition(std::vector<double> scores, double tau, ThresholdMode mode) {
  if (scores.empty()) throw ArgumentError("partition of an empty score vector");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ArgumentError("partition: non-finite criticality score");
  }
  CriticalityPartition part;
  part.tau = tau;
  if (mode == ThresholdMode::quantile) {
    if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("tau must lie in (0,1) in quantile mode");
    const std::size_t m = scores.size();
    // shave a few ulps so that e.g. 0.4 * 5 does not round up to k = 3
    const double raw = std::ceil(tau * static_cast<double>(m) * (1.0 - 1e-12));
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(raw), 1, m);
    std::vector<double> sorted = scores;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    part.threshold_value = sorted[k - 1];
  } else {
    part.threshold_value = tau;
  }
  part.crucial_mask.resize(scores.size());
  part.noncrucial_mask.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool crucial = scores[i] >= part.threshold_value;
    part.crucial_mask[i] = crucial;
    part.noncrucial_mask[i] = !crucial;
  }
  part.scores = std::move(scores);
  return part;
}

void step(std::span<const ParamRef> params, const CriticalityPartition& part, const OptState& state) {
  if (count_scalars(params) != part.size() || part.crucial_mask.size() != part.size()) {
    throw StateError("partition covers " + std::to_string(part.size()) + " scalars but parameters hold " +
                     std::to_string(count_scalars(params)));
  }
  const double eta = state.eta;
  std::size_t flat = 0;
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) throw StateError("parameter '" + p.name + "' lacks gradients");
    for (std::size_t i = 0; i < p.value.size(); ++i, ++flat) {
      double& t = p.value[i];
      if (part.crucial_mask[flat]) {
        t -= eta * p.grad[i];
      } else if (state.rule == ShrinkRule::soft_threshold) {
        const double mag = std::max(std::abs(t) - eta, 0.0);
        t = std::copysign(mag, t);
        if (mag == 0.0) t = 0.0;
      } else {
        const double sign = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
        t -= eta * sign;
      }
    }
  }
}

void sgd_step(std::span<const ParamRef> params, double eta) {
  for (const auto& p : params) {
    if (p.grad.size() != p.value.size()) throw StateError("parameter '" + p.name + "' lacks gradients");
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= eta * p.grad[i];
  }
}

double noncrucial_mean_abs(std::span<const ParamRef> params, const CriticalityPartition& part) {
  double total = 0.0;
  std::size_t n = 0, flat = 0;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i, ++flat) {
      if (flat < part.noncrucial_mask.size() && part.noncrucial_mask[flat]) {
        total += std::abs(p.value[i]);
        ++n;
      }
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (batch_size == 0) throw ArgumentError("batch_size must be >= 1");
  if (plateau_patience < 0) throw ArgumentError("plateau_patience must be >= 0");
}

TrainLog train(TrainableModel& model, const Dataset& data, const OptState& state, const TrainConfig& cfg) {
  state.validate();
  cfg.validate();
  data.validate();

  TrainLog log;
  const std::vector<ParamRef> params = model.trainable_params();
  check_unique_names(params);
  const Rng order_rng = Rng(cfg.seed).split("batch-order");

  std::vector<std::size_t> order(data.size());
  CriticalityPartition part;
  bool have_partition = false;
  int steps_since_partition = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng epoch_rng = order_rng.split(static_cast<std::uint64_t>(epoch));
    epoch_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    double crucial_sum = 0.0;
    std::size_t batches = 0;
    if (state.repartition_per_epoch) have_partition = false;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const double loss = model.loss_and_grad(data, batch);
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(log.total_steps));
      }
      loss_sum += loss * static_cast<double>(batch.size());

      StepRecord rec;
      rec.step = log.total_steps;
      rec.loss = loss;
      if (state.robust) {
        const bool refresh = !have_partition ||
                             (!state.repartition_per_epoch && steps_since_partition >= state.repartition_every);
        if (refresh) {
          part = partition(criticality_scores(params), state.tau, state.mode);
          have_partition = true;
          steps_since_partition = 0;
          rec.repartitioned = true;
        }
        rec.crucial_fraction = part.crucial_fraction();
        rec.noncrucial_mean_abs_before = noncrucial_mean_abs(params, part);
        step(params, part, state);
        ++steps_since_partition;
      } else {
        sgd_step(params, state.eta);
      }
      model.project();
      if (state.robust) rec.noncrucial_mean_abs_after = noncrucial_mean_abs(params, part);
      crucial_sum += rec.crucial_fraction;
      if (cfg.record_steps) log.steps.push_back(rec);
      ++log.total_steps;
      ++batches;
    }

    EpochLog e;
    e.epoch = epoch;
    e.loss = loss_sum / static_cast<double>(data.size());
    e.accuracy = accuracy(model, data);
    e.crucial_fraction = batches ? crucial_sum / static_cast<double>(batches) : 1.0;
    e.noncrucial_mean_abs = state.robust && have_partition ? noncrucial_mean_abs(params, part) : 0.0;
    e.diagnostics = model.diagnostics();
    log.epochs.push_back(std::move(e));

    if (cfg.plateau_patience > 0) {
      const double l = log.epochs.back().loss;
      if (l < best_loss * (1.0 - cfg.plateau_rel_tol)) {
        best_loss = l;
        stale_epochs = 0;
      } else if (++stale_epochs >= cfg.plateau_patience) {
        log.early_stopped = true;
        break;
      }
    }
  }
  return log;
}

}  // namespace lion::robust
