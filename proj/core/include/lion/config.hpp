#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lion/harness.hpp"
#include "lion/prompt_model.hpp"
#include "lion/robust_opt.hpp"

namespace lion {

/// Every knob a command reads. Mirrors the CLI flags one-to-one (dashes in
/// flag names become underscores in config keys).
struct RunConfig {
  std::uint64_t seed = 0;

  // robust optimizer
  double tau = 0.4;
  double eta = 0.1;
  std::string rule = "soft_threshold";  // or raw_sign
  std::string threshold = "quantile";   // or absolute
  std::string cadence = "step";         // or epoch
  double baseline_eta = 0.1;

  // equilibrium solver
  double tol = 1e-8;
  int max_iters = 500;
  int anderson_depth = 5;
  double damping = 1.0;

  // prompt blocks
  double kappa = 0.9;
  int layers = 1;
  std::string activation = "tanh";
  bool two_pass = true;

  // task
  std::string protocol = "lion";
  std::string dataset = "blobs";  // or glyphs
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t train_size = 400;
  std::size_t test_size = 400;
  double blob_sigma = 0.3;
  double blob_separation = 4.0;
  std::string shift = "invertible_linear";
  double shift_strength = 1.0;
  double ir = 1.0;        // long-tail imbalance ratio; 1 disables
  std::size_t shots = 0;  // few-shot samples per class; 0 disables

  // training
  int epochs = 200;
  std::size_t batch_size = 32;
  int patience = 20;

  // backbone pretraining
  std::size_t hidden = 512;
  std::size_t repr = 8;
  double pretrain_eta = 0.1;
  int pretrain_epochs = 200;
  double target_accuracy = 0.95;

  // gradcheck
  int cases = 20;

  // artifacts
  std::string out = "lion_out";  // output directory
  std::string backbone;          // backbone checkpoint; default <out>/backbone.ckpt
  std::string model;             // tuned checkpoint; default <out>/<protocol>.ckpt

  /// Range and enumeration checks; throws ConfigError naming the key.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Known keys in serialization order.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value; throws ConfigError on an unknown
/// key or unparsable value. Does not run validate().
void set_config_value(RunConfig& c, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& c, std::string_view key);

/// `key = value` lines; `#` starts a comment; blank lines ignored. Starts
/// from `base`, so flags parsed later can override file values.
RunConfig parse_config(std::string_view text, RunConfig base = {});
/// Every key, one per line, shortest round-trip number formatting.
std::string serialize_config(const RunConfig& c);

/// Derived option bundles.
robust::OptState opt_state(const RunConfig& c);
LionOptions lion_options(const RunConfig& c);
harness::ProtocolConfig protocol_config(const RunConfig& c);
harness::PretrainConfig pretrain_config(const RunConfig& c);

}  // namespace lion
