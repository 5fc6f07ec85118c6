#include "lion/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "lion/errors.hpp"

namespace lion {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out)) {
    throw ConfigError(std::string(key), "expected a finite number, got '" + std::string(v) + "'");
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(std::string(key), "expected an integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(v) + "'");
}

std::string fmt(double d) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

template <typename Int>
std::string fmt_int(Int v) {
  return std::to_string(v);
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LION_REAL(k) \
  Field { #k, [](RunConfig& c, std::string_view v) { c.k = parse_double(#k, v); }, [](const RunConfig& c) { return fmt(c.k); } }
#define LION_INT(k) \
  Field { #k, [](RunConfig& c, std::string_view v) { c.k = parse_int<decltype(c.k)>(#k, v); }, [](const RunConfig& c) { return fmt_int(c.k); } }
#define LION_STR(k) \
  Field { #k, [](RunConfig& c, std::string_view v) { c.k = std::string(v); }, [](const RunConfig& c) { return c.k; } }
#define LION_BOOL(k)                                                           \
  Field {                                                                      \
    #k, [](RunConfig& c, std::string_view v) { c.k = parse_bool(#k, v); },     \
        [](const RunConfig& c) { return std::string(c.k ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      LION_INT(seed),          LION_REAL(tau),           LION_REAL(eta),
      LION_STR(rule),          LION_STR(threshold),      LION_STR(cadence),
      LION_REAL(baseline_eta), LION_REAL(tol),           LION_INT(max_iters),
      LION_INT(anderson_depth), LION_REAL(damping),      LION_REAL(kappa),
      LION_INT(layers),        LION_STR(activation),     LION_BOOL(two_pass),
      LION_STR(protocol),      LION_STR(dataset),        LION_INT(classes),
      LION_INT(dim),           LION_INT(train_size),     LION_INT(test_size),
      LION_REAL(blob_sigma),   LION_REAL(blob_separation), LION_STR(shift),
      LION_REAL(shift_strength), LION_REAL(ir),          LION_INT(shots),
      LION_INT(epochs),        LION_INT(batch_size),     LION_INT(patience),
      LION_INT(hidden),        LION_INT(repr),           LION_REAL(pretrain_eta),
      LION_INT(pretrain_epochs), LION_REAL(target_accuracy), LION_INT(cases),
      LION_STR(out),           LION_STR(backbone),       LION_STR(model),
  };
  return f;
}

#undef LION_REAL
#undef LION_INT
#undef LION_STR
#undef LION_BOOL

const Field& field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError(std::string(key), "unknown key");
}

void require(bool ok, const char* key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

template <typename F>
void require_parse(const char* key, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ArgumentError& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (threshold == "quantile") {
    require(tau > 0.0 && tau < 1.0, "tau", "must lie in (0, 1) in quantile mode");
  } else {
    require(threshold == "absolute", "threshold", "must be quantile or absolute");
    require(tau >= 0.0, "tau", "must be >= 0 in absolute mode");
  }
  require(eta > 0.0, "eta", "must be > 0");
  require_parse("rule", [&] { robust::shrink_rule_from_string(rule); });
  require(cadence == "step" || cadence == "epoch", "cadence", "must be step or epoch");
  require(baseline_eta > 0.0, "baseline_eta", "must be > 0");
  require(tol > 0.0, "tol", "must be > 0");
  require(max_iters >= 1, "max_iters", "must be >= 1");
  require(anderson_depth >= 0, "anderson_depth", "must be >= 0");
  require(damping > 0.0 && damping <= 1.0, "damping", "must lie in (0, 1]");
  require(kappa > 0.0 && kappa < 1.0, "kappa", "must lie in (0, 1)");
  require(layers >= 1, "layers", "must be >= 1");
  require_parse("activation", [&] { activation_from_string(activation); });
  require_parse("protocol", [&] { harness::protocol_from_string(protocol); });
  require(dataset == "blobs" || dataset == "glyphs", "dataset", "must be blobs or glyphs");
  require(classes >= 2, "classes", "must be >= 2");
  require(dim >= 1, "dim", "must be >= 1");
  require(train_size >= 10 * classes, "train_size", "must be >= 10 * classes");
  require(test_size >= 10 * classes, "test_size", "must be >= 10 * classes");
  require(blob_sigma > 0.0, "blob_sigma", "must be > 0");
  require(blob_separation > 0.0, "blob_separation", "must be > 0");
  require_parse("shift", [&] { harness::shift_kind_from_string(shift); });
  require(shift_strength >= 0.0, "shift_strength", "must be >= 0");
  require(ir >= 1.0, "ir", "must be >= 1");
  require(epochs >= 0, "epochs", "must be >= 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(patience >= 0, "patience", "must be >= 0");
  require(hidden >= 1, "hidden", "must be >= 1");
  require(repr >= 1, "repr", "must be >= 1");
  require(pretrain_eta > 0.0, "pretrain_eta", "must be > 0");
  require(pretrain_epochs >= 1, "pretrain_epochs", "must be >= 1");
  require(target_accuracy >= 0.0 && target_accuracy <= 1.0, "target_accuracy", "must lie in [0, 1]");
  require(cases >= 1, "cases", "must be >= 1");
  require(!out.empty(), "out", "must not be empty");
  // Paths must survive a trip through the line format unchanged.
  const auto plain = [](const std::string& s) {
    return s.find_first_of("#\n") == std::string::npos && trim(s) == std::string_view(s);
  };
  require(plain(out), "out", "must not contain '#', newlines or edge whitespace");
  require(plain(backbone), "backbone", "must not contain '#', newlines or edge whitespace");
  require(plain(model), "model", "must not contain '#', newlines or edge whitespace");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  field(key).set(c, trim(value));
}

std::string get_config_value(const RunConfig& c, std::string_view key) { return field(key).get(c); }

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(trim(line)), "line " + std::to_string(line_no) + " lacks '='");
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(c) + "\n";
  return out;
}

robust::OptState opt_state(const RunConfig& c) {
  robust::OptState s;
  s.eta = c.eta;
  s.tau = c.tau;
  s.rule = robust::shrink_rule_from_string(c.rule);
  s.mode = c.threshold == "absolute" ? robust::ThresholdMode::absolute : robust::ThresholdMode::quantile;
  s.repartition_per_epoch = c.cadence == "epoch";
  return s;
}

LionOptions lion_options(const RunConfig& c) {
  LionOptions o;
  o.kappa = c.kappa;
  o.layers = c.layers;
  o.activation = activation_from_string(c.activation);
  o.two_pass = c.two_pass;
  o.solver.tol = c.tol;
  o.solver.max_iters = c.max_iters;
  o.solver.anderson_depth = c.anderson_depth;
  o.solver.damping = c.damping;
  return o;
}

harness::ProtocolConfig protocol_config(const RunConfig& c) {
  harness::ProtocolConfig p;
  p.train.epochs = c.epochs;
  p.train.batch_size = c.batch_size;
  p.train.seed = c.seed;
  p.train.plateau_patience = c.patience;
  p.baseline_eta = c.baseline_eta;
  p.lion_opt = opt_state(c);
  p.lion = lion_options(c);
  p.seed = c.seed;
  return p;
}

harness::PretrainConfig pretrain_config(const RunConfig& c) {
  harness::PretrainConfig p;
  p.hidden = c.hidden;
  p.repr = c.repr;
  p.eta = c.pretrain_eta;
  p.target_accuracy = c.target_accuracy;
  p.train.epochs = c.pretrain_epochs;
  p.train.batch_size = c.batch_size;
  p.train.seed = c.seed;
  p.train.plateau_patience = c.patience;
  p.seed = c.seed;
  return p;
}

}  // namespace lion
