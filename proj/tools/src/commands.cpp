#include "lion_cli/commands.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <ostream>

#include "lion/backbone.hpp"
#include "lion/checkpoint.hpp"
#include "lion/errors.hpp"
#include "lion/gradcheck.hpp"
#include "lion/harness.hpp"
#include "lion/prompt_model.hpp"
#include "lion/report.hpp"
#include "lion/rng.hpp"

namespace lion::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ArtifactError("cannot create output directory '" + dir.string() + "'");
}

void write_text(const fs::path& path, const std::string& text) { ckpt::write_file_atomic(path, text); }

std::string run_id(const RunConfig& c, const std::string& protocol) {
  return protocol + "-" + c.dataset + "-s" + std::to_string(c.seed);
}

std::size_t dense_params(const Dense& d) { return d.param_count(); }

}  // namespace

TaskData make_task(const RunConfig& c) {
  TaskData t;
  if (c.dataset == "glyphs") {
    t.source_train = harness::make_glyphs(c.classes, c.train_size, c.seed, Split::train);
    t.source_test = harness::make_glyphs(c.classes, c.test_size, c.seed, Split::test);
  } else {
    const harness::BlobOptions bo{.sigma = c.blob_sigma, .separation = c.blob_separation};
    t.source_train = harness::make_blobs(c.classes, c.dim, c.train_size, c.seed, Split::train, bo);
    t.source_test = harness::make_blobs(c.classes, c.dim, c.test_size, c.seed, Split::test, bo);
  }
  const auto kind = harness::shift_kind_from_string(c.shift);
  const std::uint64_t shift_seed = Rng(c.seed).split("target-shift").key();
  const harness::ShiftSpec shift = harness::make_shift(kind, t.source_train.dim(), shift_seed, c.shift_strength);
  t.target_train = harness::apply_shift(t.source_train, shift);
  t.target_test = harness::apply_shift(t.source_test, shift);
  if (c.ir > 1.0) t.target_train = harness::resample_longtail(t.target_train, c.ir);
  if (c.shots > 0) t.target_train = harness::resample_fewshot(t.target_train, c.shots);
  return t;
}

std::string dataset_label(const RunConfig& c) {
  std::string s = c.dataset + "/" + c.shift;
  if (c.ir > 1.0) s += "/ir" + shortest(c.ir);
  if (c.shots > 0) s += "/shots" + std::to_string(c.shots);
  return s;
}

fs::path backbone_path(const RunConfig& c) {
  return c.backbone.empty() ? fs::path(c.out) / "backbone.ckpt" : fs::path(c.backbone);
}

fs::path model_path(const RunConfig& c) {
  return c.model.empty() ? fs::path(c.out) / (c.protocol + ".ckpt") : fs::path(c.model);
}

int cmd_pretrain(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  const TaskData task = make_task(c);
  const harness::Pretrained pre =
      harness::pretrain_backbone(task.source_train, task.source_test, pretrain_config(c));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  out << "source " << c.dataset << "  train accuracy " << num(pre.train_accuracy) << "  test accuracy "
      << num(pre.test_accuracy) << "  epochs " << pre.epochs << "\n";
  if (!pre.met_target) {
    err << "pretrain: train accuracy " << num(pre.train_accuracy) << " is below the target "
        << num(c.target_accuracy) << " after " << pre.epochs << " epochs\n";
    return kCheckFailed;
  }
  ensure_dir(c.out);
  ckpt::save(ckpt::from_classifier(pre.backbone, pre.head), backbone_path(c));
  report::RunRecord rec{run_id(c, "pretrain"), "pretrain", c.dataset, c.seed, pre.test_accuracy,
                        pre.backbone.param_count() + dense_params(pre.head), pre.epochs, wall};
  write_text(fs::path(c.out) / "pretrain.csv", report::write_csv({rec}));
  write_text(fs::path(c.out) / "pretrain.cfg", serialize_config(c));
  out << "wrote " << backbone_path(c).string() << "\n";
  return kOk;
}

int cmd_tune(const RunConfig& c, std::ostream& out, std::ostream&) {
  const ckpt::Checkpoint backbone_ck = ckpt::load(backbone_path(c));
  const Backbone bb = ckpt::backbone_from(backbone_ck);
  const TaskData task = make_task(c);
  if (bb.input_dim() != task.target_train.dim()) {
    throw ConfigError("dim", "data dimension " + std::to_string(task.target_train.dim()) +
                                 " does not match the backbone input " + std::to_string(bb.input_dim()));
  }
  const auto protocol = harness::protocol_from_string(c.protocol);
  const harness::ProtocolRun run =
      harness::run_protocol(protocol, bb, task.target_train, task.target_test, protocol_config(c));

  ckpt::Checkpoint model_ck;
  if (const auto* pm = dynamic_cast<const PromptModel*>(run.model.get())) {
    model_ck = ckpt::from_prompt_model(*pm);
  } else {
    const auto& cls = dynamic_cast<const Classifier&>(*run.model);
    model_ck = ckpt::from_classifier(cls.backbone(), cls.head());
  }
  ensure_dir(c.out);
  if (model_path(c).has_parent_path()) ensure_dir(model_path(c).parent_path());
  ckpt::save(model_ck, model_path(c));

  const report::RunRecord rec{run_id(c, c.protocol),      c.protocol,
                              dataset_label(c),           c.seed,
                              run.result.accuracy,        run.result.trainable_params,
                              run.result.epochs,          run.result.wall_time};
  write_text(fs::path(c.out) / ("tune_" + c.protocol + ".csv"), report::write_csv({rec}));
  write_text(fs::path(c.out) / ("trace_" + c.protocol + ".csv"), report::trace_csv(run.log));
  write_text(fs::path(c.out) / ("tune_" + c.protocol + ".cfg"), serialize_config(c));

  out << "protocol " << c.protocol << "  dataset " << dataset_label(c) << "  train n=" << task.target_train.size()
      << "\n";
  out << "held-out accuracy " << num(run.result.accuracy) << "  trainable params " << run.result.trainable_params
      << "  epochs " << run.result.epochs << (run.log.early_stopped ? " (plateau)" : "") << "\n";
  if (!run.log.epochs.empty() && protocol == harness::Protocol::lion) {
    out << "epoch  loss      crucial  alpha1   alpha2\n";
    const std::size_t n = run.log.epochs.size();
    const std::size_t stride = std::max<std::size_t>(1, n / 10);
    for (std::size_t i = 0; i < n; ++i) {
      if (i % stride != 0 && i + 1 != n) continue;
      const auto& e = run.log.epochs[i];
      double a1 = 0.0, a2 = 0.0;
      for (const auto& [k, v] : e.diagnostics) {
        if (k == "alpha1") a1 = v;
        if (k == "alpha2") a2 = v;
      }
      char line[128];
      std::snprintf(line, sizeof line, "%5d  %.5f  %.4f   %.4f   %.4f\n", e.epoch, e.loss, e.crucial_fraction, a1, a2);
      out << line;
    }
  }
  out << "wrote " << model_path(c).string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& c, std::ostream& out, std::ostream&) {
  const ckpt::Checkpoint ck = ckpt::load(model_path(c));
  const TaskData task = make_task(c);
  std::unique_ptr<TrainableModel> model;
  std::size_t params = 0;
  if (ckpt::kind_of(ck) == ckpt::ModelKind::lion) {
    auto pm = std::make_unique<PromptModel>(ckpt::prompt_model_from(ck));
    params = pm->trainable_count();
    model = std::move(pm);
  } else {
    auto cls = std::make_unique<Classifier>(ckpt::backbone_from(ck), ckpt::head_from(ck), TuneScope::head);
    params = count_scalars(cls->trainable_params());
    model = std::move(cls);
  }
  if (model->num_classes() != task.target_test.num_classes) {
    throw ConfigError("classes", "model has " + std::to_string(model->num_classes()) + " classes, data has " +
                                     std::to_string(task.target_test.num_classes));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const double acc = accuracy(*model, task.target_test);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const report::RunRecord rec{run_id(c, c.protocol), c.protocol, dataset_label(c), c.seed, acc, params, 0, wall};
  ensure_dir(c.out);
  write_text(fs::path(c.out) / ("eval_" + c.protocol + ".csv"), report::write_csv({rec}));
  out << "model " << model_path(c).string() << "  held-out accuracy " << num(acc) << " (" << shortest(acc)
      << ")  params " << params << "\n";
  return kOk;
}

int cmd_gradcheck(const RunConfig& c, std::ostream& out, std::ostream& err) {
  gradcheck::Options o;
  o.cases = c.cases;
  o.seed = c.seed;
  o.kappa = c.kappa;
  o.solver.tol = c.tol;
  o.solver.max_iters = c.max_iters;
  o.solver.anderson_depth = c.anderson_depth;
  o.solver.damping = c.damping;
  const gradcheck::Summary s = gradcheck::run(o);

  out << "case  state  input  iters  fd_rel      unrolled_rel  status\n";
  for (const auto& r : s.cases) {
    char line[160];
    const char* status = !r.solver_converged ? "SOLVER" : (r.gradients_ok(o) ? "ok" : "GRAD");
    std::snprintf(line, sizeof line, "%4d  %5zu  %5zu  %5d  %-10s  %-12s  %s\n", r.index, r.state_dim, r.input_dim,
                  r.forward_iterations, r.solver_converged ? sci(r.fd_rel_error).c_str() : "-",
                  r.solver_converged ? sci(r.unrolled_rel_error).c_str() : "-", status);
    out << line;
  }
  if (s.solver_failures > 0) {
    const auto& first = *std::find_if(s.cases.begin(), s.cases.end(), [](const auto& r) { return !r.solver_converged; });
    err << "solver non-convergence in " << s.solver_failures << " of " << s.cases.size() << " cases (tol "
        << sci(c.tol) << ", max_iters " << c.max_iters << "); first: case " << first.index << ", residual "
        << sci(first.forward_residual) << " after " << first.forward_iterations << " iterations\n";
  }
  if (s.gradient_failures > 0) {
    const auto& w = s.cases[static_cast<std::size_t>(s.worst_case)];
    err << "gradient check failed in " << s.gradient_failures << " cases; worst case " << w.index << ": fd "
        << sci(w.fd_rel_error) << " (tol " << sci(o.fd_tol) << "), unrolled " << sci(w.unrolled_rel_error) << " (tol "
        << sci(o.unrolled_tol) << ")\n";
  }
  if (!s.passed()) return kCheckFailed;
  out << "all " << s.cases.size() << " cases within tolerance\n";
  return kOk;
}

int cmd_prop1(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const harness::Prop1Report r = harness::verify_proposition1(c.seed);
  out << "teacher fit loss      " << sci(r.pretrain_loss) << "\n";
  out << "input side, W=W^A^-1  " << sci(r.oracle_input_loss) << "\n";
  out << "input side, retrained " << sci(r.input_side_loss) << "\n";
  out << "output side B=-I, min " << sci(r.output_side_loss) << " over " << r.output_side_losses.size()
      << " restarts\n";
  out << "control B=I           " << sci(r.control_loss) << "\n";
  std::string csv = "metric,value\n";
  csv += "pretrain_loss," + shortest(r.pretrain_loss) + "\n";
  csv += "oracle_input_loss," + shortest(r.oracle_input_loss) + "\n";
  csv += "input_side_loss," + shortest(r.input_side_loss) + "\n";
  csv += "output_side_loss," + shortest(r.output_side_loss) + "\n";
  csv += "control_loss," + shortest(r.control_loss) + "\n";
  ensure_dir(c.out);
  write_text(fs::path(c.out) / "prop1.csv", csv);
  if (r.asymmetry_confirmed()) {
    out << "verdict: asymmetry confirmed\n";
    return kOk;
  }
  err << "verdict: asymmetry NOT confirmed\n";
  return kCheckFailed;
}

int cmd_report(const RunConfig& c, const std::vector<std::string>& paths, std::ostream& out, std::ostream&) {
  std::vector<report::RunRecord> rows;
  for (const auto& p : paths) {
    std::vector<report::RunRecord> part;
    try {
      part = report::read_csv(ckpt::read_file(p));
    } catch (const FormatError& e) {
      throw ArtifactError("unreadable run file '" + p + "': " + e.what());
    }
    rows.insert(rows.end(), part.begin(), part.end());
  }
  out << report::comparison_table(rows) << "\n";
  out << "parameter overhead (d=768, d~=64, L=12, n=50, m=16, h=768, C=10)\n";
  out << report::param_table(param_count_report(768, 64, 12, 50, 16, 768, 10));
  ensure_dir(c.out);
  write_text(fs::path(c.out) / "report.csv", report::write_csv(rows));
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"LION implicit prompt tuning at desk scale"};
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> values;
  std::vector<std::string> paths;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", "train the desk backbone on the source task"},
      {"tune", "adapt a pretrained backbone to the shifted target task"},
      {"eval", "score a tuned checkpoint on the target held-out split"},
      {"gradcheck", "implicit vs finite-difference vs unrolled gradients"},
      {"prop1", "input-side vs output-side prompt experiment"},
      {"report", "aggregate run CSV files into one table"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value config file; flags override it");
    for (const auto& key : config_keys()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      sub->add_option("--" + flag, values[key]);
    }
    if (name == "report") sub->add_option("paths", paths, "run CSV files")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = parse_config(ckpt::read_file(config_path));
    for (const auto& key : config_keys()) {
      std::string flag = key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      if (sub->get_option("--" + flag)->count() > 0) set_config_value(cfg, key, values[key]);
    }
    cfg.validate();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ArtifactError& e) {
    err << "missing artifact: " << e.what() << "\n";
    return kMissingArtifact;
  }

  const std::string name = sub->get_name();
  try {
    if (name == "pretrain") return cmd_pretrain(cfg, out, err);
    if (name == "tune") return cmd_tune(cfg, out, err);
    if (name == "eval") return cmd_eval(cfg, out, err);
    if (name == "gradcheck") return cmd_gradcheck(cfg, out, err);
    if (name == "prop1") return cmd_prop1(cfg, out, err);
    return cmd_report(cfg, paths, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ArtifactError& e) {
    err << "missing artifact: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const FormatError& e) {
    err << "unreadable artifact: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const DivergenceError& e) {
    err << "solver failure: " << e.what() << " (residual " << sci(e.residual()) << " after " << e.iterations()
        << " iterations)\n";
    return kCheckFailed;
  } catch (const Error& e) {
    err << name << ": " << e.what() << "\n";
    return kCheckFailed;
  }
}

}  // namespace lion::cli
