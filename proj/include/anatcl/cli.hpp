#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "anatcl/checkpoint.hpp"
#include "anatcl/cohort.hpp"
#include "anatcl/config.hpp"
#include "anatcl/error.hpp"
#include "anatcl/gradcheck_suite.hpp"
#include "anatcl/io.hpp"
#include "anatcl/probe.hpp"
#include "anatcl/training.hpp"

namespace anatcl::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c{"synth", "pretrain", "embed", "probe", "gradcheck", "feature-study"};
  return c;
}

inline constexpr const char* kResolvedConfig = "resolved_config.cfg";
inline constexpr const char* kCheckpointFile = "checkpoint.ancl";
inline constexpr const char* kLossTraceFile = "loss_trace.csv";
inline constexpr const char* kEmbeddingsFile = "embeddings.csv";
inline constexpr const char* kFeatureStudyFile = "feature_study.csv";
inline constexpr double kGradcheckTolerance = 1e-4;

struct Flags {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::string cohort;
  std::string task;
  std::optional<std::uint64_t> seed;
};

inline config::RunConfig load_run_config(const Flags& f) {
  config::RunConfig c = f.config.empty() ? config::parse_config_text("") : config::parse_config_file(f.config);
  if (f.seed) config::apply_seed(c, *f.seed);
  return c;
}

inline void write_resolved(const fs::path& dir, std::string_view text) {
  io::write_file_atomic(dir / kResolvedConfig, text);
}

inline int cmd_synth(const Flags& f, std::ostream& out) {
  const auto cfg = load_run_config(f);
  const auto c = cohort::generate(cfg.synth);
  cohort::save(c, f.out);
  write_resolved(f.out, config::to_text(cfg));
  out << "wrote " << c.size() << " subjects to " << f.out << "\n";
  return kExitOk;
}

inline cohort::Cohort load_cohort_for(const Flags& f, const config::RunConfig& cfg) {
  const auto c = cohort::load(f.cohort);
  if (losses::needs_roi_table(cfg.train.loss.variant) && !c.roi()) {
    throw Error(ErrorKind::missing_degrees, "variant " + std::string(losses::to_string(cfg.train.loss.variant)) +
                                                " needs " + (fs::path(f.cohort) / "roi.csv").string() +
                                                ", which does not exist");
  }
  return c;
}

inline int cmd_pretrain(const Flags& f, std::ostream& out, std::ostream& err) {
  auto cfg = load_run_config(f);
  const auto c = load_cohort_for(f, cfg);
  if (!cfg.input_dim_set) {
    cfg.encoder.input_dim = cfg.synth.input_dim = c.input_dim();
    cfg.input_dim_set = true;
  }
  auto res = training::pretrain(c, cfg.encoder, cfg.train, [&](std::size_t epoch, double loss) {
    err << "epoch " << epoch << " mean_loss " << io::format_double(loss) << "\n";
  });
  fs::create_directories(f.out);
  checkpoint::save_checkpoint(res.checkpoint, fs::path(f.out) / kCheckpointFile);
  io::write_file_atomic(fs::path(f.out) / kLossTraceFile, training::loss_trace_csv(res.loss_trace));
  write_resolved(f.out, config::to_text(cfg));
  out << "final mean_loss " << io::format_double(res.loss_trace.back()) << "\n";
  return kExitOk;
}

inline model::Checkpoint load_checkpoint_for(const Flags& f, const cohort::Cohort& c) {
  auto ck = checkpoint::load_checkpoint(f.checkpoint);
  if (ck.encoder.input_dim != c.input_dim()) {
    throw Error(ErrorKind::width_mismatch, "checkpoint expects x width " + std::to_string(ck.encoder.input_dim) +
                                               ", cohort has " + std::to_string(c.input_dim()));
  }
  return ck;
}

inline int cmd_embed(const Flags& f, std::ostream& out) {
  const auto c = cohort::load(f.cohort);
  const auto ck = load_checkpoint_for(f, c);
  const auto h = model::represent(ck.params, c.features());
  fs::create_directories(f.out);
  cohort::save_embeddings(c.ids(), h, fs::path(f.out) / kEmbeddingsFile);
  write_resolved(f.out, config::checkpoint_config_text(ck.encoder, ck.train));
  out << "wrote " << h.rows() << " x " << h.cols() << " representations\n";
  return kExitOk;
}

inline int cmd_probe(const Flags& f, std::ostream& out) {
  const auto cfg = load_run_config(f);
  const auto c = cohort::load(f.cohort);
  const auto ck = load_checkpoint_for(f, c);
  if (f.task != "age" && !c.has_label(f.task)) {
    throw Error(ErrorKind::label_missing, "cohort has no label '" + f.task + "'");
  }
  const auto rep = probe::cross_validate(c, ck.params, f.task, cfg.probe);
  fs::create_directories(f.out);
  io::write_file_atomic(fs::path(f.out) / ("probe_" + f.task + ".csv"), probe::to_csv(rep.results));
  write_resolved(f.out, config::to_text(cfg));
  for (const auto& r : rep.results)
    out << r.task << " " << r.metric << " " << io::format_double(r.mean) << " +- " << io::format_double(r.std) << "\n";
  return kExitOk;
}

inline int cmd_gradcheck(const Flags& f, std::ostream& out) {
  const auto results = gradcheck_suite::run(f.seed.value_or(0));
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_error < kGradcheckTolerance;
    ok = ok && pass;
    out << losses::to_string(r.variant) << " max_rel_error " << io::format_double(r.max_error)
        << (pass ? "" : "  FAIL") << "\n";
  }
  return ok ? kExitOk : kExitRuntime;
}

inline int cmd_feature_study(const Flags& f, std::ostream& out) {
  const auto cfg = load_run_config(f);
  const auto c = cohort::load(f.cohort);
  if (!c.roi()) {
    throw Error(ErrorKind::missing_file, "feature-study needs " + (fs::path(f.cohort) / "roi.csv").string());
  }
  const auto rows = probe::feature_study(*c.roi(), c.ages(), cfg.probe);
  fs::create_directories(f.out);
  io::write_file_atomic(fs::path(f.out) / kFeatureStudyFile, probe::feature_study_csv(rows));
  write_resolved(f.out, config::to_text(cfg));
  out << probe::feature_study_csv(rows);
  return kExitOk;
}

/// Runs one command. args excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const auto& cmds = commands();
  if (args.empty()) {
    err << "usage: anatcl <" ;
    for (std::size_t i = 0; i < cmds.size(); ++i) err << (i ? "|" : "") << cmds[i];
    err << "> [flags]\n";
    return kExitValidation;
  }
  if (args[0].rfind("-", 0) != 0 && std::find(cmds.begin(), cmds.end(), args[0]) == cmds.end()) {
    err << "unknown-command: '" << args[0] << "'\n";
    return kExitValidation;
  }

  CLI::App app{"AnatCL weakly-supervised contrastive pretraining and probing", "anatcl"};
  app.require_subcommand(1);
  Flags f;
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", f.seed, "Override every seed in the config"); };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort directory");
  synth->add_option("--config", f.config, "Run config file");
  synth->add_option("--out", f.out, "Output cohort directory")->required();
  add_seed(synth);

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain an encoder on a cohort");
  pretrain->add_option("--config", f.config, "Run config file");
  pretrain->add_option("--cohort", f.cohort, "Cohort directory")->required();
  pretrain->add_option("--out", f.out, "Output run directory")->required();
  add_seed(pretrain);

  auto* embed = app.add_subcommand("embed", "Write frozen-encoder representations");
  embed->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  embed->add_option("--cohort", f.cohort, "Cohort directory")->required();
  embed->add_option("--out", f.out, "Output directory")->required();

  auto* probe_cmd = app.add_subcommand("probe", "Cross-validated linear probe on frozen representations");
  probe_cmd->add_option("--config", f.config, "Run config file");
  probe_cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  probe_cmd->add_option("--cohort", f.cohort, "Cohort directory")->required();
  probe_cmd->add_option("--task", f.task, "age or a binary label column")->required();
  probe_cmd->add_option("--out", f.out, "Output directory")->required();
  add_seed(probe_cmd);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss variant");
  add_seed(gradcheck);

  auto* study = app.add_subcommand("feature-study", "Per-measure ridge regression of age");
  study->add_option("--config", f.config, "Run config file");
  study->add_option("--cohort", f.cohort, "Cohort directory")->required();
  study->add_option("--out", f.out, "Output directory")->required();
  add_seed(study);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "invalid-config: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (synth->parsed()) return cmd_synth(f, out);
    if (pretrain->parsed()) return cmd_pretrain(f, out, err);
    if (embed->parsed()) return cmd_embed(f, out);
    if (probe_cmd->parsed()) return cmd_probe(f, out);
    if (gradcheck->parsed()) return cmd_gradcheck(f, out);
    if (study->parsed()) return cmd_feature_study(f, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    return is_validation_error(e.kind()) ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "unknown-command\n";
  return kExitValidation;
}

}  // namespace anatcl::cli
