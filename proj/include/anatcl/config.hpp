#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "anatcl/cohort.hpp"
#include "anatcl/error.hpp"
#include "anatcl/io.hpp"
#include "anatcl/losses.hpp"
#include "anatcl/model.hpp"
#include "anatcl/probe.hpp"

namespace anatcl::config {

/// Every setting a run can take. Parsed from `key = value` lines.
struct RunConfig {
  std::uint64_t seed = 0;
  cohort::SyntheticConfig synth;
  model::EncoderConfig encoder;
  model::TrainConfig train;
  probe::ProbeOptions probe;
  /// False when input_dim was left at its default, in which case commands
  /// reading a cohort take the width from the cohort.
  bool input_dim_set = false;

  void validate() const {
    synth.validate();
    encoder.validate();
    train.validate();
    if (probe.folds < 2) throw Error(ErrorKind::invalid_config, "folds must be >= 2");
    if (!(probe.ridge_penalty >= 0.0)) throw Error(ErrorKind::invalid_config, "ridge_penalty must be >= 0");
    if (!(probe.logistic.learning_rate > 0.0)) throw Error(ErrorKind::invalid_config, "logistic_lr must be > 0");
  }
};

namespace detail {

inline Error type_error(std::string_view key, std::string_view expected, std::string_view got) {
  return Error(ErrorKind::type_error,
               std::string(key) + ": expected " + std::string(expected) + ", got '" + std::string(got) + "'");
}

inline double real(std::string_view key, std::string_view v) {
  auto d = io::parse_double(v);
  if (!d || !std::isfinite(*d)) throw type_error(key, "a number", v);
  return *d;
}

inline double nonneg_real(std::string_view key, std::string_view v) {
  const double d = real(key, v);
  if (d < 0.0) throw type_error(key, "a number >= 0", v);
  return d;
}

inline double positive_real(std::string_view key, std::string_view v) {
  const double d = real(key, v);
  if (!(d > 0.0)) throw type_error(key, "a number > 0", v);
  return d;
}

inline std::uint64_t u64(std::string_view key, std::string_view v) {
  auto n = io::parse_int<std::uint64_t>(v);
  if (!n) throw type_error(key, "a nonnegative integer", v);
  return *n;
}

inline std::size_t positive_int(std::string_view key, std::string_view v) {
  auto n = io::parse_int<std::size_t>(v);
  if (!n || *n == 0) throw type_error(key, "a positive integer", v);
  return *n;
}

inline std::vector<std::size_t> widths(std::string_view key, std::string_view v) {
  std::vector<std::size_t> out;
  if (io::trim(v) == "none") return out;
  for (auto tok : io::split(v, ',')) out.push_back(positive_int(key, io::trim(tok)));
  return out;
}

inline anatomy::MeasureSet measures(std::string_view key, std::string_view v) {
  if (v == "all") return anatomy::MeasureSet::all_seven();
  try {
    return anatomy::MeasureSet::parse(v);
  } catch (const Error& e) {
    throw Error(ErrorKind::type_error, std::string(key) + ": " + e.what());
  }
}

struct Setter {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string join_widths(const std::vector<std::size_t>& w) {
  if (w.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

/// Key table in the order keys are echoed. Seeds for the individual
/// components come after `seed` so they override it.
inline const std::vector<std::pair<std::string, Setter>>& keys() {
  using R = RunConfig;
  using V = std::string_view;
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"seed", {[](R& c, V v) { c.seed = u64("seed", v); }, [](const R& c) { return std::to_string(c.seed); }}},
      // synthetic cohort
      {"n_subjects",
       {[](R& c, V v) { c.synth.n_subjects = positive_int("n_subjects", v); },
        [](const R& c) { return std::to_string(c.synth.n_subjects); }}},
      {"input_dim",
       {[](R& c, V v) {
          c.synth.input_dim = c.encoder.input_dim = positive_int("input_dim", v);
          c.input_dim_set = true;
        },
        [](const R& c) { return std::to_string(c.encoder.input_dim); }}},
      {"atlas",
       {[](R& c, V v) {
          auto a = anatomy::parse_atlas(v);
          if (!a) throw type_error("atlas", "desikan or destrieux", v);
          c.synth.atlas = *a;
        },
        [](const R& c) { return std::string(anatomy::to_string(c.synth.atlas.name)); }}},
      {"synth_measures",
       {[](R& c, V v) { c.synth.measures = measures("synth_measures", v); },
        [](const R& c) { return c.synth.measures.to_string(); }}},
      {"noise_scale",
       {[](R& c, V v) { c.synth.noise_scale = nonneg_real("noise_scale", v); },
        [](const R& c) { return io::format_double(c.synth.noise_scale); }}},
      {"label_rules",
       {[](R& c, V v) {
          c.synth.label_rules = v == "none" ? std::vector<cohort::LabelRule>{} : cohort::parse_label_rules(v);
        },
        [](const R& c) {
          return c.synth.label_rules.empty() ? std::string("none") : cohort::format_label_rules(c.synth.label_rules);
        }}},
      // encoder
      {"hidden",
       {[](R& c, V v) { c.encoder.hidden = widths("hidden", v); },
        [](const R& c) { return join_widths(c.encoder.hidden); }}},
      {"representation_dim",
       {[](R& c, V v) { c.encoder.representation_dim = positive_int("representation_dim", v); },
        [](const R& c) { return std::to_string(c.encoder.representation_dim); }}},
      {"projection_dim",
       {[](R& c, V v) { c.encoder.projection_dim = positive_int("projection_dim", v); },
        [](const R& c) { return std::to_string(c.encoder.projection_dim); }}},
      // training
      {"variant",
       {[](R& c, V v) {
          auto var = losses::parse_variant(v);
          if (!var) {
            throw type_error("variant",
                             "one of simclr, yaware, expw, anatcl_local, anatcl_global, anatssl_local, "
                             "anatssl_global, l1_age, l1_anat",
                             v);
          }
          c.train.loss.variant = *var;
        },
        [](const R& c) { return std::string(losses::to_string(c.train.loss.variant)); }}},
      {"learning_rate",
       {[](R& c, V v) { c.train.learning_rate = positive_real("learning_rate", v); },
        [](const R& c) { return io::format_double(c.train.learning_rate); }}},
      {"lr_decay",
       {[](R& c, V v) { c.train.lr_decay = positive_real("lr_decay", v); },
        [](const R& c) { return io::format_double(c.train.lr_decay); }}},
      {"decay_every",
       {[](R& c, V v) { c.train.decay_every = positive_int("decay_every", v); },
        [](const R& c) { return std::to_string(c.train.decay_every); }}},
      {"batch_size",
       {[](R& c, V v) { c.train.batch_size = positive_int("batch_size", v); },
        [](const R& c) { return std::to_string(c.train.batch_size); }}},
      {"epochs",
       {[](R& c, V v) { c.train.epochs = positive_int("epochs", v); },
        [](const R& c) { return std::to_string(c.train.epochs); }}},
      {"lambda1",
       {[](R& c, V v) { c.train.loss.lambda1 = nonneg_real("lambda1", v); },
        [](const R& c) { return io::format_double(c.train.loss.lambda1); }}},
      {"lambda2",
       {[](R& c, V v) { c.train.loss.lambda2 = nonneg_real("lambda2", v); },
        [](const R& c) { return io::format_double(c.train.loss.lambda2); }}},
      {"temperature",
       {[](R& c, V v) { c.train.loss.temperature = positive_real("temperature", v); },
        [](const R& c) { return io::format_double(c.train.loss.temperature); }}},
      {"sigma",
       {[](R& c, V v) { c.train.loss.sigma = positive_real("sigma", v); },
        [](const R& c) { return io::format_double(c.train.loss.sigma); }}},
      {"measures",
       {[](R& c, V v) { c.train.measures = measures("measures", v); },
        [](const R& c) { return c.train.measures.to_string(); }}},
      {"augment_strength",
       {[](R& c, V v) { c.train.augment_strength = nonneg_real("augment_strength", v); },
        [](const R& c) { return io::format_double(c.train.augment_strength); }}},
      {"augment_dropout",
       {[](R& c, V v) { c.train.augment_dropout = nonneg_real("augment_dropout", v); },
        [](const R& c) { return io::format_double(c.train.augment_dropout); }}},
      {"adam_beta1",
       {[](R& c, V v) { c.train.adam.beta1 = nonneg_real("adam_beta1", v); },
        [](const R& c) { return io::format_double(c.train.adam.beta1); }}},
      {"adam_beta2",
       {[](R& c, V v) { c.train.adam.beta2 = nonneg_real("adam_beta2", v); },
        [](const R& c) { return io::format_double(c.train.adam.beta2); }}},
      {"adam_eps",
       {[](R& c, V v) { c.train.adam.eps = positive_real("adam_eps", v); },
        [](const R& c) { return io::format_double(c.train.adam.eps); }}},
      // probing
      {"folds",
       {[](R& c, V v) { c.probe.folds = positive_int("folds", v); },
        [](const R& c) { return std::to_string(c.probe.folds); }}},
      {"ridge_penalty",
       {[](R& c, V v) { c.probe.ridge_penalty = nonneg_real("ridge_penalty", v); },
        [](const R& c) { return io::format_double(c.probe.ridge_penalty); }}},
      {"logistic_iterations",
       {[](R& c, V v) { c.probe.logistic.iterations = positive_int("logistic_iterations", v); },
        [](const R& c) { return std::to_string(c.probe.logistic.iterations); }}},
      {"logistic_lr",
       {[](R& c, V v) { c.probe.logistic.learning_rate = positive_real("logistic_lr", v); },
        [](const R& c) { return io::format_double(c.probe.logistic.learning_rate); }}},
      // per-component seed overrides
      {"synth_seed",
       {[](R& c, V v) { c.synth.seed = u64("synth_seed", v); }, [](const R& c) { return std::to_string(c.synth.seed); }}},
      {"encoder_seed",
       {[](R& c, V v) { c.encoder.seed = u64("encoder_seed", v); },
        [](const R& c) { return std::to_string(c.encoder.seed); }}},
      {"train_seed",
       {[](R& c, V v) { c.train.seed = u64("train_seed", v); }, [](const R& c) { return std::to_string(c.train.seed); }}},
      {"probe_seed",
       {[](R& c, V v) { c.probe.seed = u64("probe_seed", v); }, [](const R& c) { return std::to_string(c.probe.seed); }}},
  };
  return table;
}

}  // namespace detail

/// Sets the run seed and every component seed to it.
inline void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.synth.seed = c.encoder.seed = c.train.seed = c.probe.seed = seed;
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and empty values are rejected. The result is validated.
inline RunConfig parse_config_text(std::string_view text, const std::string& source = "config") {
  std::map<std::string, std::pair<std::string, std::size_t>> entries;
  std::size_t line_no = 0;
  for (auto raw : io::split(text, '\n')) {
    ++line_no;
    auto line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + " line " + std::to_string(line_no);
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::invalid_config, where + ": expected key = value, got '" + std::string(line) + "'");
    }
    const std::string key(io::trim(line.substr(0, eq)));
    const std::string value(io::trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(ErrorKind::invalid_config, where + ": empty key");
    if (value.empty()) throw Error(ErrorKind::missing_required, where + ": key '" + key + "' has no value");
    bool known = false;
    for (const auto& [k, s] : detail::keys()) known = known || k == key;
    if (!known) throw Error(ErrorKind::unknown_key, where + ": unknown key '" + key + "'");
    if (!entries.emplace(key, std::make_pair(value, line_no)).second) {
      throw Error(ErrorKind::invalid_config, where + ": key '" + key + "' given twice");
    }
  }
  RunConfig c;
  // The run seed first, so per-component seeds listed anywhere override it.
  if (auto it = entries.find("seed"); it != entries.end()) {
    detail::keys().front().second.set(c, it->second.first);
  }
  apply_seed(c, c.seed);
  for (const auto& [key, setter] : detail::keys()) {
    if (key == "seed") continue;
    auto it = entries.find(key);
    if (it != entries.end()) setter.set(c, it->second.first);
  }
  c.validate();
  return c;
}

inline RunConfig parse_config_file(const std::filesystem::path& path) {
  return parse_config_text(io::read_file(path), path.filename().string());
}

/// Every key with its effective value; parse_config_text of the result
/// gives back the same configuration.
inline std::string to_text(const RunConfig& c) {
  std::string out = "# resolved configuration\n";
  for (const auto& [key, setter] : detail::keys()) {
    if (key == "input_dim" && !c.input_dim_set) {
      out += "# input_dim = " + setter.get(c) + "  (taken from the cohort)\n";
      continue;
    }
    out += key + " = " + setter.get(c) + "\n";
  }
  return out;
}

/// Serialized encoder and training settings stored in a checkpoint.
inline std::string checkpoint_config_text(const model::EncoderConfig& enc, const model::TrainConfig& train) {
  RunConfig c;
  c.encoder = enc;
  c.synth.input_dim = enc.input_dim;
  c.train = train;
  c.input_dim_set = true;
  return to_text(c);
}

}  // namespace anatcl::config
