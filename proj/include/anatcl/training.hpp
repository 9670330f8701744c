#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "anatcl/anatomy/descriptors.hpp"
#include "anatcl/cohort.hpp"
#include "anatcl/io.hpp"
#include "anatcl/losses.hpp"
#include "anatcl/model.hpp"

namespace anatcl::training {

using losses::LossVariant;
using model::Checkpoint;
using model::EncoderConfig;
using model::Parameters;
using model::TrainConfig;
using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

/// Per-subject constants a loss variant needs, computed once per run.
struct BatchContext {
  std::vector<double> ages;
  std::vector<anatomy::LocalDescriptorSet> local;
  std::vector<anatomy::GlobalDescriptorSet> global;
  /// Standardized mean global descriptors (rows = subjects) for l1_anat.
  Tensor anat_targets;
  double age_mean = 0.0;
  double age_std = 1.0;
};

inline BatchContext prepare_context(const cohort::Cohort& cohort, const TrainConfig& cfg) {
  const auto v = cfg.loss.variant;
  BatchContext ctx;
  ctx.ages = cohort.ages();
  if (losses::needs_roi_table(v)) {
    if (!cohort.roi()) {
      throw Error(ErrorKind::missing_degrees, "variant " + std::string(losses::to_string(v)) +
                                                  " needs roi.csv, which the cohort does not have");
    }
    const anatomy::RoiTable table = cohort.roi()->select(cfg.measures);
    const auto ids = cohort.ids();
    if (losses::uses_local_degrees(v)) {
      // The normalizer is fitted on the pretraining cohort itself.
      const auto stats = anatomy::fit_normalizer(table);
      for (const auto& id : ids) ctx.local.push_back(anatomy::local_descriptors(table, id, stats));
    }
    if (losses::uses_global_degrees(v)) {
      for (const auto& id : ids) ctx.global.push_back(anatomy::global_descriptors(table, id));
    }
    if (v == LossVariant::l1_anat) {
      const std::size_t N = table.measure_count();
      ctx.anat_targets = Tensor::zeros({ids.size(), N});
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto m = anatomy::global_descriptors(table, ids[i]).mean_per_measure();
        for (std::size_t j = 0; j < N; ++j) ctx.anat_targets.at(i, j) = m[j];
      }
      for (std::size_t j = 0; j < N; ++j) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < ids.size(); ++i) mean += ctx.anat_targets.at(i, j) / static_cast<double>(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
          const double d = ctx.anat_targets.at(i, j) - mean;
          var += d * d / static_cast<double>(ids.size());
        }
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < ids.size(); ++i) ctx.anat_targets.at(i, j) = (ctx.anat_targets.at(i, j) - mean) / sd;
      }
    }
  }
  if (v == LossVariant::l1_age) {
    double mean = 0.0, var = 0.0;
    for (double a : ctx.ages) mean += a / static_cast<double>(ctx.ages.size());
    for (double a : ctx.ages) var += (a - mean) * (a - mean) / static_cast<double>(ctx.ages.size());
    ctx.age_mean = mean;
    ctx.age_std = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return ctx;
}

/// Loss of one batch given bound parameters. `view_seed` seeds the two
/// SimCLR views of each subject.
inline Var batch_loss(Tape& tape, const model::ParameterVars& p, const cohort::Cohort& cohort,
                      const BatchContext& ctx, const TrainConfig& cfg, std::span<const std::size_t> rows,
                      std::uint64_t view_seed) {
  const auto& lc = cfg.loss;
  const double tau = lc.temperature;
  std::vector<double> ages;
  for (auto r : rows) ages.push_back(ctx.ages[r]);

  if (lc.variant == LossVariant::simclr) {
    const std::size_t B = rows.size(), D = cohort.input_dim();
    Tensor views = Tensor::zeros({2 * B, D});
    for (std::size_t i = 0; i < B; ++i) {
      const auto& x = cohort[rows[i]].x;
      const auto a = cohort::augment(x, cfg.augment_strength, view_seed + 2 * i, cfg.augment_dropout);
      const auto b = cohort::augment(x, cfg.augment_strength, view_seed + 2 * i + 1, cfg.augment_dropout);
      std::copy(a.begin(), a.end(), views.row(i).begin());
      std::copy(b.begin(), b.end(), views.row(B + i).begin());
    }
    Var z = model::project(tape, p, model::encode(tape, p, tape.constant(std::move(views))));
    return losses::simclr_loss(tape, z, tau);
  }

  Var h = model::encode(tape, p, tape.constant(cohort.features(rows)));
  if (lc.variant == LossVariant::l1_age) {
    Var r = model::affine(tape, h, *p.regressor);
    Var years = tape.add(tape.scale(r, ctx.age_std), tape.constant(Tensor::filled({rows.size(), 1}, ctx.age_mean)));
    return losses::l1_age_loss(tape, years, ages);
  }
  if (lc.variant == LossVariant::l1_anat) {
    Tensor targets = Tensor::zeros({rows.size(), ctx.anat_targets.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto src = ctx.anat_targets.row(rows[i]);
      std::copy(src.begin(), src.end(), targets.row(i).begin());
    }
    return losses::anat_sup_loss(tape, h, p.regressor->weight, p.regressor->bias, targets);
  }

  Var z = model::project(tape, p, h);
  switch (lc.variant) {
    case LossVariant::yaware: return losses::yaware_loss(tape, z, ages, lc.sigma, tau);
    case LossVariant::expw: return losses::expw_loss(tape, z, ages, lc.sigma, tau);
    default: break;
  }
  DegreeMatrix degrees;
  if (losses::uses_local_degrees(lc.variant)) {
    std::vector<anatomy::LocalDescriptorSet> batch;
    for (auto r : rows) batch.push_back(ctx.local[r]);
    degrees = anatomy::local_degree_matrix(batch);
  } else {
    std::vector<anatomy::GlobalDescriptorSet> batch;
    for (auto r : rows) batch.push_back(ctx.global[r]);
    degrees = anatomy::global_degree_matrix(batch);
  }
  return losses::combined_loss(tape, z, degrees, ages, lc);
}

/// Batches of one epoch: a seeded shuffle cut into batch_size pieces. A
/// trailing piece is kept unless it has fewer than 2 subjects.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                           std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_trace;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

inline std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

/// Trains encoder and head for cfg.epochs epochs. Training is a pure
/// function of the cohort, the two configs and their seeds.
inline PretrainResult pretrain(const cohort::Cohort& cohort, const EncoderConfig& enc, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {}) {
  enc.validate();
  cfg.validate();
  if (cohort.size() < 2) throw Error(ErrorKind::invalid_config, "pretraining needs at least 2 subjects");
  if (cohort.input_dim() != enc.input_dim) {
    throw Error(ErrorKind::width_mismatch, "cohort x width " + std::to_string(cohort.input_dim()) +
                                               " differs from input_dim " + std::to_string(enc.input_dim));
  }
  const BatchContext ctx = prepare_context(cohort, cfg);

  PretrainResult out;
  Checkpoint& ck = out.checkpoint;
  ck.encoder = enc;
  ck.train = cfg;
  ck.params = model::init(enc, model::regressor_width(cfg.loss.variant, cfg.measures.size()));
  ck.adam = model::adam_init(ck.params);
  std::mt19937_64 rng(cfg.seed);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = model::scheduled_lr(cfg.learning_rate, cfg.lr_decay, cfg.decay_every, epoch);
    const auto batches = epoch_batches(cohort.size(), cfg.batch_size, rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const std::uint64_t view_seed = rng();
      Tape tape;
      auto vars = model::bind(tape, ck.params);
      double value = 0.0;
      numgrad::Gradients grads = [&] {
        try {
          Var loss = batch_loss(tape, vars, cohort, ctx, cfg, batches[b], view_seed);
          value = tape.value(loss).item();
          if (!std::isfinite(value)) throw Error(ErrorKind::non_finite, "loss is not finite");
          return tape.backward(loss);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::non_finite) throw;
          std::string ids;
          for (std::size_t i = 0; i < batches[b].size() && i < 8; ++i) ids += (i ? "," : "") + cohort[batches[b][i]].id;
          throw Error(ErrorKind::nan_loss, "epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b) +
                                               " (subjects " + ids + (batches[b].size() > 8 ? ",..." : "") +
                                               "): " + e.what());
        }
      }();
      std::vector<Tensor> g;
      for (Var v : vars.all()) g.push_back(grads[v]);
      auto tensors = ck.params.tensors();
      model::adam_step(tensors, g, ck.adam, lr, cfg.adam);
      total += value;
    }
    const double mean = total / static_cast<double>(batches.size());
    out.loss_trace.push_back(mean);
    ck.epoch = static_cast<std::uint32_t>(epoch + 1);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  ck.rng_state = rng_state(rng);
  return out;
}

inline std::string loss_trace_csv(const std::vector<double>& trace) {
  std::string out = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out += std::to_string(i + 1) + "," + io::format_double(trace[i]) + "\n";
  return out;
}

}  // namespace anatcl::training
