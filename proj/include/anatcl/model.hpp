#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "anatcl/error.hpp"
#include "anatcl/losses.hpp"
#include "anatcl/anatomy/roi_table.hpp"
#include "anatcl/numgrad/tape.hpp"

namespace anatcl::model {

using numgrad::Tape;
using numgrad::Tensor;
using numgrad::Var;

struct EncoderConfig {
  std::size_t input_dim = 128;
  std::vector<std::size_t> hidden{256, 128};
  /// Width of h, the representation kept after pretraining.
  std::size_t representation_dim = 64;
  /// Width of z, the unit embedding the contrastive losses see.
  std::size_t projection_dim = 32;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1) throw Error(ErrorKind::invalid_config, "input_dim must be >= 1");
    for (std::size_t w : hidden)
      if (w < 1) throw Error(ErrorKind::invalid_config, "hidden widths must be >= 1");
    if (representation_dim < 1) throw Error(ErrorKind::invalid_config, "representation_dim must be >= 1");
    if (projection_dim < 1) throw Error(ErrorKind::invalid_config, "projection_dim must be >= 1");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double lr_decay = 0.9;
  std::size_t decay_every = 10;
  std::size_t batch_size = 32;
  std::size_t epochs = 300;
  losses::LossConfig loss;
  /// Measures the anatomical degrees are computed from.
  anatomy::MeasureSet measures;
  /// Noise strength of the two SimCLR views.
  double augment_strength = 0.2;
  double augment_dropout = 0.1;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw Error(ErrorKind::invalid_config, "learning_rate must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error(ErrorKind::invalid_config, "lr_decay must be in (0, 1]");
    if (decay_every < 1) throw Error(ErrorKind::invalid_config, "decay_every must be >= 1");
    if (batch_size < 2) throw Error(ErrorKind::invalid_config, "batch_size must be >= 2");
    if (epochs < 1) throw Error(ErrorKind::invalid_config, "epochs must be >= 1");
    if (!(augment_strength >= 0.0)) throw Error(ErrorKind::invalid_config, "augment_strength must be >= 0");
    if (!(augment_dropout >= 0.0 && augment_dropout < 1.0))
      throw Error(ErrorKind::invalid_config, "augment_dropout must be in [0, 1)");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0))
      throw Error(ErrorKind::invalid_config, "invalid Adam moments");
    loss.validate();
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Affine layer x W + b with W stored (in, out) and b as a (1, out) row.
struct Layer {
  Tensor weight;
  Tensor bias;
  friend bool operator==(const Layer&, const Layer&) = default;
};

struct Parameters {
  std::vector<Layer> encoder;
  Layer head_hidden;
  Layer head_out;
  /// Regression head on h used only by the L1-supervised baselines.
  std::optional<Layer> regressor;

  /// Every tensor in the fixed checkpoint order.
  std::vector<Tensor*> tensors() {
    std::vector<Tensor*> out;
    for (auto& l : encoder) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    for (Layer* l : {&head_hidden, &head_out}) {
      out.push_back(&l->weight);
      out.push_back(&l->bias);
    }
    if (regressor) {
      out.push_back(&regressor->weight);
      out.push_back(&regressor->bias);
    }
    return out;
  }

  std::vector<const Tensor*> tensors() const {
    auto mut = const_cast<Parameters*>(this)->tensors();
    return {mut.begin(), mut.end()};
  }

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Output width of the regression head for a loss variant, or 0 if the
/// variant has none.
inline std::size_t regressor_width(losses::LossVariant v, std::size_t measures) {
  if (v == losses::LossVariant::l1_age) return 1;
  if (v == losses::LossVariant::l1_anat) return measures;
  return 0;
}

namespace detail {
inline Layer xavier_layer(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Layer l{Tensor::zeros({in, out}), Tensor::zeros({1, out})};
  for (auto& v : l.weight.data()) v = u(rng);
  return l;
}
}  // namespace detail

/// Xavier-uniform weights, zero biases, drawn in checkpoint order from
/// mt19937_64 seeded with config.seed.
inline Parameters init(const EncoderConfig& config, std::size_t regressor_out = 0) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Parameters p;
  std::size_t in = config.input_dim;
  for (std::size_t w : config.hidden) {
    p.encoder.push_back(detail::xavier_layer(in, w, rng));
    in = w;
  }
  p.encoder.push_back(detail::xavier_layer(in, config.representation_dim, rng));
  p.head_hidden = detail::xavier_layer(config.representation_dim, config.representation_dim, rng);
  p.head_out = detail::xavier_layer(config.representation_dim, config.projection_dim, rng);
  if (regressor_out > 0) p.regressor = detail::xavier_layer(config.representation_dim, regressor_out, rng);
  return p;
}

struct LayerVars {
  Var weight;
  Var bias;
};

struct ParameterVars {
  std::vector<LayerVars> encoder;
  LayerVars head_hidden;
  LayerVars head_out;
  std::optional<LayerVars> regressor;

  std::vector<Var> all() const {
    std::vector<Var> out;
    for (const auto& l : encoder) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
    for (const auto* l : {&head_hidden, &head_out}) {
      out.push_back(l->weight);
      out.push_back(l->bias);
    }
    if (regressor) {
      out.push_back(regressor->weight);
      out.push_back(regressor->bias);
    }
    return out;
  }
};

/// Records the parameters on a tape, as trainable leaves or as constants.
inline ParameterVars bind(Tape& tape, const Parameters& p, bool trainable = true) {
  auto leaf = [&](const Tensor& t) { return trainable ? tape.parameter(t) : tape.constant(t); };
  auto layer = [&](const Layer& l) { return LayerVars{leaf(l.weight), leaf(l.bias)}; };
  ParameterVars v;
  for (const auto& l : p.encoder) v.encoder.push_back(layer(l));
  v.head_hidden = layer(p.head_hidden);
  v.head_out = layer(p.head_out);
  if (p.regressor) v.regressor = layer(*p.regressor);
  return v;
}

/// Binds from raw handles in checkpoint order, as produced by a
/// finite-difference objective.
inline ParameterVars bind_handles(const Parameters& shape, std::span<const Var> handles) {
  std::size_t at = 0;
  auto next = [&] { return LayerVars{handles[at++], handles[at++]}; };
  ParameterVars v;
  for (std::size_t i = 0; i < shape.encoder.size(); ++i) v.encoder.push_back(next());
  v.head_hidden = next();
  v.head_out = next();
  if (shape.regressor) v.regressor = next();
  return v;
}

inline Var affine(Tape& tape, Var x, const LayerVars& l) { return tape.add(tape.matmul(x, l.weight), l.bias); }

/// h: hidden relu layers followed by a linear map to representation_dim.
inline Var encode(Tape& tape, const ParameterVars& p, Var x) {
  const Tensor& xv = tape.value(x);
  const Tensor& w0 = tape.value(p.encoder.front().weight);
  if (xv.rank() != 2 || xv.cols() != w0.rows()) {
    throw Error(ErrorKind::shape_mismatch, "encoder expects width " + std::to_string(w0.rows()) + ", got " +
                                               numgrad::shape_string(xv.shape()));
  }
  Var h = x;
  for (std::size_t i = 0; i + 1 < p.encoder.size(); ++i) h = tape.relu(affine(tape, h, p.encoder[i]));
  return affine(tape, h, p.encoder.back());
}

/// z: affine, relu, affine, then rows projected onto the unit sphere.
inline Var project(Tape& tape, const ParameterVars& p, Var h) {
  Var hidden = tape.relu(affine(tape, h, p.head_hidden));
  return tape.l2_normalize_rows(affine(tape, hidden, p.head_out));
}

struct Forward {
  Tensor h;
  Tensor z;
};

inline Forward forward(const Parameters& params, const Tensor& x) {
  Tape tape;
  auto p = bind(tape, params, false);
  Var h = encode(tape, p, tape.constant(x));
  Var z = project(tape, p, h);
  return {tape.value(h), tape.value(z)};
}

/// Representations only; the head is never evaluated.
inline Tensor represent(const Parameters& params, const Tensor& x) {
  Tape tape;
  auto p = bind(tape, params, false);
  return tape.value(encode(tape, p, tape.constant(x)));
}

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline AdamState adam_init(const Parameters& params) {
  AdamState s;
  for (const Tensor* t : params.tensors()) {
    s.m.push_back(Tensor::zeros(t->shape()));
    s.v.push_back(Tensor::zeros(t->shape()));
  }
  return s;
}

/// One bias-corrected Adam update in place.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw Error(ErrorKind::shape_mismatch, "Adam: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.m[i].shape()) {
      throw Error(ErrorKind::shape_mismatch, "Adam: shape mismatch at tensor " + std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

/// Step decay: base * decay^floor(completed_epochs / every).
inline double scheduled_lr(double base, double decay, std::size_t every, std::size_t completed_epochs) {
  return base * std::pow(decay, static_cast<double>(completed_epochs / every));
}

/// Everything needed to resume or evaluate a pretraining run.
struct Checkpoint {
  EncoderConfig encoder;
  TrainConfig train;
  std::uint32_t epoch = 0;
  Parameters params;
  AdamState adam;
  /// Textual mt19937_64 state after the last completed epoch.
  std::string rng_state;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

}  // namespace anatcl::model
