#pragma once

#include <cstdint>
#include <vector>

#include "anatcl/cohort.hpp"
#include "anatcl/losses.hpp"
#include "anatcl/model.hpp"
#include "anatcl/numgrad/gradcheck.hpp"
#include "anatcl/training.hpp"

namespace anatcl::gradcheck_suite {

struct VariantCheck {
  losses::LossVariant variant;
  double max_error;
};

/// A width-8 encoder with one hidden layer, so two encoder layers.
inline model::EncoderConfig small_encoder(std::size_t input_dim, std::uint64_t seed) {
  model::EncoderConfig e;
  e.input_dim = input_dim;
  e.hidden = {8};
  e.representation_dim = 8;
  e.projection_dim = 4;
  e.seed = seed;
  return e;
}

/// Finite-difference check of every loss variant through the small encoder
/// on a batch of 4 synthetic subjects, with respect to every parameter.
inline std::vector<VariantCheck> run(std::uint64_t seed = 0, double step = 1e-5) {
  cohort::SyntheticConfig sc;
  sc.n_subjects = 10;
  sc.input_dim = 6;
  sc.seed = seed;
  const cohort::Cohort c = cohort::generate(sc);
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  std::vector<VariantCheck> out;
  for (auto variant : losses::kAllVariants) {
    model::TrainConfig tc;
    tc.loss.variant = variant;
    tc.seed = seed;
    const auto ctx = training::prepare_context(c, tc);
    const auto enc = small_encoder(sc.input_dim, seed + 1);
    const auto params = model::init(enc, model::regressor_width(variant, tc.measures.size()));
    std::vector<numgrad::Tensor> flat;
    for (const auto* t : params.tensors()) flat.push_back(*t);
    numgrad::Objective f = [&](numgrad::Tape& tape, std::span<const numgrad::Var> handles) {
      const auto vars = model::bind_handles(params, handles);
      return training::batch_loss(tape, vars, c, ctx, tc, rows, seed + 7);
    };
    out.push_back({variant, numgrad::finite_diff_check(f, flat, step)});
  }
  return out;
}

}  // namespace anatcl::gradcheck_suite
