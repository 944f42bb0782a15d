#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cotrm/grammar.hpp"
#include "cotrm/policy.hpp"

namespace cotrm {

// One supervised pair: input features and the target transcript.
struct TrainingSample {
  std::vector<double> episode_features;
  std::vector<int> target_tokens;
  Mode mode = Mode::cot;

  bool operator==(const TrainingSample&) const = default;
};

struct SftConfig {
  double learning_rate = 1e-2;
  int grad_accumulation_steps = 16;
  int epochs = 1;
  std::uint64_t seed = 0;
};

// Negative log-likelihood of the target under the policy.
double sft_loss(const Policy& policy, const PolicyParams& params,
                const TrainingSample& sample);

// Gradient of sft_loss; equals the negated sequence log-prob gradient.
// If loss_out is non-null it receives sft_loss from the same forward pass.
PolicyParams sft_loss_grad(const Policy& policy, const PolicyParams& params,
                           const TrainingSample& sample,
                           double* loss_out = nullptr);

// One pass over the dataset in an order shuffled from config.seed.
// Gradients are accumulated over grad_accumulation_steps samples, then one
// plain gradient-descent update is applied with learning_rate scaled by
// 1/grad_accumulation_steps (a trailing short window uses the same scale).
// Returns the mean loss over the epoch; params are updated in place.
double sft_epoch(const Policy& policy, PolicyParams& params,
                 std::span<const TrainingSample> dataset,
                 const SftConfig& config);

}  // namespace cotrm
