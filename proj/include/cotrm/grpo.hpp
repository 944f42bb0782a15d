#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cotrm/episode.hpp"
#include "cotrm/policy.hpp"

namespace cotrm {

struct GrpoConfig {
  int group_size = 8;        // N, responses sampled per input
  double clip = 0.2;         // delta, half-width of the trust band
  double kl_weight = 0.04;   // beta
  double learning_rate = 0.02;
  int iterations = 800;
  int batch_size = 16;       // episodes per update
  std::uint64_t seed = 0;
};

// The N sampled responses for one input with their rewards, normalized
// advantages, and rollout-time log-probabilities.
struct Group {
  std::int64_t episode_id = 0;
  Mode mode = Mode::cot;
  int ground_truth = 0;
  std::vector<double> features;
  std::vector<SequenceSample> responses;
  std::vector<int> rewards;        // each in {0,1,2}
  std::vector<double> advantages;
  std::vector<double> old_logprobs;
};

// current is the trainable policy; old is the rollout snapshot it is being
// compared against; ref stays frozen for a whole training stage.
struct ParamsTriple {
  PolicyParams current;
  PolicyParams old;
  PolicyParams ref;
};

struct GrpoStats {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  double objective = 0.0;
};

// (reward - mean) / population std per entry; a vector of identical
// rewards (or zero variance) yields exact zeros. Requires >= 2 entries.
std::vector<double> compute_advantages(std::span<const double> rewards);

// exp of the log-probability difference, exponent clamped to +-50.
double ratio_from_logs(double new_logprob, double old_logprob);
double importance_ratio(const Policy& policy, const PolicyParams& current,
                        double old_logprob,
                        std::span<const double> episode_features,
                        std::span<const int> tokens);

// min(ratio * advantage, clip(ratio, 1-delta, 1+delta) * advantage).
double clipped_term(double ratio, double advantage, double clip);

// k3 estimator e^t - t - 1 with t = ref logprob - new logprob; the
// exponent is clamped to +-50. Non-negative, zero iff t = 0.
double kl_from_logs(double ref_logprob, double new_logprob);
double kl_penalty(const Policy& policy, const PolicyParams& current,
                  const PolicyParams& ref,
                  std::span<const double> episode_features,
                  std::span<const int> tokens);

// Samples group_size responses from old_params with per-response seeds
// derived from (config.seed, iteration_index, episode id, response index),
// scores them, and fills advantages.
Group rollout_group(const Policy& policy, const PolicyParams& old_params,
                    const PreferenceEpisode& episode, const GrpoConfig& config,
                    int iteration_index);

// Mean over all responses of clipped_term - kl_weight * kl. This is the
// quantity the update step ascends.
double grpo_objective(const Policy& policy, const ParamsTriple& triple,
                      std::span<const Group> groups, const GrpoConfig& config);

// Analytic gradient of grpo_objective with respect to triple.current.
// Rewards, advantages, and old log-probs are treated as constants; the
// clip acts as a piecewise-constant gate. Stats, when requested, are
// evaluated at the same point as the gradient.
PolicyParams grpo_objective_grad(const Policy& policy,
                                 const ParamsTriple& triple,
                                 std::span<const Group> groups,
                                 const GrpoConfig& config,
                                 GrpoStats* stats = nullptr);

// One iteration: snapshot old <- current, roll out groups from old, take
// one gradient-ascent step on the objective.
GrpoStats grpo_update(const Policy& policy, ParamsTriple& triple,
                      std::span<const PreferenceEpisode> batch,
                      const GrpoConfig& config, int iteration_index);

}  // namespace cotrm
