#include "cotrm/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cotrm/grammar.hpp"
#include "cotrm/util.hpp"

namespace cotrm {

namespace {

constexpr double kExpClamp = 50.0;

double clamp_exp_arg(double x) {
  return std::clamp(x, -kExpClamp, kExpClamp);
}

void validate(const GrpoConfig& config) {
  if (config.group_size < 2)
    throw std::invalid_argument("group_size must be >= 2");
  if (!(config.clip > 0.0 && config.clip < 1.0))
    throw std::invalid_argument("clip must be in (0, 1)");
  if (config.kl_weight < 0.0)
    throw std::invalid_argument("kl_weight must be >= 0");
  if (config.learning_rate < 0.0)
    throw std::invalid_argument("learning_rate must be >= 0");
}

}  // namespace

std::vector<double> compute_advantages(std::span<const double> rewards) {
  const std::size_t n = rewards.size();
  if (n < 2)
    throw std::invalid_argument("advantage normalization requires >= 2 rewards");

  const bool all_equal =
      std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards[0]; });
  if (all_equal) return std::vector<double>(n, 0.0);

  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);

  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  const double std_dev = std::sqrt(var);
  if (std_dev == 0.0) return std::vector<double>(n, 0.0);

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (rewards[i] - mean) / std_dev;
  return out;
}

double ratio_from_logs(double new_logprob, double old_logprob) {
  return std::exp(clamp_exp_arg(new_logprob - old_logprob));
}

double importance_ratio(const Policy& policy, const PolicyParams& current,
                        double old_logprob,
                        std::span<const double> episode_features,
                        std::span<const int> tokens) {
  return ratio_from_logs(
      policy.sequence_logprob(current, episode_features, tokens), old_logprob);
}

double clipped_term(double ratio, double advantage, double clip) {
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped_ratio * advantage);
}

double kl_from_logs(double ref_logprob, double new_logprob) {
  const double t = ref_logprob - new_logprob;
  return std::exp(clamp_exp_arg(t)) - t - 1.0;
}

double kl_penalty(const Policy& policy, const PolicyParams& current,
                  const PolicyParams& ref,
                  std::span<const double> episode_features,
                  std::span<const int> tokens) {
  return kl_from_logs(policy.sequence_logprob(ref, episode_features, tokens),
                      policy.sequence_logprob(current, episode_features, tokens));
}

Group rollout_group(const Policy& policy, const PolicyParams& old_params,
                    const PreferenceEpisode& episode, const GrpoConfig& config,
                    int iteration_index) {
  validate(config);
  const ResponseGrammar grammar(policy.vocab());

  Group group;
  group.episode_id = episode.id;
  group.mode = episode.mode;
  group.ground_truth = episode.ground_truth;
  group.features = episode.observed_features;
  group.responses.reserve(config.group_size);
  group.rewards.reserve(config.group_size);
  group.old_logprobs.reserve(config.group_size);

  for (int i = 0; i < config.group_size; ++i) {
    const std::uint64_t seed = mix_seed(
        config.seed,
        {tag64("rollout"), static_cast<std::uint64_t>(iteration_index),
         static_cast<std::uint64_t>(episode.id),
         static_cast<std::uint64_t>(i)});
    SequenceSample sample =
        policy.sample(old_params, group.features, policy.max_len(), seed);
    group.rewards.push_back(
        grammar.total_reward(sample.tokens, episode.mode, episode.ground_truth)
            .total);
    group.old_logprobs.push_back(sample.logprob);
    group.responses.push_back(std::move(sample));
  }

  std::vector<double> rewards_real(group.rewards.begin(), group.rewards.end());
  group.advantages = compute_advantages(rewards_real);
  return group;
}

namespace {

// Shared evaluation of the surrogate objective. When grad_out is non-null
// it accumulates the analytic gradient; stats are filled at the same point.
double evaluate_groups(const Policy& policy, const ParamsTriple& triple,
                       std::span<const Group> groups, const GrpoConfig& config,
                       PolicyParams* grad_out, GrpoStats* stats) {
  if (groups.empty())
    throw std::invalid_argument("grpo objective requires at least one group");

  double objective_sum = 0.0;
  double kl_sum = 0.0;
  double reward_sum = 0.0;
  std::int64_t clipped_count = 0;
  std::int64_t count = 0;

  for (const Group& group : groups) {
    if (group.responses.empty())
      throw std::invalid_argument("group has no responses");
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
      const auto& tokens = group.responses[i].tokens;
      const double advantage = group.advantages[i];

      const double new_lp =
          policy.sequence_logprob(triple.current, group.features, tokens);
      const double ref_lp =
          policy.sequence_logprob(triple.ref, group.features, tokens);

      const double log_diff = new_lp - group.old_logprobs[i];
      const double ratio = std::exp(clamp_exp_arg(log_diff));
      const double clipped_ratio =
          std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
      const bool clip_active = ratio * advantage > clipped_ratio * advantage;
      const double surrogate =
          clip_active ? clipped_ratio * advantage : ratio * advantage;

      const double t = ref_lp - new_lp;
      const double kl = std::exp(clamp_exp_arg(t)) - t - 1.0;

      objective_sum += surrogate - config.kl_weight * kl;
      kl_sum += kl;
      reward_sum += group.rewards[i];
      clipped_count += clip_active ? 1 : 0;
      ++count;

      if (grad_out) {
        // d surrogate / d new_lp: the clipped branch is constant in the
        // ratio; the clamp zeroes the exponential outside +-50.
        double coeff = 0.0;
        if (!clip_active && std::abs(log_diff) < kExpClamp)
          coeff += advantage * ratio;
        // d (-beta kl) / d new_lp = beta (e^t_clamped [gate] - 1)
        const double kl_exp =
            std::abs(t) < kExpClamp ? std::exp(clamp_exp_arg(t)) : 0.0;
        coeff += config.kl_weight * (kl_exp - 1.0);
        if (coeff != 0.0) {
          PolicyParams g =
              policy.logprob_grad(triple.current, group.features, tokens);
          grad_out->axpy(coeff, g);
        }
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(count);
  if (grad_out) grad_out->scale(inv);
  if (stats) {
    stats->objective = objective_sum * inv;
    stats->mean_kl = kl_sum * inv;
    stats->mean_reward = reward_sum * inv;
    stats->clip_fraction = static_cast<double>(clipped_count) * inv;
  }
  return objective_sum * inv;
}

}  // namespace

double grpo_objective(const Policy& policy, const ParamsTriple& triple,
                      std::span<const Group> groups, const GrpoConfig& config) {
  validate(config);
  return evaluate_groups(policy, triple, groups, config, nullptr, nullptr);
}

PolicyParams grpo_objective_grad(const Policy& policy,
                                 const ParamsTriple& triple,
                                 std::span<const Group> groups,
                                 const GrpoConfig& config, GrpoStats* stats) {
  validate(config);
  PolicyParams grad = policy.zero_params();
  evaluate_groups(policy, triple, groups, config, &grad, stats);
  return grad;
}

GrpoStats grpo_update(const Policy& policy, ParamsTriple& triple,
                      std::span<const PreferenceEpisode> batch,
                      const GrpoConfig& config, int iteration_index) {
  validate(config);
  if (batch.empty())
    throw std::invalid_argument("grpo_update requires a non-empty batch");

  triple.old = triple.current;

  std::vector<Group> groups;
  groups.reserve(batch.size());
  for (const PreferenceEpisode& episode : batch)
    groups.push_back(
        rollout_group(policy, triple.old, episode, config, iteration_index));

  GrpoStats stats;
  stats.iteration = iteration_index;
  PolicyParams grad =
      grpo_objective_grad(policy, triple, groups, config, &stats);
  triple.current.axpy(config.learning_rate, grad);
  return stats;
}

}  // namespace cotrm
