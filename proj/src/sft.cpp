#include "cotrm/sft.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

#include "cotrm/util.hpp"

namespace cotrm {

double sft_loss(const Policy& policy, const PolicyParams& params,
                const TrainingSample& sample) {
  return -policy.sequence_logprob(params, sample.episode_features,
                                  sample.target_tokens);
}

PolicyParams sft_loss_grad(const Policy& policy, const PolicyParams& params,
                           const TrainingSample& sample, double* loss_out) {
  double logprob = 0.0;
  PolicyParams grad = policy.logprob_grad(params, sample.episode_features,
                                          sample.target_tokens, &logprob);
  grad.scale(-1.0);
  if (loss_out) *loss_out = -logprob;
  return grad;
}

double sft_epoch(const Policy& policy, PolicyParams& params,
                 std::span<const TrainingSample> dataset,
                 const SftConfig& config) {
  if (dataset.empty())
    throw std::invalid_argument("sft_epoch requires a non-empty dataset");
  if (config.learning_rate < 0.0)
    throw std::invalid_argument("learning_rate must be >= 0");
  if (config.grad_accumulation_steps < 1)
    throw std::invalid_argument("grad_accumulation_steps must be >= 1");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  shuffle_inplace(order, rng);

  const double step = config.learning_rate / config.grad_accumulation_steps;
  PolicyParams accum = policy.zero_params();
  int window = 0;
  double loss_sum = 0.0;

  for (std::size_t idx : order) {
    double loss = 0.0;
    PolicyParams grad = sft_loss_grad(policy, params, dataset[idx], &loss);
    loss_sum += loss;
    accum.axpy(1.0, grad);
    if (++window == config.grad_accumulation_steps) {
      params.axpy(-step, accum);
      accum.fill(0.0);
      window = 0;
    }
  }
  if (window > 0) params.axpy(-step, accum);

  return loss_sum / static_cast<double>(dataset.size());
}

}  // namespace cotrm
