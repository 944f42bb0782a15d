#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cotrm/grammar.hpp"
#include "cotrm/sft.hpp"
#include "cotrm/util.hpp"
#include "testutil.hpp"

using namespace cotrm;

namespace {

std::vector<double> random_features(std::mt19937_64& rng, int n) {
  std::vector<double> f(n);
  for (double& x : f) x = gaussian(rng);
  return f;
}

TrainingSample random_sample(std::mt19937_64& rng, const Policy& policy) {
  TrainingSample s;
  s.episode_features = random_features(rng, policy.episode_feature_dim());
  const int len = 1 + static_cast<int>(uniform_below(
                          rng, static_cast<std::uint64_t>(policy.max_len())));
  s.target_tokens.resize(len);
  for (int& t : s.target_tokens)
    t = static_cast<int>(uniform_below(rng, policy.vocab().size()));
  return s;
}

}  // namespace

TEST_CASE("loss is the negative sequence log-likelihood") {
  const Vocabulary vocab(10);
  REQUIRE(vocab.size() == 26);
  const Policy policy(vocab, 4, 5, 19);
  const PolicyParams zero = policy.zero_params();

  TrainingSample s;
  s.episode_features = {0.1, 0.2, 0.3, 0.4};
  std::mt19937_64 rng(3);
  s.target_tokens.resize(19);
  for (int& t : s.target_tokens)
    t = static_cast<int>(uniform_below(rng, 26));

  const double loss = sft_loss(policy, zero, s);
  CHECK(loss == doctest::Approx(61.903834222408158864).epsilon(1e-12));
  CHECK(loss == -policy.sequence_logprob(zero, s.episode_features,
                                         s.target_tokens));
  CHECK(loss >= 0.0);
}

TEST_CASE("loss gradient is the negated log-prob gradient") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(7, {tag64("sft_grad")}));

  for (int trial = 0; trial < 20; ++trial) {
    PolicyParams p = policy.init_params(rng());
    p.scale(4.0);
    const TrainingSample s = random_sample(rng, policy);

    double loss = 0.0;
    PolicyParams grad = sft_loss_grad(policy, p, s, &loss);
    CHECK(loss == sft_loss(policy, p, s));

    PolicyParams neg = policy.logprob_grad(p, s.episode_features,
                                           s.target_tokens);
    neg.scale(-1.0);
    CHECK(testutil::rel_error(grad, neg) == 0.0);

    const PolicyParams fd = testutil::fd_gradient(
        [&](const PolicyParams& q) { return sft_loss(policy, q, s); }, p,
        1e-5);
    CHECK(testutil::rel_error(grad, fd) < 1e-4);
  }
}

TEST_CASE("one small step on a sample lowers its loss") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(11, {tag64("sft_step")}));
  PolicyParams params = policy.zero_params();
  const TrainingSample s = random_sample(rng, policy);

  const double before = sft_loss(policy, params, s);
  PolicyParams grad = sft_loss_grad(policy, params, s);
  params.axpy(-1e-3, grad);
  CHECK(sft_loss(policy, params, s) < before);
}

TEST_CASE("epoch with zero learning rate leaves parameters untouched") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(13, {tag64("sft_zero")}));
  PolicyParams params = policy.init_params(rng());
  const PolicyParams before = params;

  std::vector<TrainingSample> data;
  for (int i = 0; i < 7; ++i) data.push_back(random_sample(rng, policy));

  SftConfig config;
  config.learning_rate = 0.0;
  config.grad_accumulation_steps = 3;
  const double mean_loss = sft_epoch(policy, params, data, config);
  CHECK(params == before);
  CHECK(mean_loss > 0.0);
}

TEST_CASE("epoch is deterministic in the seed") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(17, {tag64("sft_det")}));
  const PolicyParams start = policy.init_params(rng());

  std::vector<TrainingSample> data;
  for (int i = 0; i < 9; ++i) data.push_back(random_sample(rng, policy));

  SftConfig config;
  config.learning_rate = 1e-2;
  config.grad_accumulation_steps = 4;
  config.seed = 123;

  PolicyParams a = start;
  PolicyParams b = start;
  const double la = sft_epoch(policy, a, data, config);
  const double lb = sft_epoch(policy, b, data, config);
  CHECK(a == b);
  CHECK(la == lb);

  config.seed = 124;
  PolicyParams c = start;
  sft_epoch(policy, c, data, config);
  CHECK(a != c);
}

TEST_CASE("repeated epochs on one sample descend monotonically") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(19, {tag64("sft_mono")}));
  PolicyParams params = policy.zero_params();

  const std::vector<TrainingSample> data{random_sample(rng, policy)};
  SftConfig config;
  config.learning_rate = 1e-3;
  config.grad_accumulation_steps = 1;

  double previous = sft_loss(policy, params, data[0]);
  for (int epoch = 0; epoch < 60; ++epoch) {
    const double mean = sft_epoch(policy, params, data, config);
    CHECK(mean <= previous + 1e-9);
    previous = mean;
  }
}

TEST_CASE("accumulation over the whole dataset equals one mean-gradient step") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(23, {tag64("sft_accum")}));
  const PolicyParams start = policy.init_params(rng());

  const int k = 5;
  std::vector<TrainingSample> data;
  for (int i = 0; i < k; ++i) data.push_back(random_sample(rng, policy));

  SftConfig config;
  config.learning_rate = 1e-2;
  config.grad_accumulation_steps = k;
  config.seed = 7;

  PolicyParams trained = start;
  sft_epoch(policy, trained, data, config);

  // One explicit step against the dataset-mean gradient; order of summation
  // inside the window does not matter up to rounding.
  PolicyParams mean_grad = policy.zero_params();
  for (const TrainingSample& s : data)
    mean_grad.axpy(1.0 / k, sft_loss_grad(policy, start, s));
  PolicyParams manual = start;
  manual.axpy(-config.learning_rate, mean_grad);

  CHECK(testutil::rel_error(trained, manual) < 1e-12);
}

TEST_CASE("a trailing short window still applies its update") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  std::mt19937_64 rng(mix_seed(29, {tag64("sft_tail")}));
  const PolicyParams start = policy.init_params(rng());

  // One sample, accumulation 4: the single gradient lands in a short window
  // and must still move the parameters, scaled by lr / 4.
  const std::vector<TrainingSample> data{random_sample(rng, policy)};
  SftConfig config;
  config.learning_rate = 1e-2;
  config.grad_accumulation_steps = 4;

  PolicyParams trained = start;
  sft_epoch(policy, trained, data, config);
  CHECK(trained != start);

  PolicyParams manual = start;
  manual.axpy(-config.learning_rate / 4.0,
              sft_loss_grad(policy, start, data[0]));
  CHECK(testutil::rel_error(trained, manual) < 1e-12);
}

TEST_CASE("epoch rejects bad inputs") {
  const Vocabulary vocab(2);
  const Policy policy(vocab, 3, 4, 8);
  PolicyParams params = policy.zero_params();
  const std::vector<TrainingSample> empty;
  SftConfig config;
  CHECK_THROWS_AS(sft_epoch(policy, params, empty, config),
                  std::invalid_argument);

  std::mt19937_64 rng(1);
  const std::vector<TrainingSample> data{random_sample(rng, policy)};
  config.learning_rate = -1.0;
  CHECK_THROWS_AS(sft_epoch(policy, params, data, config),
                  std::invalid_argument);
  config.learning_rate = 1e-2;
  config.grad_accumulation_steps = 0;
  CHECK_THROWS_AS(sft_epoch(policy, params, data, config),
                  std::invalid_argument);
}
