#include "cotrm/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "cotrm/util.hpp"

namespace cotrm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

SftConfig epoch_config(const SftConfig& base, int epoch) {
  SftConfig cfg = base;
  cfg.seed = mix_seed(base.seed,
                      {tag64("epoch"), static_cast<std::uint64_t>(epoch)});
  return cfg;
}

void attach_evals(const Policy& policy, const PolicyParams& params,
                  std::span<const PreferenceEpisode> eval_cot,
                  std::span<const PreferenceEpisode> eval_direct,
                  StageReport& report) {
  if (!eval_cot.empty()) {
    EvalResult r = evaluate(policy, params, eval_cot, Decode::greedy, Mode::cot);
    report.eval_accuracy_cot = r.accuracy;
    report.eval_format_rate_cot = r.format_rate;
    report.eval_consistency_rate_cot = r.consistency_rate;
  }
  if (!eval_direct.empty()) {
    EvalResult r =
        evaluate(policy, params, eval_direct, Decode::greedy, Mode::direct);
    report.eval_accuracy_direct = r.accuracy;
    report.eval_format_rate_direct = r.format_rate;
  }
}

}  // namespace

std::vector<PreferenceEpisode> gen_episodes(std::int64_t count, int dim_count,
                                            double noise_sigma,
                                            double direct_fraction,
                                            std::uint64_t seed,
                                            std::int64_t id_base) {
  if (count < 1) throw std::invalid_argument("episode count must be >= 1");
  if (dim_count < 1) throw std::invalid_argument("dim_count must be >= 1");
  if (noise_sigma < 0.0)
    throw std::invalid_argument("noise_sigma must be >= 0");
  if (direct_fraction < 0.0 || direct_fraction > 1.0)
    throw std::invalid_argument("direct_fraction must be in [0, 1]");

  std::mt19937_64 rng(seed);
  std::vector<PreferenceEpisode> episodes;
  episodes.reserve(count);

  for (std::int64_t i = 0; i < count; ++i) {
    PreferenceEpisode ep;
    ep.id = id_base + i;
    ep.qualities.assign(dim_count, {0, 0});
    int sum1 = 0;
    int sum2 = 0;
    do {
      sum1 = 0;
      sum2 = 0;
      for (auto& row : ep.qualities) {
        row[0] = static_cast<int>(uniform_below(rng, 10));
        row[1] = static_cast<int>(uniform_below(rng, 10));
        sum1 += row[0];
        sum2 += row[1];
      }
    } while (sum1 == sum2);
    ep.ground_truth = sum1 > sum2 ? 1 : 2;

    ep.observed_features.reserve(2 * dim_count + 2);
    for (const auto& row : ep.qualities)
      for (int c = 0; c < 2; ++c)
        ep.observed_features.push_back(row[c] / 9.0 +
                                       noise_sigma * gaussian(rng));
    ep.observed_features.push_back(0.0);  // mode flag, set below
    ep.observed_features.push_back(1.0);
    ep.mode = Mode::cot;
    episodes.push_back(std::move(ep));
  }

  // Exactly round(count * direct_fraction) direct episodes, chosen by a
  // partial Fisher-Yates pass over the index range.
  const std::int64_t direct_count =
      std::llround(static_cast<double>(count) * direct_fraction);
  std::vector<std::int64_t> order(count);
  std::iota(order.begin(), order.end(), std::int64_t{0});
  for (std::int64_t j = 0; j < direct_count; ++j) {
    const std::int64_t k =
        j + static_cast<std::int64_t>(uniform_below(rng, count - j));
    std::swap(order[j], order[k]);
    auto& ep = episodes[order[j]];
    ep.mode = Mode::direct;
    ep.observed_features[2 * dim_count] = 1.0;
  }
  return episodes;
}

ParsedResponse canonical_response(const PreferenceEpisode& episode) {
  ParsedResponse p;
  p.mode = episode.mode;
  p.answer = episode.ground_truth;
  if (episode.mode == Mode::cot) {
    p.dim_scores = episode.qualities;
    int sum1 = 0;
    int sum2 = 0;
    for (const auto& row : episode.qualities) {
      sum1 += row[0];
      sum2 += row[1];
    }
    p.stated_totals = {sum1, sum2};
  }
  return p;
}

DistillResult distill_oracle_dataset(std::span<const PreferenceEpisode> episodes,
                                     const ResponseGrammar& grammar,
                                     const OracleConfig& oracle) {
  if (oracle.error_rate < 0.0 || oracle.error_rate > 1.0)
    throw std::invalid_argument("error_rate must be in [0, 1]");

  std::mt19937_64 rng(oracle.seed);
  DistillResult result;
  for (const PreferenceEpisode& ep : episodes) {
    ParsedResponse p = canonical_response(ep);
    if (uniform01(rng) < oracle.error_rate) p.answer = 3 - p.answer;
    std::vector<int> tokens = grammar.render(p);
    if (p.answer == ep.ground_truth) {
      result.retained.push_back(
          {ep.observed_features, std::move(tokens), ep.mode});
    } else {
      ++result.discarded;
    }
  }
  return result;
}

StageReport cold_start_stage(const Policy& policy, PolicyParams& params,
                             std::span<const PreferenceEpisode> episodes,
                             const OracleConfig& oracle, const SftConfig& config,
                             std::span<const PreferenceEpisode> eval_cot,
                             std::span<const PreferenceEpisode> eval_direct) {
  if (episodes.empty())
    throw std::invalid_argument("cold start requires a non-empty episode set");
  const auto start = Clock::now();
  const ResponseGrammar grammar(policy.vocab());

  DistillResult distilled = distill_oracle_dataset(episodes, grammar, oracle);
  if (distilled.retained.empty())
    throw std::runtime_error(
        "cold start stage: the oracle filter retained zero training samples");

  StageReport report;
  report.stage = "cold_start";
  report.consumed = static_cast<std::int64_t>(episodes.size());
  report.retained = static_cast<std::int64_t>(distilled.retained.size());
  for (int e = 0; e < config.epochs; ++e)
    report.loss_trajectory.push_back(
        sft_epoch(policy, params, distilled.retained, epoch_config(config, e)));

  attach_evals(policy, params, eval_cot, eval_direct, report);
  report.wall_seconds = seconds_since(start);
  return report;
}

RejectionResult rejection_sampling_stage(
    const Policy& policy, PolicyParams& params,
    std::span<const PreferenceEpisode> episodes, int rollouts_per_episode,
    const SftConfig& config, std::span<const PreferenceEpisode> eval_cot,
    std::span<const PreferenceEpisode> eval_direct) {
  if (episodes.empty())
    throw std::invalid_argument(
        "rejection sampling requires a non-empty episode set");
  if (rollouts_per_episode < 1)
    throw std::invalid_argument("rollouts_per_episode must be >= 1");
  const auto start = Clock::now();
  const ResponseGrammar grammar(policy.vocab());

  RejectionResult result;
  for (const PreferenceEpisode& ep : episodes) {
    bool solved = false;
    for (int k = 0; k < rollouts_per_episode && !solved; ++k) {
      const std::uint64_t seed = mix_seed(
          config.seed, {tag64("reject_rollout"),
                        static_cast<std::uint64_t>(ep.id),
                        static_cast<std::uint64_t>(k)});
      SequenceSample s =
          policy.sample(params, ep.observed_features, policy.max_len(), seed);
      if (grammar.total_reward(s.tokens, ep.mode, ep.ground_truth).total == 2) {
        result.retained.push_back(
            {ep.observed_features, std::move(s.tokens), ep.mode});
        result.retained_ids.push_back(ep.id);
        solved = true;
      }
    }
    if (!solved) result.hard_pool.push_back(ep);
  }

  result.report.stage = "reject_sample";
  result.report.consumed = static_cast<std::int64_t>(episodes.size());
  result.report.retained = static_cast<std::int64_t>(result.retained.size());
  if (!result.retained.empty()) {
    for (int e = 0; e < config.epochs; ++e)
      result.report.loss_trajectory.push_back(
          sft_epoch(policy, params, result.retained, epoch_config(config, e)));
  }

  attach_evals(policy, params, eval_cot, eval_direct, result.report);
  result.report.wall_seconds = seconds_since(start);
  return result;
}

StageReport grpo_stage(const Policy& policy, PolicyParams& params,
                       std::span<const PreferenceEpisode> hard_pool,
                       const GrpoConfig& config,
                       std::span<const PreferenceEpisode> eval_cot,
                       std::span<const PreferenceEpisode> eval_direct) {
  StageReport report;
  report.stage = "grpo";
  report.consumed = static_cast<std::int64_t>(hard_pool.size());
  report.retained = report.consumed;
  if (hard_pool.empty()) {
    report.skipped = true;
    return report;
  }
  const auto start = Clock::now();

  ParamsTriple triple{params, params, params};
  const std::size_t pool = hard_pool.size();
  const std::size_t batch_size =
      std::min<std::size_t>(config.batch_size, pool);

  for (int it = 0; it < config.iterations; ++it) {
    std::vector<PreferenceEpisode> batch;
    batch.reserve(batch_size);
    for (std::size_t j = 0; j < batch_size; ++j)
      batch.push_back(
          hard_pool[(static_cast<std::size_t>(it) * batch_size + j) % pool]);
    report.grpo_trajectory.push_back(
        grpo_update(policy, triple, batch, config, it));
  }
  params = triple.current;

  attach_evals(policy, params, eval_cot, eval_direct, report);
  report.wall_seconds = seconds_since(start);
  return report;
}

EvalResult evaluate(const Policy& policy, const PolicyParams& params,
                    std::span<const PreferenceEpisode> episodes, Decode decode,
                    Mode mode, std::uint64_t seed) {
  if (episodes.empty())
    throw std::invalid_argument("evaluate requires a non-empty episode set");
  const ResponseGrammar grammar(policy.vocab());

  EvalResult result;
  result.records.reserve(episodes.size());
  std::int64_t acc_sum = 0;
  std::int64_t fmt_sum = 0;
  std::int64_t consistent_sum = 0;

  for (const PreferenceEpisode& ep : episodes) {
    if (ep.mode != mode)
      throw std::invalid_argument(
          "episode " + std::to_string(ep.id) + " has mode " +
          to_string(ep.mode) + " but the evaluation requested " +
          to_string(mode));

    std::vector<int> tokens;
    if (decode == Decode::greedy) {
      tokens = policy.greedy(params, ep.observed_features);
    } else {
      const std::uint64_t ep_seed =
          mix_seed(seed, {tag64("eval"), static_cast<std::uint64_t>(ep.id)});
      tokens = policy
                   .sample(params, ep.observed_features, policy.max_len(),
                           ep_seed)
                   .tokens;
    }

    EvalRecordEntry rec;
    rec.episode_id = ep.id;
    rec.transcript = join_tokens(policy.vocab(), tokens);
    rec.r_fmt = grammar.format_reward(tokens, mode);
    ParseResult parsed = grammar.parse(tokens, mode);
    rec.parsed = parsed.ok();
    rec.r_acc = ResponseGrammar::accuracy_reward(parsed, ep.ground_truth);
    rec.consistent =
        mode == Mode::cot && parsed.ok() &&
        ResponseGrammar::consistency_check(*parsed.parsed).consistent;

    acc_sum += rec.r_acc;
    fmt_sum += rec.r_fmt;
    consistent_sum += rec.consistent ? 1 : 0;
    result.records.push_back(std::move(rec));
  }

  const double n = static_cast<double>(episodes.size());
  result.accuracy = acc_sum / n;
  result.format_rate = fmt_sum / n;
  if (mode == Mode::cot) result.consistency_rate = consistent_sum / n;
  return result;
}

}  // namespace cotrm
