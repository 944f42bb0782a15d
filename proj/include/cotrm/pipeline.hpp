#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cotrm/episode.hpp"
#include "cotrm/grammar.hpp"
#include "cotrm/grpo.hpp"
#include "cotrm/policy.hpp"
#include "cotrm/sft.hpp"

namespace cotrm {

// The synthetic stand-in for the trace-generating teacher model: it writes
// canonical transcripts from the true qualities but flips the final answer
// to the losing candidate with probability error_rate.
struct OracleConfig {
  double error_rate = 0.1;   // eta
  double noise_sigma = 0.05; // sigma, observation noise used at generation
  std::uint64_t seed = 0;
};

// Per-stage summary. Wall-clock time is reported on stdout only; persisted
// reports carry none so reruns stay byte-identical.
struct StageReport {
  std::string stage;
  std::int64_t consumed = 0;
  std::int64_t retained = 0;
  std::vector<double> loss_trajectory;     // mean loss per epoch (SFT stages)
  std::vector<GrpoStats> grpo_trajectory;  // per-iteration stats (GRPO stage)
  std::optional<double> eval_accuracy_cot;
  std::optional<double> eval_format_rate_cot;
  std::optional<double> eval_consistency_rate_cot;
  std::optional<double> eval_accuracy_direct;
  std::optional<double> eval_format_rate_direct;
  bool skipped = false;
  double wall_seconds = 0.0;
};

enum class Decode { greedy, sample };

struct EvalRecordEntry {
  std::int64_t episode_id = 0;
  std::string transcript;
  int r_fmt = 0;
  int r_acc = 0;
  bool parsed = false;
  bool consistent = false;
};

struct EvalResult {
  double accuracy = 0.0;
  double format_rate = 0.0;
  std::optional<double> consistency_rate;  // cot mode only
  std::vector<EvalRecordEntry> records;
};

// Draws count episodes: quality entries uniform in 0..9 with tied column
// sums redrawn, observed features Q/9 plus Gaussian noise, and exactly
// round(count * direct_fraction) episodes marked direct. Ids are
// id_base..id_base+count-1.
std::vector<PreferenceEpisode> gen_episodes(std::int64_t count, int dim_count,
                                            double noise_sigma,
                                            double direct_fraction,
                                            std::uint64_t seed,
                                            std::int64_t id_base = 0);

// The canonical transcript content for an episode: dim scores = Q, stated
// totals = column sums, answer = ground truth.
ParsedResponse canonical_response(const PreferenceEpisode& episode);

struct DistillResult {
  std::vector<TrainingSample> retained;
  std::int64_t discarded = 0;
};

// Renders one oracle transcript per episode (answer flipped with
// probability error_rate) and keeps those whose answer matches ground
// truth.
DistillResult distill_oracle_dataset(std::span<const PreferenceEpisode> episodes,
                                     const ResponseGrammar& grammar,
                                     const OracleConfig& oracle);

// Supervised cold start on the filtered oracle dataset. Throws a runtime
// error when the filter retains nothing. Eval sets may be empty spans, in
// which case the corresponding report fields stay absent.
StageReport cold_start_stage(const Policy& policy, PolicyParams& params,
                             std::span<const PreferenceEpisode> episodes,
                             const OracleConfig& oracle,
                             const SftConfig& config,
                             std::span<const PreferenceEpisode> eval_cot = {},
                             std::span<const PreferenceEpisode> eval_direct = {});

struct RejectionResult {
  std::vector<TrainingSample> retained;
  std::vector<std::int64_t> retained_ids;  // parallel to retained
  std::vector<PreferenceEpisode> hard_pool;
  StageReport report;
};

// Samples rollouts_per_episode responses per episode from the current
// policy; the first fully-correct response per episode becomes a training
// sample, episodes with none go to the hard pool; then fine-tunes on the
// retained set.
RejectionResult rejection_sampling_stage(
    const Policy& policy, PolicyParams& params,
    std::span<const PreferenceEpisode> episodes, int rollouts_per_episode,
    const SftConfig& config,
    std::span<const PreferenceEpisode> eval_cot = {},
    std::span<const PreferenceEpisode> eval_direct = {});

// Reinforcement fine-tuning over the hard pool with the stage-entry params
// as the frozen reference. An empty pool yields a skipped no-op report.
StageReport grpo_stage(const Policy& policy, PolicyParams& params,
                       std::span<const PreferenceEpisode> hard_pool,
                       const GrpoConfig& config,
                       std::span<const PreferenceEpisode> eval_cot = {},
                       std::span<const PreferenceEpisode> eval_direct = {});

// Decodes one response per episode and scores it. All episodes must carry
// the requested mode. Sampling decode derives per-episode seeds from seed.
EvalResult evaluate(const Policy& policy, const PolicyParams& params,
                    std::span<const PreferenceEpisode> episodes, Decode decode,
                    Mode mode, std::uint64_t seed = 0);

}  // namespace cotrm
