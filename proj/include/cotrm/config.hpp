#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "cotrm/grpo.hpp"
#include "cotrm/sft.hpp"

namespace cotrm {

// Full experiment configuration. Stage seeds are not stored here; every
// stage derives its own stream from the single global seed, so one integer
// pins the whole run.
struct RunConfig {
  int dim_count = 3;
  int hidden = 64;
  int max_len = 21;  // 3 * dim_count + 12
  double noise_sigma = 0.05;
  double oracle_error_rate = 0.1;
  double direct_fraction = 0.1;
  std::int64_t train_size = 2000;
  std::int64_t eval_size = 500;
  SftConfig cold_start{.learning_rate = 1e-2,
                       .grad_accumulation_steps = 16,
                       .epochs = 10,
                       .seed = 0};
  SftConfig reject_sft{.learning_rate = 1e-2,
                       .grad_accumulation_steps = 16,
                       .epochs = 2,
                       .seed = 0};
  int reject_rollouts = 4;  // K
  GrpoConfig grpo;
  std::uint64_t seed = 42;
  std::string out_dir;
  std::string preset = "default";

  int episode_feature_dim() const { return 2 * dim_count + 2; }

  // Throws ValidationError naming the offending field.
  void validate() const;
};

// Overlays the named preset on an existing config. "paper" pins the
// reference hyperparameters group_size = 8 and kl_weight = 0.04 and labels
// the run so the manifest records where those two values come from;
// "default" only labels. Throws UsageError on unknown names.
void apply_preset(RunConfig& config, const std::string& name);

// Preset applied to a fresh default config.
RunConfig make_preset(const std::string& name);

nlohmann::json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

// File round-trip; load validates. Throws IoError on unreadable or
// unparseable files.
void save_config(const std::string& path, const RunConfig& config);
RunConfig load_config(const std::string& path);

}  // namespace cotrm
