#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cotrm/config.hpp"

namespace cotrm {

inline constexpr const char* kOutRootEnv = "COTRM_OUT";

inline constexpr const char* kStageColdStart = "cold_start";
inline constexpr const char* kStageRejectSample = "reject_sample";
inline constexpr const char* kStageGrpo = "grpo";

struct TrainOptions {
  // Subset of {cold_start, reject_sample, grpo} in pipeline order; empty
  // means all three.
  std::vector<std::string> stages;
  // Episode file that overrides the hard pool as the GRPO stage input
  // (e.g. a direct-mode set for the no-reasoning ablation).
  std::string grpo_episodes;
  // Which checkpoint a standalone GRPO stage starts from.
  std::string grpo_from = kStageRejectSample;
};

struct EvalOptions {
  std::string checkpoint;
  std::string episodes;
  std::string mode = "cot";
  std::string decode = "greedy";
};

struct InspectOptions {
  std::string path;
  std::int64_t index = -1;  // record index for datasets
};

// Output directory resolution: config.out_dir (default "."), resolved
// against $COTRM_OUT when relative. Creates the directory.
std::filesystem::path resolve_out_dir(const RunConfig& config);

int cmd_gen_data(const RunConfig& config);
int cmd_train(const RunConfig& config, const TrainOptions& options);
int cmd_eval(const RunConfig& config, const EvalOptions& options);
int cmd_inspect(const InspectOptions& options);

}  // namespace cotrm
