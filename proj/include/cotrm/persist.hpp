#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cotrm/episode.hpp"
#include "cotrm/policy.hpp"

namespace cotrm {

class Policy;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Write-then-rename so readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view content);

// Reads a whole file; throws IoError when unreadable.
std::string read_file(const std::filesystem::path& path);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointVersion;
  std::string stage;
  int dim_count = 0;
  int hidden = 0;
  int max_len = 0;
  int episode_feature_dim = 0;
  std::vector<std::string> vocabulary;
  PolicyParams params;
  std::string digest;  // sha256 of the canonical params serialization
};

nlohmann::json params_to_json(const PolicyParams& params);
PolicyParams params_from_json(const nlohmann::json& j);

// Canonical digest of a parameter set: sha256 of its compact JSON dump.
std::string params_digest(const PolicyParams& params);

void save_checkpoint(const std::filesystem::path& path, const Policy& policy,
                     const PolicyParams& params, const std::string& stage);

// Verifies version should be current, the embedded digest, and internal
// shape consistency. Throws IoError for unreadable/unparseable files and
// ValidationError for version, digest, or shape problems.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Episode datasets as one JSON record per line.
void save_episodes(const std::filesystem::path& path,
                   std::span<const PreferenceEpisode> episodes);
std::vector<PreferenceEpisode> load_episodes(const std::filesystem::path& path);

}  // namespace cotrm
