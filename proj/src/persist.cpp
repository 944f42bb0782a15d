#include "cotrm/persist.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include "cotrm/errors.hpp"

namespace cotrm {

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("sha256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

void atomic_write(const std::filesystem::path& path, std::string_view content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("failed to move " + tmp.string() + " to " + path.string() +
                  ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return buffer.str();
}

nlohmann::json params_to_json(const PolicyParams& params) {
  auto matrix_to_json = [](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < m.rows; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < m.cols; ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  return nlohmann::json{{"w1", matrix_to_json(params.w1)},
                        {"b1", params.b1},
                        {"w2", matrix_to_json(params.w2)},
                        {"b2", params.b2}};
}

PolicyParams params_from_json(const nlohmann::json& j) {
  auto matrix_from_json = [](const nlohmann::json& rows, const char* name) {
    if (!rows.is_array() || rows.empty())
      throw ValidationError(std::string("checkpoint: tensor ") + name +
                            " is not a non-empty array");
    const std::size_t cols = rows.front().size();
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || rows[r].size() != cols)
        throw ValidationError(std::string("checkpoint: tensor ") + name +
                              " is ragged");
      for (std::size_t c = 0; c < cols; ++c)
        m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c].get<double>();
    }
    return m;
  };
  PolicyParams params;
  try {
    params.w1 = matrix_from_json(j.at("w1"), "w1");
    params.b1 = j.at("b1").get<std::vector<double>>();
    params.w2 = matrix_from_json(j.at("w2"), "w2");
    params.b2 = j.at("b2").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad params block: ") +
                          e.what());
  }
  return params;
}

std::string params_digest(const PolicyParams& params) {
  return sha256_hex(params_to_json(params).dump());
}

void save_checkpoint(const std::filesystem::path& path, const Policy& policy,
                     const PolicyParams& params, const std::string& stage) {
  nlohmann::json j{
      {"kind", "checkpoint"},
      {"format_version", kCheckpointVersion},
      {"stage", stage},
      {"config",
       {{"dim_count", policy.vocab().dim_count()},
        {"hidden", policy.hidden()},
        {"max_len", policy.max_len()},
        {"episode_feature_dim", policy.episode_feature_dim()},
        {"optimizer", "sgd"},
        {"lr_schedule", "constant"}}},
      {"vocabulary", policy.vocab().tokens()},
      {"params", params_to_json(params)},
      {"digest", params_digest(params)},
  };
  atomic_write(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint " + path.string() +
                  " is truncated or not valid JSON: " + e.what());
  }

  Checkpoint cp;
  try {
    cp.format_version = j.at("format_version").get<int>();
    if (cp.format_version != kCheckpointVersion)
      throw ValidationError(
          "checkpoint " + path.string() + " has format_version " +
          std::to_string(cp.format_version) + "; this build reads version " +
          std::to_string(kCheckpointVersion));
    cp.stage = j.value("stage", std::string{});
    const auto& config = j.at("config");
    cp.dim_count = config.at("dim_count").get<int>();
    cp.hidden = config.at("hidden").get<int>();
    cp.max_len = config.at("max_len").get<int>();
    cp.episode_feature_dim = config.at("episode_feature_dim").get<int>();
    cp.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    cp.params = params_from_json(j.at("params"));
    cp.digest = j.at("digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint " + path.string() +
                          " is missing fields: " + e.what());
  }

  if (params_digest(cp.params) != cp.digest)
    throw ValidationError("checkpoint " + path.string() +
                          " failed its digest check");

  const int vocab_size = 16 + cp.dim_count;
  const int feature_dim =
      cp.episode_feature_dim + 2 * vocab_size + cp.max_len + 1;
  if (static_cast<int>(cp.vocabulary.size()) != vocab_size ||
      cp.params.w1.rows != cp.hidden || cp.params.w1.cols != feature_dim ||
      static_cast<int>(cp.params.b1.size()) != cp.hidden ||
      cp.params.w2.rows != vocab_size || cp.params.w2.cols != cp.hidden ||
      static_cast<int>(cp.params.b2.size()) != vocab_size)
    throw ValidationError("checkpoint " + path.string() +
                          " has inconsistent shapes for its declared config");
  return cp;
}

void save_episodes(const std::filesystem::path& path,
                   std::span<const PreferenceEpisode> episodes) {
  std::string buffer;
  for (const PreferenceEpisode& ep : episodes) {
    nlohmann::json j{{"id", ep.id},
                     {"mode", to_string(ep.mode)},
                     {"ground_truth", ep.ground_truth},
                     {"qualities", ep.qualities},
                     {"features", ep.observed_features}};
    buffer += j.dump();
    buffer += '\n';
  }
  atomic_write(path, buffer);
}

std::vector<PreferenceEpisode> load_episodes(
    const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<PreferenceEpisode> episodes;
  std::size_t line_start = 0;
  int line_no = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    ++line_no;
    const std::string_view line(text.data() + line_start,
                                line_end - line_start);
    line_start = line_end + 1;
    if (line.empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("dataset " + path.string() + " line " +
                    std::to_string(line_no) + " is not valid JSON: " +
                    e.what());
    }
    PreferenceEpisode ep;
    try {
      ep.id = j.at("id").get<std::int64_t>();
      ep.mode = mode_from_string(j.at("mode").get<std::string>());
      ep.ground_truth = j.at("ground_truth").get<int>();
      ep.qualities = j.at("qualities").get<std::vector<std::array<int, 2>>>();
      ep.observed_features = j.at("features").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("dataset " + path.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace cotrm
