#include "cotrm/config.hpp"

#include <fstream>

#include "cotrm/errors.hpp"
#include "cotrm/persist.hpp"
#include "cotrm/vocab.hpp"

namespace cotrm {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError("config: " + message);
}

}  // namespace

void RunConfig::validate() const {
  require(dim_count >= 1, "dim_count must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(max_len >= 3 * dim_count + 11,
          "max_len must be >= 3 * dim_count + 11 so a full cot response and "
          "its EOS fit");
  require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  require(oracle_error_rate >= 0.0 && oracle_error_rate <= 1.0,
          "oracle_error_rate must be in [0, 1]");
  require(direct_fraction >= 0.0 && direct_fraction <= 1.0,
          "direct_fraction must be in [0, 1]");
  require(train_size >= 1, "train_size must be >= 1");
  require(eval_size >= 1, "eval_size must be >= 1");
  require(cold_start.learning_rate > 0.0,
          "cold_start.learning_rate must be > 0");
  require(cold_start.grad_accumulation_steps >= 1,
          "cold_start.grad_accumulation_steps must be >= 1");
  require(cold_start.epochs >= 1, "cold_start.epochs must be >= 1");
  require(reject_sft.learning_rate > 0.0,
          "reject_sample.learning_rate must be > 0");
  require(reject_sft.grad_accumulation_steps >= 1,
          "reject_sample.grad_accumulation_steps must be >= 1");
  require(reject_sft.epochs >= 1, "reject_sample.epochs must be >= 1");
  require(reject_rollouts >= 1, "reject_sample.rollouts must be >= 1");
  require(grpo.group_size >= 2, "grpo.group_size must be >= 2");
  require(grpo.clip > 0.0 && grpo.clip < 1.0, "grpo.clip must be in (0, 1)");
  require(grpo.kl_weight >= 0.0, "grpo.kl_weight must be >= 0");
  require(grpo.learning_rate > 0.0, "grpo.learning_rate must be > 0");
  require(grpo.iterations >= 1, "grpo.iterations must be >= 1");
  require(grpo.batch_size >= 1, "grpo.batch_size must be >= 1");
}

void apply_preset(RunConfig& config, const std::string& name) {
  if (name == "default") {
    config.preset = "default";
  } else if (name == "paper") {
    config.preset = "paper";
    config.grpo.group_size = 8;
    config.grpo.kl_weight = 0.04;
  } else {
    throw UsageError("unknown preset '" + name +
                     "' (expected default or paper)");
  }
}

RunConfig make_preset(const std::string& name) {
  RunConfig config;
  apply_preset(config, name);
  return config;
}

nlohmann::json config_to_json(const RunConfig& config) {
  const Vocabulary vocab(config.dim_count);
  return nlohmann::json{
      {"kind", "config"},
      {"format_version", 1},
      {"dim_count", config.dim_count},
      {"vocabulary", vocab.tokens()},
      {"hidden", config.hidden},
      {"max_len", config.max_len},
      {"noise_sigma", config.noise_sigma},
      {"oracle_error_rate", config.oracle_error_rate},
      {"direct_fraction", config.direct_fraction},
      {"train_size", config.train_size},
      {"eval_size", config.eval_size},
      {"cold_start",
       {{"learning_rate", config.cold_start.learning_rate},
        {"grad_accumulation_steps", config.cold_start.grad_accumulation_steps},
        {"epochs", config.cold_start.epochs}}},
      {"reject_sample",
       {{"learning_rate", config.reject_sft.learning_rate},
        {"grad_accumulation_steps", config.reject_sft.grad_accumulation_steps},
        {"epochs", config.reject_sft.epochs},
        {"rollouts", config.reject_rollouts}}},
      {"grpo",
       {{"group_size", config.grpo.group_size},
        {"clip", config.grpo.clip},
        {"kl_weight", config.grpo.kl_weight},
        {"learning_rate", config.grpo.learning_rate},
        {"iterations", config.grpo.iterations},
        {"batch_size", config.grpo.batch_size}}},
      {"seed", config.seed},
      {"out_dir", config.out_dir},
      {"preset", config.preset},
  };
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig config;
  try {
    config.dim_count = j.at("dim_count").get<int>();
    config.hidden = j.at("hidden").get<int>();
    config.max_len = j.at("max_len").get<int>();
    config.noise_sigma = j.at("noise_sigma").get<double>();
    config.oracle_error_rate = j.at("oracle_error_rate").get<double>();
    config.direct_fraction = j.at("direct_fraction").get<double>();
    config.train_size = j.at("train_size").get<std::int64_t>();
    config.eval_size = j.at("eval_size").get<std::int64_t>();
    const auto& cold = j.at("cold_start");
    config.cold_start.learning_rate = cold.at("learning_rate").get<double>();
    config.cold_start.grad_accumulation_steps =
        cold.at("grad_accumulation_steps").get<int>();
    config.cold_start.epochs = cold.at("epochs").get<int>();
    const auto& reject = j.at("reject_sample");
    config.reject_sft.learning_rate = reject.at("learning_rate").get<double>();
    config.reject_sft.grad_accumulation_steps =
        reject.at("grad_accumulation_steps").get<int>();
    config.reject_sft.epochs = reject.at("epochs").get<int>();
    config.reject_rollouts = reject.at("rollouts").get<int>();
    const auto& grpo = j.at("grpo");
    config.grpo.group_size = grpo.at("group_size").get<int>();
    config.grpo.clip = grpo.at("clip").get<double>();
    config.grpo.kl_weight = grpo.at("kl_weight").get<double>();
    config.grpo.learning_rate = grpo.at("learning_rate").get<double>();
    config.grpo.iterations = grpo.at("iterations").get<int>();
    config.grpo.batch_size = grpo.at("batch_size").get<int>();
    config.seed = j.at("seed").get<std::uint64_t>();
    config.out_dir = j.value("out_dir", std::string{});
    config.preset = j.value("preset", std::string{"default"});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (j.contains("vocabulary")) {
    const Vocabulary vocab(config.dim_count);
    if (j.at("vocabulary").get<std::vector<std::string>>() != vocab.tokens())
      throw ValidationError(
          "config: vocabulary echo does not match dim_count");
  }
  return config;
}

void save_config(const std::string& path, const RunConfig& config) {
  atomic_write(path, config_to_json(config).dump(2) + "\n");
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("config file " + path + " is not valid JSON: " + e.what());
  }
  RunConfig config = config_from_json(j);
  config.validate();
  return config;
}

}  // namespace cotrm
