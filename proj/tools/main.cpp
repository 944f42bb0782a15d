#include <CLI11.hpp>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cotrm/config.hpp"
#include "cotrm/errors.hpp"
#include "cotrm/run.hpp"

namespace {

struct Flags {
  std::string config_path;
  std::string preset;
  std::string out_dir;
  std::uint64_t seed = 0;
  int dim_count = 0;
  int hidden = 0;
  int max_len = 0;
  double noise_sigma = 0.0;
  double oracle_error_rate = 0.0;
  double direct_fraction = 0.0;
  std::int64_t train_size = 0;
  std::int64_t eval_size = 0;
  double cold_lr = 0.0;
  int cold_accum = 0;
  int cold_epochs = 0;
  double reject_lr = 0.0;
  int reject_accum = 0;
  int reject_epochs = 0;
  int reject_rollouts = 0;
  int grpo_group_size = 0;
  double grpo_clip = 0.0;
  double grpo_kl_weight = 0.0;
  double grpo_lr = 0.0;
  int grpo_iterations = 0;
  int grpo_batch = 0;
};

void add_config_options(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config_path, "Config file (JSON)")
      ->check(CLI::ExistingFile);
  app.add_option("--preset", f.preset, "Named preset: default or paper");
  app.add_option("--out", f.out_dir,
                 "Output directory (relative paths resolve under $COTRM_OUT)");
  app.add_option("--seed", f.seed, "Global run seed");
  app.add_option("--dim-count", f.dim_count, "Scored dimensions D");
  app.add_option("--hidden", f.hidden, "Hidden layer width");
  app.add_option("--max-len", f.max_len, "Maximum response length");
  app.add_option("--noise-sigma", f.noise_sigma, "Observation noise sigma");
  app.add_option("--oracle-error-rate", f.oracle_error_rate,
                 "Oracle answer flip probability");
  app.add_option("--direct-fraction", f.direct_fraction,
                 "Share of direct-mode training episodes");
  app.add_option("--train-size", f.train_size, "Training episodes");
  app.add_option("--eval-size", f.eval_size, "Eval episodes per mode");
  app.add_option("--cold-lr", f.cold_lr, "Cold start learning rate");
  app.add_option("--cold-accum", f.cold_accum,
                 "Cold start gradient accumulation steps");
  app.add_option("--cold-epochs", f.cold_epochs, "Cold start epochs");
  app.add_option("--reject-lr", f.reject_lr,
                 "Rejection-sampling fine-tune learning rate");
  app.add_option("--reject-accum", f.reject_accum,
                 "Rejection-sampling gradient accumulation steps");
  app.add_option("--reject-epochs", f.reject_epochs,
                 "Rejection-sampling fine-tune epochs");
  app.add_option("--reject-rollouts", f.reject_rollouts,
                 "Samples per episode during rejection sampling (K)");
  app.add_option("--grpo-group-size", f.grpo_group_size,
                 "Responses per input (N)");
  app.add_option("--grpo-clip", f.grpo_clip, "Clip half-width (delta)");
  app.add_option("--grpo-kl-weight", f.grpo_kl_weight, "KL weight (beta)");
  app.add_option("--grpo-lr", f.grpo_lr, "GRPO learning rate");
  app.add_option("--grpo-iterations", f.grpo_iterations, "GRPO iterations");
  app.add_option("--grpo-batch", f.grpo_batch, "GRPO episodes per iteration");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Three-stage training pipeline for a chain-of-thought preference "
      "reward policy: supervised cold start, rejection-sampling fine-tuning, "
      "and group-relative policy optimization, with verifiable rewards."};
  app.require_subcommand(1);

  Flags flags;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate episode datasets");
  add_config_options(*gen, flags);

  CLI::App* train = app.add_subcommand("train", "Run training stages");
  add_config_options(*train, flags);
  std::string stages_csv;
  cotrm::TrainOptions train_options;
  train->add_option("--stages", stages_csv,
                    "Comma-separated subset, in order, of: cold_start, "
                    "reject_sample, grpo (default: all)");
  train->add_option("--grpo-episodes", train_options.grpo_episodes,
                    "Episode file overriding the hard pool as GRPO input");
  train->add_option("--grpo-from", train_options.grpo_from,
                    "Checkpoint a standalone GRPO stage starts from "
                    "(cold_start or reject_sample)");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_config_options(*eval, flags);
  cotrm::EvalOptions eval_options;
  eval->add_option("--checkpoint", eval_options.checkpoint, "Checkpoint file")
      ->required();
  eval->add_option("--episodes", eval_options.episodes, "Episode .jsonl file")
      ->required();
  eval->add_option("--mode", eval_options.mode, "cot or direct");
  eval->add_option("--decode", eval_options.decode, "greedy or sample");

  CLI::App* inspect =
      app.add_subcommand("inspect", "Dump a checkpoint, dataset, or manifest");
  cotrm::InspectOptions inspect_options;
  inspect->add_option("path", inspect_options.path, "File to inspect")
      ->required();
  inspect->add_option("--index", inspect_options.index,
                      "Record index for .jsonl files");

  try {
    app.parse(argc, argv);

    CLI::App* sub = app.get_subcommands().front();
    auto build_config = [&]() {
      cotrm::RunConfig config = flags.config_path.empty()
                                    ? cotrm::RunConfig{}
                                    : cotrm::load_config(flags.config_path);
      if (sub->count("--preset")) cotrm::apply_preset(config, flags.preset);
      if (sub->count("--out")) config.out_dir = flags.out_dir;
      if (sub->count("--seed")) config.seed = flags.seed;
      if (sub->count("--dim-count")) {
        config.dim_count = flags.dim_count;
        // Follow D unless the caller pins max_len explicitly.
        if (!sub->count("--max-len")) config.max_len = 3 * flags.dim_count + 12;
      }
      if (sub->count("--hidden")) config.hidden = flags.hidden;
      if (sub->count("--max-len")) config.max_len = flags.max_len;
      if (sub->count("--noise-sigma")) config.noise_sigma = flags.noise_sigma;
      if (sub->count("--oracle-error-rate"))
        config.oracle_error_rate = flags.oracle_error_rate;
      if (sub->count("--direct-fraction"))
        config.direct_fraction = flags.direct_fraction;
      if (sub->count("--train-size")) config.train_size = flags.train_size;
      if (sub->count("--eval-size")) config.eval_size = flags.eval_size;
      if (sub->count("--cold-lr"))
        config.cold_start.learning_rate = flags.cold_lr;
      if (sub->count("--cold-accum"))
        config.cold_start.grad_accumulation_steps = flags.cold_accum;
      if (sub->count("--cold-epochs")) config.cold_start.epochs = flags.cold_epochs;
      if (sub->count("--reject-lr"))
        config.reject_sft.learning_rate = flags.reject_lr;
      if (sub->count("--reject-accum"))
        config.reject_sft.grad_accumulation_steps = flags.reject_accum;
      if (sub->count("--reject-epochs"))
        config.reject_sft.epochs = flags.reject_epochs;
      if (sub->count("--reject-rollouts"))
        config.reject_rollouts = flags.reject_rollouts;
      if (sub->count("--grpo-group-size"))
        config.grpo.group_size = flags.grpo_group_size;
      if (sub->count("--grpo-clip")) config.grpo.clip = flags.grpo_clip;
      if (sub->count("--grpo-kl-weight"))
        config.grpo.kl_weight = flags.grpo_kl_weight;
      if (sub->count("--grpo-lr")) config.grpo.learning_rate = flags.grpo_lr;
      if (sub->count("--grpo-iterations"))
        config.grpo.iterations = flags.grpo_iterations;
      if (sub->count("--grpo-batch")) config.grpo.batch_size = flags.grpo_batch;
      return config;
    };

    if (gen->parsed()) return cotrm::cmd_gen_data(build_config());
    if (train->parsed()) {
      if (train->count("--stages")) {
        std::string token;
        for (char c : stages_csv) {
          if (c == ',') {
            if (!token.empty()) train_options.stages.push_back(token);
            token.clear();
          } else if (c != ' ') {
            token += c;
          }
        }
        if (!token.empty()) train_options.stages.push_back(token);
        if (train_options.stages.empty())
          throw cotrm::UsageError("--stages was given but names no stages");
      }
      return cotrm::cmd_train(build_config(), train_options);
    }
    if (eval->parsed()) return cotrm::cmd_eval(build_config(), eval_options);
    if (inspect->parsed()) return cotrm::cmd_inspect(inspect_options);
    throw cotrm::UsageError("no command given");
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return 1;
  } catch (const cotrm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const cotrm::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const cotrm::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const std::out_of_range& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
