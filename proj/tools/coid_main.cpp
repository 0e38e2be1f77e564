#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "coid/experiment.hpp"

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw std::runtime_error(std::string(flag) + ": bad integer \"" + item +
                               "\"");
    }
  }
  if (out.empty())
    throw std::runtime_error(std::string(flag) + ": empty list");
  return out;
}

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::string bandwidth;
  std::string baseline;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int rounds = 0;
  double lambda = -1.0;
  double tau = -1.0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--preset", f.preset, "Scene preset: normal | crowded")
      ->check(CLI::IsMember({"normal", "crowded"}));
  cmd->add_option("--seed", f.seed, "Master seed")
      ->each([&f](const std::string&) { f.seed_set = true; });
  cmd->add_option("--bandwidth", f.bandwidth,
                  "Per-round node budget, e.g. \"4\" or \"4,8\"");
  cmd->add_option("--rounds", f.rounds, "Interaction rounds");
  cmd->add_option("--lambda", f.lambda, "Graph-vs-node score blend in [0,1]");
  cmd->add_option("--tau", f.tau, "Match confidence threshold in [0,1]");
  cmd->add_option("--baseline", f.baseline,
                  "Candidate selection: full | ne | random")
      ->check(CLI::IsMember({"full", "ne", "random"}));
}

coid::ExperimentConfig resolve_config(const CommonFlags& f) {
  coid::ExperimentConfig cfg;
  if (!f.config_path.empty())
    cfg = coid::ExperimentConfig::load_file(f.config_path);
  if (!f.preset.empty()) cfg.apply_preset(f.preset);
  if (f.seed_set) cfg.seed = f.seed;
  if (!f.bandwidth.empty())
    cfg.exchange.bandwidth = parse_int_list(f.bandwidth, "--bandwidth");
  if (f.rounds > 0) cfg.exchange.rounds = f.rounds;
  if (f.lambda >= 0.0) cfg.exchange.lambda = f.lambda;
  if (f.tau >= 0.0) cfg.exchange.tau = f.tau;
  if (!f.baseline.empty()) {
    if (f.baseline == "full")
      cfg.exchange.baseline = coid::SelectionPolicy::kFull;
    else if (f.baseline == "ne")
      cfg.exchange.baseline = coid::SelectionPolicy::kNodeOnly;
    else
      cfg.exchange.baseline = coid::SelectionPolicy::kRandom;
  }
  cfg.exchange.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "coid: bandwidth-adaptive spatiotemporal correspondence identification "
      "between two agents"};
  app.require_subcommand(1);

  CommonFlags gen_flags, train_flags, eval_flags, sweep_flags, ablate_flags;

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, gen_flags);
  std::string gen_out = "dataset.json";
  int gen_scenes = -1;
  gen->add_option("--out", gen_out, "Output dataset JSON path");
  gen->add_option("--scenes", gen_scenes, "Number of scenes");

  // train
  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  add_common(train, train_flags);
  std::string train_data, train_model = "model.json", train_curve;
  int train_epochs = -1;
  train->add_option("--data", train_data, "Training dataset JSON")->required();
  train->add_option("--model", train_model, "Output model JSON path");
  train->add_option("--out", train_curve, "Loss-curve CSV path");
  train->add_option("--epochs", train_epochs, "Override epoch count");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
  add_common(eval, eval_flags);
  std::string eval_data, eval_model, eval_out = "eval.csv";
  eval->add_option("--data", eval_data, "Evaluation dataset JSON")->required();
  eval->add_option("--model", eval_model, "Model JSON")->required();
  eval->add_option("--out", eval_out, "Per-scene metrics CSV path");

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "Evaluate a bandwidth x rounds grid, one CSV row per cell");
  add_common(sweep, sweep_flags);
  std::string sweep_data, sweep_model, sweep_out = "sweep.csv";
  std::string sweep_rounds;
  sweep->add_option("--data", sweep_data, "Evaluation dataset JSON")->required();
  sweep->add_option("--model", sweep_model, "Model JSON")->required();
  sweep->add_option("--out", sweep_out, "Sweep CSV path");
  sweep->add_option("--round-values", sweep_rounds,
                    "Round counts of the grid, e.g. \"1,2,3\" (defaults to "
                    "--rounds)");

  // ablate-seqlen
  auto* ablate = app.add_subcommand(
      "ablate-seqlen", "Train and evaluate across sequence lengths");
  add_common(ablate, ablate_flags);
  std::string ablate_out = "ablate_seqlen.csv", ablate_ts;
  int ablate_train = 60, ablate_eval = 20;
  ablate->add_option("--out", ablate_out, "Ablation CSV path");
  ablate->add_option("--t-values", ablate_ts,
                     "Sequence lengths, default \"1,...,10\"");
  ablate->add_option("--train-scenes", ablate_train, "Scenes per T for training");
  ablate->add_option("--eval-scenes", ablate_eval, "Scenes per T for evaluation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      coid::ExperimentConfig cfg = resolve_config(gen_flags);
      if (gen_scenes >= 0) cfg.scenes = gen_scenes;
      coid::run_gen(cfg, gen_out);
    } else if (train->parsed()) {
      coid::ExperimentConfig cfg = resolve_config(train_flags);
      if (train_epochs >= 0) cfg.loss.epochs = train_epochs;
      coid::run_train(cfg, {train_data, train_model, train_curve});
    } else if (eval->parsed()) {
      coid::ExperimentConfig cfg = resolve_config(eval_flags);
      coid::run_eval(cfg, eval_model, eval_data, eval_out);
    } else if (sweep->parsed()) {
      // for sweep, --bandwidth is the K grid, not a per-round schedule
      CommonFlags flags = sweep_flags;
      flags.bandwidth.clear();
      coid::ExperimentConfig cfg = resolve_config(flags);
      const std::vector<int> k_values =
          sweep_flags.bandwidth.empty()
              ? cfg.exchange.bandwidth
              : parse_int_list(sweep_flags.bandwidth, "--bandwidth");
      const std::vector<int> r_values =
          sweep_rounds.empty() ? std::vector<int>{cfg.exchange.rounds}
                               : parse_int_list(sweep_rounds, "--round-values");
      coid::run_sweep(cfg, sweep_model, sweep_data, k_values, r_values,
                      sweep_out);
    } else if (ablate->parsed()) {
      coid::ExperimentConfig cfg = resolve_config(ablate_flags);
      coid::AblateOptions opts;
      if (!ablate_ts.empty())
        opts.t_values = parse_int_list(ablate_ts, "--t-values");
      opts.train_scenes = ablate_train;
      opts.eval_scenes = ablate_eval;
      coid::run_ablate_seqlen(cfg, opts, ablate_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
