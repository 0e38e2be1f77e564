#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coid/exchange.hpp"
#include "coid/scenegen.hpp"
#include "coid/trainer.hpp"

namespace coid {

/// Protocol-side settings of one evaluation: score blend, decision threshold,
/// bandwidth schedule and candidate-selection policy.
struct ExchangeSettings {
  double lambda = 0.5;
  double tau = 0.1;
  std::vector<int> bandwidth{4};
  int rounds = 2;
  SelectionPolicy baseline = SelectionPolicy::kFull;

  void validate() const;
  /// Constant or per-round schedule from the bandwidth list.
  BandwidthSchedule schedule() const;
};

/// Union of every experiment knob. Every key has a default; unknown JSON keys
/// are rejected. The top-level seed derives all stream seeds.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int scenes = 100;
  SceneConfig scene;
  BuildOptions graph;
  ModelConfig model;
  LossConfig loss;
  ExchangeSettings exchange;

  std::string to_json_string() const;
  static ExperimentConfig from_json_string(const std::string& text);
  static ExperimentConfig load_file(const std::string& path);
  std::string config_hash() const;
  void apply_preset(const std::string& name);
};

MetricsReport evaluate_scene(const ModelParameters& params,
                             const ScenePair& scene, const BuildOptions& graph,
                             const ExchangeSettings& settings,
                             std::uint64_t seed);

struct SceneEvalRow {
  int scene_id = 0;
  MetricsReport metrics;
};

std::vector<SceneEvalRow> evaluate_dataset(const ModelParameters& params,
                                           const Dataset& dataset,
                                           const BuildOptions& graph,
                                           const ExchangeSettings& settings,
                                           std::uint64_t seed);

struct MetricSummary {
  int n = 0;
  double precision_mean = 0, precision_std = 0;
  double recall_mean = 0, recall_std = 0;
  double f1_mean = 0, f1_std = 0;
  double bis_mean = 0, bis_std = 0;
  double sharing_recall_mean = 0, sharing_recall_std = 0;
};

MetricSummary summarize(const std::vector<SceneEvalRow>& rows);

// -- CLI-facing drivers; every writer prefixes a config-hash comment line ----

void run_gen(const ExperimentConfig& cfg, const std::string& out_path);

struct TrainPaths {
  std::string data;
  std::string model_out;
  std::string curve_out;  // empty = skip the loss-curve CSV
};
void run_train(const ExperimentConfig& cfg, const TrainPaths& paths);

void run_eval(const ExperimentConfig& cfg, const std::string& model_path,
              const std::string& data_path, const std::string& out_csv);

void run_sweep(const ExperimentConfig& cfg, const std::string& model_path,
               const std::string& data_path, const std::vector<int>& k_values,
               const std::vector<int>& r_values, const std::string& out_csv);

struct AblateOptions {
  std::vector<int> t_values{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int train_scenes = 60;
  int eval_scenes = 20;
};
void run_ablate_seqlen(const ExperimentConfig& cfg, const AblateOptions& opts,
                       const std::string& out_csv);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace coid
