#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "coid/exchange.hpp"
#include "coid/graph.hpp"

namespace coid {

struct AgentPose {
  std::array<double, 3> position{0.0, 0.0, 0.0};
  double yaw = 0.0;
};

/// Synthetic street-intersection scene generator settings. Objects follow
/// constant-velocity trajectories with small heading jitter; each agent
/// observes within fov_radius, drops detections with probability p_miss and
/// reports positions in its own frame with isotropic Gaussian noise.
struct SceneConfig {
  int n_objects = 10;
  double arena_half_width = 22.0;
  int sequence_length = 5;  // T, per the best-performing range
  double fov_radius = 40.0;
  AgentPose agent_a{{-10.0, 0.0, 0.0}, 0.0};
  AgentPose agent_b{{10.0, 0.0, 0.0}, 3.14159265358979323846};
  double noise_sigma = 0.3;
  double p_miss = 0.1;
  double speed_min = 1.5;
  double speed_max = 4.5;
  double elevation_min = 0.5;   // persistent per-object detection height
  double elevation_max = 3.0;
  double heading_jitter = 0.1;
  double radial_flow = 0.8;  // 0 = random headings, 1 = fully outward dispersal
  double id_switch_prob = 0.0;  // per-detection tracker id switch
  std::uint64_t seed = 0;

  void validate() const;
  static SceneConfig preset(const std::string& name);  // "normal" | "crowded"
};

struct AgentObservations {
  int agent_id = 0;
  AgentPose pose;
  std::vector<ObjectObservation> observations;  // local-frame positions
};

/// Two agents' observation sequences plus ground-truth correspondences.
/// gt_pairs hold (ego node index, collaborator node index) under the
/// deterministic (t, track_id) node ordering of build_graph.
struct ScenePair {
  int scene_id = 0;
  std::array<AgentObservations, 2> agents;
  GroundTruthPairs gt;

  bool operator==(const ScenePair& o) const;
};

bool operator==(const AgentObservations& a, const AgentObservations& b);
bool operator==(const ObjectObservation& a, const ObjectObservation& b);
bool operator==(const AgentPose& a, const AgentPose& b);

/// Generates one scene pair, fully deterministic per (cfg, cfg.seed). Scenes
/// with zero covisible instances are regenerated with an incremented
/// sub-seed, up to 100 attempts.
ScenePair generate_scene(const SceneConfig& cfg);

struct Dataset {
  SceneConfig config;
  std::vector<ScenePair> scenes;
};

/// Scene i is generated from seed mix(cfg.seed, i); scene ids run 0..count-1.
Dataset generate_dataset(const SceneConfig& cfg, int count);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);
std::string dataset_to_json_string(const Dataset& dataset);
Dataset dataset_from_json_string(const std::string& text);

/// SplitMix64 stream derivation, used everywhere a sub-seed is needed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace coid
