#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coid/hetpool.hpp"
#include "coid/scenegen.hpp"

namespace coid {

/// Circle-loss hyperparameters and the optimization schedule. Margins are
/// expressed in embedding distance; with unit-normalized embeddings pairwise
/// distances live in [0, 2].
struct LossConfig {
  double gamma = 2.0;
  double delta_p = 0.5;
  double delta_n = 1.2;
  // the node-to-graph terms cluster covisible nodes around the scene
  // embedding; a wider corridor keeps that compatible with the node margins
  double graph_delta_p = 0.5;
  double graph_delta_n = 0.8;
  double learning_rate = 0.01;
  int epochs = 30;
  int batch_size = 8;
  std::uint64_t seed = 0;

  /// Which node pairs feed the node-distance loss terms. kMatched anchors
  /// each node against its own correspondent (everything else is a negative);
  /// kSharedSets uses the covisible/non-covisible sets for every anchor, the
  /// literal reading of the loss definition.
  enum class NodePairing { kMatched, kSharedSets };
  NodePairing pairing = NodePairing::kMatched;

  /// Which graph embedding the node-to-graph terms compare against.
  enum class GraphAnchor { kOtherGraph, kOwnGraph };
  GraphAnchor graph_anchor = GraphAnchor::kOtherGraph;

  void validate() const;
};

/// Covisibility split of both graphs' node indices.
struct PosNegPartition {
  std::vector<int> ego_pos, ego_neg;
  std::vector<int> collab_pos, collab_neg;
};

PosNegPartition partition(const GroundTruthPairs& gt, int n_ego, int n_collab);

/// Sum over anchors of log(1 + sum_pos exp(gamma (D - delta_p)^2)
///                          + sum_neg exp(gamma (delta_n - D)^2)).
/// D rows are anchor-major; `positives`/`negatives` select columns shared by
/// all anchors. An empty anchor set yields loss 0.
Tape::Val circle_loss(Tape& t,
                      const std::vector<std::vector<Tape::Val>>& distances,
                      const std::vector<int>& anchors,
                      const std::vector<int>& positives,
                      const std::vector<int>& negatives,
                      const LossConfig& cfg);

/// Embeds both graphs with the bound parameters and evaluates the four-term
/// loss: both node-distance directions plus both node-to-graph directions,
/// averaged.
Tape::Val total_loss(Tape& t, const ParamBinding& b, const ModelConfig& mcfg,
                     const SpatioTemporalGraph& ego_graph,
                     const SpatioTemporalGraph& collab_graph,
                     const GroundTruthPairs& gt, const LossConfig& cfg);

/// One training example: both graphs prebuilt plus the correspondence truth.
struct TrainScene {
  int scene_id = 0;
  SpatioTemporalGraph ego;
  SpatioTemporalGraph collab;
  GroundTruthPairs gt;
};

std::vector<TrainScene> make_train_scenes(const Dataset& dataset,
                                          const BuildOptions& options = {});

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParameters params;
  std::vector<EpochStats> curve;
  int best_epoch = 0;
};

/// Adam (0.9 / 0.999, eps 1e-8) over mini-batches of scenes; keeps the
/// parameters from the epoch with the lowest loss on a held-out 20% split.
/// Deterministic for a fixed seed. Aborts on a non-finite loss, naming the
/// offending scene.
TrainResult train(const std::vector<TrainScene>& dataset,
                  const LossConfig& cfg, const ModelConfig& mcfg);

/// Names of parameters that receive a zero gradient on every given scene;
/// empty means every parameter is trainable on this data.
std::vector<std::string> dead_parameters(const std::vector<TrainScene>& scenes,
                                         const ModelParameters& params,
                                         const LossConfig& cfg);

}  // namespace coid
