#pragma once

#include <vector>

#include "coid/hetgat.hpp"

namespace coid {
namespace pool {

struct SubgraphPool {
  Tape::Val z;
  std::vector<int> selected;  // chosen cluster centers, ascending node index
};

/// Single-stage structure-aware pooling of one edge-type subgraph:
/// soft cluster per node over its 1-hop ego network, a fitness score per
/// cluster, top-ceil(ratio*N) selection (ties to the lower node index), and a
/// mean readout of the fitness-scaled cluster embeddings.
SubgraphPool pool_subgraph(Tape& t, const ParamBinding& b,
                           const ModelConfig& cfg, EdgeType type,
                           const std::vector<Tape::Val>& m,
                           const TypeAdjacency& adj);

struct GraphEmbeddingVals {
  Tape::Val z;
  Tape::Val z_spat;
  Tape::Val z_temp;
  std::vector<int> selected_spat;
  std::vector<int> selected_temp;
  bool zero_norm = false;
};

/// z = beta_spat * z_spat + beta_temp * z_temp, optionally unit-normalized.
GraphEmbeddingVals graph_embedding(Tape& t, const ParamBinding& b,
                                   const ModelConfig& cfg,
                                   const std::vector<Tape::Val>& m,
                                   const TypeAdjacency& spat_adj,
                                   const TypeAdjacency& temp_adj,
                                   Tape::Val beta_spat, Tape::Val beta_temp);

}  // namespace pool

/// Evaluation-ready embeddings of one agent's graph: node embeddings, graph
/// embedding, type weights and degeneracy diagnostics, as plain values.
struct SceneEmbedding {
  std::vector<std::vector<double>> m;  // N x dim
  std::vector<double> z;               // dim
  double beta_spat = 0.0;
  double beta_temp = 0.0;
  std::vector<int> zero_norm_nodes;
  std::vector<int> selected_spat;
  std::vector<int> selected_temp;
  bool zero_norm_graph = false;
};

SceneEmbedding embed_scene(const ModelParameters& params,
                           const SpatioTemporalGraph& g);

}  // namespace coid
