#pragma once

#include <vector>

#include "coid/graph.hpp"
#include "coid/model.hpp"
#include "coid/tape.hpp"

namespace coid {

enum class EdgeType { kSpatial, kTemporal };

/// Parameter tensors registered as tape leaves, aligned with the
/// ModelParameters entry order so gradients read back by index.
struct ParamBinding {
  const ModelParameters* params = nullptr;
  std::vector<Tape::Val> vals;

  Tape::Val val(std::string_view name) const {
    return vals[params->index_of(name)];
  }
};

ParamBinding bind_parameters(Tape& t, const ModelParameters& params);

namespace gat {

/// W_v v_i for every node, with attributes in feature units (input_scale).
std::vector<Tape::Val> project(Tape& t, const ParamBinding& b,
                               const ModelConfig& cfg,
                               const SpatioTemporalGraph& g);

/// Attention rows for one (layer, head, type): rows[i] is the softmax over
/// node i's neighborhood, aligned with the adjacency order; nodes without
/// edges of this type get an invalid handle.
std::vector<Tape::Val> attention(Tape& t, const ParamBinding& b,
                                 const ModelConfig& cfg, int layer, int head,
                                 EdgeType type,
                                 const std::vector<Tape::Val>& h_in,
                                 const TypeAdjacency& adj);

struct LayerOutput {
  std::vector<Tape::Val> h;  // per node, heads combined
  // attention rows per head (softmax per neighborhood), for diagnostics
  std::vector<std::vector<Tape::Val>> head_alpha;
};

/// One attention layer for one edge type: per head, aggregates
/// relu(W h_i + sum_j alpha_ij (W h_j + W_e e_ij)); intermediate layers
/// concatenate head outputs, the final layer averages them. Nodes with no
/// edges of this type fall back to relu(W h_i).
LayerOutput propagate_layer(Tape& t, const ParamBinding& b,
                            const ModelConfig& cfg, int layer, EdgeType type,
                            const std::vector<Tape::Val>& h_in,
                            const TypeAdjacency& adj);

struct TypeWeights {
  Tape::Val spat;
  Tape::Val temp;
};

/// Two-way softmax over the per-type importance scores, each averaged over
/// the nodes that have edges of that type. A type with no edges gets weight 0
/// and the other weight 1; a graph with no edges at all is rejected.
TypeWeights type_weights(Tape& t, const ParamBinding& b,
                         const std::vector<Tape::Val>& h_spat,
                         const std::vector<Tape::Val>& h_temp,
                         const TypeAdjacency& spat_adj,
                         const TypeAdjacency& temp_adj);

struct Embedding {
  std::vector<Tape::Val> h_spat;
  std::vector<Tape::Val> h_temp;
  std::vector<Tape::Val> m;  // beta-mixed, optionally unit-normalized
  Tape::Val beta_spat;
  Tape::Val beta_temp;
  std::vector<int> zero_norm_nodes;
};

/// Full node-embedding pipeline over both edge-type streams.
Embedding embed(Tape& t, const ParamBinding& b, const ModelConfig& cfg,
                const SpatioTemporalGraph& g);

}  // namespace gat
}  // namespace coid
