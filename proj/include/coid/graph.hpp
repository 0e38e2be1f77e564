#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace coid {

/// One detected object at one timestep, in the observing agent's local frame.
/// gt_id is the global ground-truth identity and is read only by evaluation
/// code, never by the model.
struct ObjectObservation {
  int track_id = 0;
  int gt_id = -1;
  int t = 0;
  std::array<double, 3> pos{0.0, 0.0, 0.0};
};

struct GraphEdge {
  int p = 0;
  int q = 0;
  double weight = 0.0;  // spatial: metric distance; temporal: timestep gap
};

enum class TemporalLinks {
  kConsecutive,  // link consecutive observations of a track
  kAllPairs,     // link every time pair of a track
};

/// Spatiotemporal graph of one agent's observation sequence. Nodes are sorted
/// by (t, track_id). Spatial edges are undirected and stored once with p < q;
/// temporal edges are stored once with the earlier observation first and
/// weight equal to the timestep gap. Absent edges are simply not stored.
struct SpatioTemporalGraph {
  std::vector<ObjectObservation> nodes;
  std::vector<GraphEdge> spatial_edges;
  std::vector<GraphEdge> temporal_edges;

  std::size_t node_count() const { return nodes.size(); }
};

struct BuildOptions {
  double spatial_radius = 50.0;
  TemporalLinks temporal_links = TemporalLinks::kConsecutive;
};

/// Builds the graph from per-timestep observation lists. Rejects empty
/// sequences and duplicate (track_id, t) pairs. Spatial edges connect every
/// same-timestep pair within spatial_radius; temporal edges follow the
/// configured linking policy.
SpatioTemporalGraph build_graph(
    std::span<const std::vector<ObjectObservation>> frames,
    const BuildOptions& options = {});

/// Convenience overload over a flat observation list.
SpatioTemporalGraph build_graph(std::span<const ObjectObservation> observations,
                                const BuildOptions& options = {});

/// Splits the graph into a spatial-only and a temporal-only graph sharing the
/// node list. Their union restores the input.
std::pair<SpatioTemporalGraph, SpatioTemporalGraph> decompose(
    const SpatioTemporalGraph& g);

/// Per-node neighbor lists for one edge type, both directions expanded.
/// Neighbor order follows the edge list so that relabeling nodes and edges
/// consistently relabels the adjacency.
struct TypeAdjacency {
  std::vector<std::vector<std::pair<int, double>>> neighbors;

  std::size_t node_count() const { return neighbors.size(); }
  bool has_edges(int i) const { return !neighbors[i].empty(); }
};

TypeAdjacency spatial_adjacency(const SpatioTemporalGraph& g);
TypeAdjacency temporal_adjacency(const SpatioTemporalGraph& g);

/// Relabels nodes by `perm` (node i becomes node perm[i]), remapping edges in
/// place and preserving edge order.
SpatioTemporalGraph permute_graph(const SpatioTemporalGraph& g,
                                  std::span<const int> perm);

}  // namespace coid
