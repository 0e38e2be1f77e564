#include "coid/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace coid {

namespace {

double euclidean(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

SpatioTemporalGraph build_graph(
    std::span<const std::vector<ObjectObservation>> frames,
    const BuildOptions& options) {
  std::vector<ObjectObservation> flat;
  for (const auto& frame : frames)
    flat.insert(flat.end(), frame.begin(), frame.end());
  return build_graph(std::span<const ObjectObservation>(flat), options);
}

SpatioTemporalGraph build_graph(std::span<const ObjectObservation> observations,
                                const BuildOptions& options) {
  if (observations.empty())
    throw std::invalid_argument("build_graph: empty observation sequence");

  SpatioTemporalGraph g;
  g.nodes.assign(observations.begin(), observations.end());
  std::sort(g.nodes.begin(), g.nodes.end(),
            [](const ObjectObservation& a, const ObjectObservation& b) {
              if (a.t != b.t) return a.t < b.t;
              return a.track_id < b.track_id;
            });

  std::set<std::pair<int, int>> seen;
  for (const auto& node : g.nodes) {
    if (node.t < 0)
      throw std::invalid_argument("build_graph: negative timestep");
    if (!std::isfinite(node.pos[0]) || !std::isfinite(node.pos[1]) ||
        !std::isfinite(node.pos[2]))
      throw std::invalid_argument("build_graph: non-finite position");
    if (!seen.emplace(node.track_id, node.t).second)
      throw std::invalid_argument(
          "build_graph: duplicate (track_id, t) pair: track " +
          std::to_string(node.track_id) + " at t " + std::to_string(node.t));
  }

  const int n = static_cast<int>(g.nodes.size());

  // Same-timestep pairs within radius. Coincident objects (distance 0) get no
  // edge: absent edges stand in for the zero weight.
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n && g.nodes[q].t == g.nodes[p].t; ++q) {
      const double d = euclidean(g.nodes[p].pos, g.nodes[q].pos);
      if (d > 0.0 && d <= options.spatial_radius)
        g.spatial_edges.push_back({p, q, d});
    }
  }

  // Group node indices per track, already time-ordered by the node sort.
  std::map<int, std::vector<int>> tracks;
  for (int i = 0; i < n; ++i) tracks[g.nodes[i].track_id].push_back(i);
  for (const auto& [track, idx] : tracks) {
    (void)track;
    if (options.temporal_links == TemporalLinks::kConsecutive) {
      for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        const int p = idx[k], q = idx[k + 1];
        g.temporal_edges.push_back(
            {p, q, static_cast<double>(g.nodes[q].t - g.nodes[p].t)});
      }
    } else {
      for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
          const int p = idx[a], q = idx[b];
          g.temporal_edges.push_back(
              {p, q, static_cast<double>(g.nodes[q].t - g.nodes[p].t)});
        }
    }
  }
  return g;
}

std::pair<SpatioTemporalGraph, SpatioTemporalGraph> decompose(
    const SpatioTemporalGraph& g) {
  SpatioTemporalGraph spat{g.nodes, g.spatial_edges, {}};
  SpatioTemporalGraph temp{g.nodes, {}, g.temporal_edges};
  return {std::move(spat), std::move(temp)};
}

namespace {

TypeAdjacency expand(std::size_t n, const std::vector<GraphEdge>& edges) {
  TypeAdjacency adj;
  adj.neighbors.resize(n);
  for (const GraphEdge& e : edges) {
    adj.neighbors[e.p].emplace_back(e.q, e.weight);
    adj.neighbors[e.q].emplace_back(e.p, e.weight);
  }
  return adj;
}

}  // namespace

TypeAdjacency spatial_adjacency(const SpatioTemporalGraph& g) {
  return expand(g.nodes.size(), g.spatial_edges);
}

TypeAdjacency temporal_adjacency(const SpatioTemporalGraph& g) {
  return expand(g.nodes.size(), g.temporal_edges);
}

SpatioTemporalGraph permute_graph(const SpatioTemporalGraph& g,
                                  std::span<const int> perm) {
  if (perm.size() != g.nodes.size())
    throw std::invalid_argument("permute_graph: permutation size mismatch");
  SpatioTemporalGraph out;
  out.nodes.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    out.nodes[perm[i]] = g.nodes[i];
  out.spatial_edges = g.spatial_edges;
  out.temporal_edges = g.temporal_edges;
  for (GraphEdge& e : out.spatial_edges) {
    e.p = perm[e.p];
    e.q = perm[e.q];
  }
  for (GraphEdge& e : out.temporal_edges) {
    e.p = perm[e.p];
    e.q = perm[e.q];
  }
  return out;
}

}  // namespace coid
