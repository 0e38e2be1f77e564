#include "coid/hetpool.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace coid {
namespace pool {

namespace {

struct PoolParams {
  Tape::Val w_p, q_p, w1, w2, w3, w_f, w_m;
};

PoolParams pool_params(const ParamBinding& b, EdgeType type) {
  const std::string base =
      std::string("pool.") + (type == EdgeType::kSpatial ? "spat" : "temp");
  return {b.val(base + ".W_p"), b.val(base + ".q_p"), b.val(base + ".W1"),
          b.val(base + ".W2"), b.val(base + ".W3"),  b.val(base + ".w_f"),
          b.val(base + ".W_m")};
}

}  // namespace

SubgraphPool pool_subgraph(Tape& t, const ParamBinding& b,
                           const ModelConfig& cfg, EdgeType type,
                           const std::vector<Tape::Val>& m,
                           const TypeAdjacency& adj) {
  const std::size_t n = m.size();
  if (n == 0) throw std::invalid_argument("pool_subgraph: empty graph");
  if (adj.node_count() != n)
    throw std::invalid_argument("pool_subgraph: adjacency/node mismatch");
  const PoolParams p = pool_params(b, type);

  std::vector<Tape::Val> cluster(n);
  std::vector<Tape::Val> fitness(n);
  for (std::size_t i = 0; i < n; ++i) {
    // ego network: the node itself first, then its neighbors in edge order
    std::vector<int> ego{static_cast<int>(i)};
    for (const auto& [j, w] : adj.neighbors[i]) {
      (void)w;
      ego.push_back(j);
    }

    std::vector<Tape::Val> scores;
    scores.reserve(ego.size());
    for (int j : ego) {
      const Tape::Val pair[] = {m[i], m[static_cast<std::size_t>(j)]};
      scores.push_back(
          t.dot(p.q_p, t.tanh(t.matvec(p.w_p, t.concat(pair)))));
    }
    const Tape::Val row =
        scores.size() == 1 ? scores[0]
                           : t.concat(std::span<const Tape::Val>(scores));
    const Tape::Val attn = t.softmax(row);

    std::vector<Tape::Val> members;
    std::vector<Tape::Val> weights;
    members.reserve(ego.size());
    weights.reserve(ego.size());
    for (std::size_t k = 0; k < ego.size(); ++k) {
      members.push_back(t.matvec(p.w_m, m[static_cast<std::size_t>(ego[k])]));
      weights.push_back(t.pick(attn, k));
    }
    cluster[i] = t.weighted_sum(std::span<const Tape::Val>(members),
                                std::span<const Tape::Val>(weights));

    Tape::Val inner = t.matvec(p.w1, m[i]);
    if (!adj.neighbors[i].empty()) {
      const Tape::Val w2m = t.matvec(p.w2, m[i]);
      for (const auto& [j, w] : adj.neighbors[i]) {
        (void)w;
        inner = t.add(
            inner, t.sub(w2m, t.matvec(p.w3, m[static_cast<std::size_t>(j)])));
      }
    }
    fitness[i] = t.tanh(t.dot(p.w_f, inner));
  }

  // top-ceil(ratio*N) by fitness value, ties to the lower index
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(cfg.pool_ratio * static_cast<double>(n)));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
    return t.value(fitness[a])[0] > t.value(fitness[c])[0];
  });
  order.resize(std::min(k, n));
  std::sort(order.begin(), order.end());

  std::vector<Tape::Val> readout;
  readout.reserve(order.size());
  for (int i : order)
    readout.push_back(
        t.scale(fitness[static_cast<std::size_t>(i)],
                cluster[static_cast<std::size_t>(i)]));

  SubgraphPool result;
  result.selected = std::move(order);
  result.z = t.mean(std::span<const Tape::Val>(readout));
  return result;
}

GraphEmbeddingVals graph_embedding(Tape& t, const ParamBinding& b,
                                   const ModelConfig& cfg,
                                   const std::vector<Tape::Val>& m,
                                   const TypeAdjacency& spat_adj,
                                   const TypeAdjacency& temp_adj,
                                   Tape::Val beta_spat, Tape::Val beta_temp) {
  GraphEmbeddingVals out;
  SubgraphPool spat =
      pool_subgraph(t, b, cfg, EdgeType::kSpatial, m, spat_adj);
  SubgraphPool temp =
      pool_subgraph(t, b, cfg, EdgeType::kTemporal, m, temp_adj);
  out.z_spat = spat.z;
  out.z_temp = temp.z;
  out.selected_spat = std::move(spat.selected);
  out.selected_temp = std::move(temp.selected);

  const Tape::Val items[] = {out.z_spat, out.z_temp};
  const Tape::Val weights[] = {beta_spat, beta_temp};
  Tape::Val z = t.weighted_sum(items, weights);
  if (cfg.normalize_graph_embedding) {
    double norm_sq = 0.0;
    for (double v : t.value(z).data()) norm_sq += v * v;
    out.zero_norm = norm_sq == 0.0;
    z = t.normalize(z);
  }
  out.z = z;
  return out;
}

}  // namespace pool

SceneEmbedding embed_scene(const ModelParameters& params,
                           const SpatioTemporalGraph& g) {
  Tape t;
  const ParamBinding b = bind_parameters(t, params);
  const gat::Embedding e = gat::embed(t, b, params.config(), g);
  const pool::GraphEmbeddingVals z =
      pool::graph_embedding(t, b, params.config(), e.m, spatial_adjacency(g),
                            temporal_adjacency(g), e.beta_spat, e.beta_temp);

  SceneEmbedding out;
  out.m.reserve(e.m.size());
  for (Tape::Val v : e.m) out.m.push_back(t.value(v).data());
  out.z = t.value(z.z).data();
  out.beta_spat = t.value(e.beta_spat)[0];
  out.beta_temp = t.value(e.beta_temp)[0];
  out.zero_norm_nodes = e.zero_norm_nodes;
  out.selected_spat = z.selected_spat;
  out.selected_temp = z.selected_temp;
  out.zero_norm_graph = z.zero_norm;
  return out;
}

}  // namespace coid
