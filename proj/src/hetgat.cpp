#include "coid/hetgat.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace coid {

ParamBinding bind_parameters(Tape& t, const ModelParameters& params) {
  ParamBinding b;
  b.params = &params;
  b.vals.reserve(params.count());
  for (std::size_t i = 0; i < params.count(); ++i)
    b.vals.push_back(t.leaf(params.entry(i).value));
  return b;
}

namespace gat {

namespace {

const char* type_tag(EdgeType type) {
  return type == EdgeType::kSpatial ? "spat" : "temp";
}

std::string head_base(int layer, int head, EdgeType type) {
  return "gat.layer" + std::to_string(layer) + ".head" + std::to_string(head) +
         "." + type_tag(type);
}

struct HeadParams {
  Tape::Val w;
  Tape::Val w_e;
  Tape::Val a;
};

HeadParams head_params(const ParamBinding& b, int layer, int head,
                       EdgeType type) {
  const std::string base = head_base(layer, head, type);
  return {b.val(base + ".W"), b.val(base + ".W_e"), b.val(base + ".a")};
}

/// Edge-attribute leaves aligned with the adjacency order, in feature units.
std::vector<std::vector<Tape::Val>> edge_leaves(Tape& t,
                                                const TypeAdjacency& adj,
                                                double scale) {
  std::vector<std::vector<Tape::Val>> out(adj.node_count());
  for (std::size_t i = 0; i < adj.node_count(); ++i) {
    out[i].reserve(adj.neighbors[i].size());
    for (const auto& [j, w] : adj.neighbors[i]) {
      (void)j;
      out[i].push_back(t.leaf(Tensor::vector({w * scale})));
    }
  }
  return out;
}

/// Raw (pre-softmax) attention score of one directed edge:
/// relu(a . [W h_i || W h_j || W_e e_ij]).
Tape::Val edge_score(Tape& t, const HeadParams& p, Tape::Val u_i, Tape::Val u_j,
                     Tape::Val edge_feat) {
  const Tape::Val parts[] = {u_i, u_j, edge_feat};
  return t.relu(t.dot(p.a, t.concat(parts)));
}

std::vector<Tape::Val> attention_rows(
    Tape& t, const HeadParams& p, const std::vector<Tape::Val>& u,
    const TypeAdjacency& adj,
    const std::vector<std::vector<Tape::Val>>& edge_feats) {
  std::vector<Tape::Val> rows(adj.node_count());
  for (std::size_t i = 0; i < adj.node_count(); ++i) {
    const auto& nbrs = adj.neighbors[i];
    if (nbrs.empty()) continue;
    std::vector<Tape::Val> scores;
    scores.reserve(nbrs.size());
    for (std::size_t k = 0; k < nbrs.size(); ++k)
      scores.push_back(
          edge_score(t, p, u[i], u[nbrs[k].first], edge_feats[i][k]));
    const Tape::Val row =
        scores.size() == 1 ? scores[0]
                           : t.concat(std::span<const Tape::Val>(scores));
    rows[i] = t.softmax(row);
  }
  return rows;
}

}  // namespace

std::vector<Tape::Val> project(Tape& t, const ParamBinding& b,
                               const ModelConfig& cfg,
                               const SpatioTemporalGraph& g) {
  const Tape::Val w_v = b.val("gat.W_v");
  const double s = cfg.input_scale;
  const double sz = cfg.input_scale_z;
  std::vector<Tape::Val> h;
  h.reserve(g.nodes.size());
  for (const ObjectObservation& node : g.nodes) {
    const Tape::Val v = t.leaf(Tensor::vector(
        {node.pos[0] * s, node.pos[1] * s, node.pos[2] * sz}));
    h.push_back(t.matvec(w_v, v));
  }
  return h;
}

std::vector<Tape::Val> attention(Tape& t, const ParamBinding& b,
                                 const ModelConfig& cfg, int layer, int head,
                                 EdgeType type,
                                 const std::vector<Tape::Val>& h_in,
                                 const TypeAdjacency& adj) {
  const HeadParams p = head_params(b, layer, head, type);
  std::vector<Tape::Val> u;
  u.reserve(h_in.size());
  for (Tape::Val h : h_in) u.push_back(t.matvec(p.w, h));
  const auto edge_feat_inputs = edge_leaves(t, adj, cfg.input_scale);
  std::vector<std::vector<Tape::Val>> edge_feats(adj.node_count());
  for (std::size_t i = 0; i < adj.node_count(); ++i)
    for (Tape::Val e : edge_feat_inputs[i])
      edge_feats[i].push_back(t.matvec(p.w_e, e));
  return attention_rows(t, p, u, adj, edge_feats);
}

LayerOutput propagate_layer(Tape& t, const ParamBinding& b,
                            const ModelConfig& cfg, int layer, EdgeType type,
                            const std::vector<Tape::Val>& h_in,
                            const TypeAdjacency& adj) {
  if (h_in.size() != adj.node_count())
    throw std::invalid_argument("propagate_layer: node count mismatch");
  const auto edge_raw = edge_leaves(t, adj, cfg.input_scale);

  LayerOutput out;
  out.head_alpha.resize(cfg.heads);
  std::vector<std::vector<Tape::Val>> per_head(cfg.heads);

  for (int head = 0; head < cfg.heads; ++head) {
    const HeadParams p = head_params(b, layer, head, type);
    std::vector<Tape::Val> u;
    u.reserve(h_in.size());
    for (Tape::Val h : h_in) u.push_back(t.matvec(p.w, h));

    std::vector<std::vector<Tape::Val>> edge_feats(adj.node_count());
    for (std::size_t i = 0; i < adj.node_count(); ++i)
      for (Tape::Val e : edge_raw[i])
        edge_feats[i].push_back(t.matvec(p.w_e, e));

    const auto alpha = attention_rows(t, p, u, adj, edge_feats);
    out.head_alpha[head] = alpha;

    per_head[head].reserve(adj.node_count());
    for (std::size_t i = 0; i < adj.node_count(); ++i) {
      const auto& nbrs = adj.neighbors[i];
      if (nbrs.empty()) {
        per_head[head].push_back(t.relu(u[i]));
        continue;
      }
      std::vector<Tape::Val> messages;
      std::vector<Tape::Val> weights;
      messages.reserve(nbrs.size());
      weights.reserve(nbrs.size());
      for (std::size_t k = 0; k < nbrs.size(); ++k) {
        messages.push_back(t.add(u[nbrs[k].first], edge_feats[i][k]));
        weights.push_back(t.pick(alpha[i], k));
      }
      const Tape::Val aggregated = t.weighted_sum(
          std::span<const Tape::Val>(messages),
          std::span<const Tape::Val>(weights));
      per_head[head].push_back(t.relu(t.add(u[i], aggregated)));
    }
  }

  const bool final_layer = layer == cfg.layers - 1;
  out.h.reserve(adj.node_count());
  for (std::size_t i = 0; i < adj.node_count(); ++i) {
    if (cfg.heads == 1) {
      out.h.push_back(per_head[0][i]);
      continue;
    }
    std::vector<Tape::Val> heads;
    heads.reserve(cfg.heads);
    for (int head = 0; head < cfg.heads; ++head)
      heads.push_back(per_head[head][i]);
    out.h.push_back(final_layer
                        ? t.mean(std::span<const Tape::Val>(heads))
                        : t.concat(std::span<const Tape::Val>(heads)));
  }
  return out;
}

TypeWeights type_weights(Tape& t, const ParamBinding& b,
                         const std::vector<Tape::Val>& h_spat,
                         const std::vector<Tape::Val>& h_temp,
                         const TypeAdjacency& spat_adj,
                         const TypeAdjacency& temp_adj) {
  const Tape::Val w_b = b.val("beta.W_b");
  const Tape::Val bias = b.val("beta.b");
  const Tape::Val q = b.val("beta.q");

  auto raw_score = [&](const std::vector<Tape::Val>& h,
                       const TypeAdjacency& adj) -> Tape::Val {
    std::vector<Tape::Val> scores;
    for (std::size_t i = 0; i < adj.node_count(); ++i) {
      if (!adj.has_edges(static_cast<int>(i))) continue;
      scores.push_back(t.dot(q, t.tanh(t.add(t.matvec(w_b, h[i]), bias))));
    }
    if (scores.empty()) return Tape::Val{};
    return t.mean(std::span<const Tape::Val>(scores));
  };

  const Tape::Val raw_spat = raw_score(h_spat, spat_adj);
  const Tape::Val raw_temp = raw_score(h_temp, temp_adj);
  if (!raw_spat.valid() && !raw_temp.valid())
    throw std::invalid_argument("type_weights: graph has no edges");

  TypeWeights w;
  if (!raw_temp.valid()) {
    w.spat = t.leaf(Tensor::scalar(1.0));
    w.temp = t.leaf(Tensor::scalar(0.0));
  } else if (!raw_spat.valid()) {
    w.spat = t.leaf(Tensor::scalar(0.0));
    w.temp = t.leaf(Tensor::scalar(1.0));
  } else {
    const Tape::Val pair[] = {raw_spat, raw_temp};
    const Tape::Val soft = t.softmax(t.concat(pair));
    w.spat = t.pick(soft, 0);
    w.temp = t.pick(soft, 1);
  }
  return w;
}

Embedding embed(Tape& t, const ParamBinding& b, const ModelConfig& cfg,
                const SpatioTemporalGraph& g) {
  if (g.nodes.empty()) throw std::invalid_argument("embed: empty graph");
  const TypeAdjacency spat_adj = spatial_adjacency(g);
  const TypeAdjacency temp_adj = temporal_adjacency(g);

  const std::vector<Tape::Val> h0 = project(t, b, cfg, g);

  Embedding e;
  e.h_spat = h0;
  e.h_temp = h0;
  for (int layer = 0; layer < cfg.layers; ++layer) {
    e.h_spat = propagate_layer(t, b, cfg, layer, EdgeType::kSpatial, e.h_spat,
                               spat_adj)
                   .h;
    e.h_temp = propagate_layer(t, b, cfg, layer, EdgeType::kTemporal, e.h_temp,
                               temp_adj)
                   .h;
  }

  const TypeWeights w =
      type_weights(t, b, e.h_spat, e.h_temp, spat_adj, temp_adj);
  e.beta_spat = w.spat;
  e.beta_temp = w.temp;

  e.m.reserve(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Tape::Val items[] = {e.h_spat[i], e.h_temp[i]};
    const Tape::Val weights[] = {w.spat, w.temp};
    Tape::Val m = t.weighted_sum(items, weights);
    if (cfg.normalize_node_embeddings) {
      double norm_sq = 0.0;
      for (double v : t.value(m).data()) norm_sq += v * v;
      if (norm_sq == 0.0) e.zero_norm_nodes.push_back(static_cast<int>(i));
      m = t.normalize(m);
    }
    e.m.push_back(m);
  }
  return e;
}

}  // namespace gat
}  // namespace coid
