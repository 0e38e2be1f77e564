#include "coid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace coid {

void LossConfig::validate() const {
  if (!(gamma > 0.0)) throw std::invalid_argument("LossConfig: gamma must be > 0");
  if (!(delta_p >= 0.0 && delta_p < delta_n))
    throw std::invalid_argument("LossConfig: need 0 <= delta_p < delta_n");
  if (!(graph_delta_p >= 0.0 && graph_delta_p < graph_delta_n))
    throw std::invalid_argument(
        "LossConfig: need 0 <= graph_delta_p < graph_delta_n");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("LossConfig: learning_rate must be > 0");
  if (epochs < 0) throw std::invalid_argument("LossConfig: epochs must be >= 0");
  if (batch_size < 1)
    throw std::invalid_argument("LossConfig: batch_size must be >= 1");
}

PosNegPartition partition(const GroundTruthPairs& gt, int n_ego,
                          int n_collab) {
  std::vector<bool> ego_cov(static_cast<std::size_t>(n_ego), false);
  std::vector<bool> collab_cov(static_cast<std::size_t>(n_collab), false);
  for (const auto& [e, c] : gt.pairs) {
    if (e < 0 || e >= n_ego || c < 0 || c >= n_collab)
      throw std::invalid_argument("partition: gt index out of range");
    ego_cov[static_cast<std::size_t>(e)] = true;
    collab_cov[static_cast<std::size_t>(c)] = true;
  }
  PosNegPartition p;
  for (int i = 0; i < n_ego; ++i)
    (ego_cov[static_cast<std::size_t>(i)] ? p.ego_pos : p.ego_neg).push_back(i);
  for (int i = 0; i < n_collab; ++i)
    (collab_cov[static_cast<std::size_t>(i)] ? p.collab_pos : p.collab_neg)
        .push_back(i);
  return p;
}

namespace {

/// log(1 + sum_pos exp(gamma (d - dp)) + sum_neg exp(gamma (dn - d))).
/// Margin-satisfied pairs decay toward zero inside the log, so the loss of a
/// fully separated scene approaches 0 and well-separated negatives stop
/// contributing gradient.
Tape::Val circle_term(Tape& t, std::span<const Tape::Val> pos_d,
                      std::span<const Tape::Val> neg_d, const LossConfig& cfg) {
  Tape::Val inner{};
  auto accumulate = [&](Tape::Val term) {
    inner = inner.valid() ? t.add(inner, term) : term;
  };
  for (Tape::Val d : pos_d)
    accumulate(
        t.exp(t.const_mul(cfg.gamma, t.const_add(-cfg.delta_p, d))));
  for (Tape::Val d : neg_d)
    accumulate(t.exp(t.const_mul(
        cfg.gamma, t.const_add(cfg.delta_n, t.const_mul(-1.0, d)))));
  if (!inner.valid()) return t.leaf(Tensor::scalar(0.0));
  return t.log(t.const_add(1.0, inner));
}

}  // namespace

Tape::Val circle_loss(Tape& t,
                      const std::vector<std::vector<Tape::Val>>& distances,
                      const std::vector<int>& anchors,
                      const std::vector<int>& positives,
                      const std::vector<int>& negatives,
                      const LossConfig& cfg) {
  cfg.validate();
  Tape::Val total{};
  for (int a : anchors) {
    const auto& row = distances[static_cast<std::size_t>(a)];
    std::vector<Tape::Val> pos, neg;
    pos.reserve(positives.size());
    neg.reserve(negatives.size());
    for (int j : positives) pos.push_back(row[static_cast<std::size_t>(j)]);
    for (int k : negatives) neg.push_back(row[static_cast<std::size_t>(k)]);
    const Tape::Val term = circle_term(t, pos, neg, cfg);
    total = total.valid() ? t.add(total, term) : term;
  }
  if (!total.valid()) return t.leaf(Tensor::scalar(0.0));
  return total;
}

namespace {

struct EmbeddedGraph {
  std::vector<Tape::Val> m;
  Tape::Val z;
};

EmbeddedGraph embed_for_loss(Tape& t, const ParamBinding& b,
                             const ModelConfig& mcfg,
                             const SpatioTemporalGraph& g) {
  const gat::Embedding e = gat::embed(t, b, mcfg, g);
  const pool::GraphEmbeddingVals z = pool::graph_embedding(
      t, b, mcfg, e.m, spatial_adjacency(g), temporal_adjacency(g),
      e.beta_spat, e.beta_temp);
  return {e.m, z.z};
}

/// One direction of the node-distance loss under the configured pairing.
Tape::Val node_direction_loss(Tape& t,
                              const std::vector<std::vector<Tape::Val>>& d,
                              int n_anchor,
                              const std::vector<int>& anchor_correspondent,
                              const std::vector<int>& other_pos,
                              const std::vector<int>& other_neg,
                              const LossConfig& cfg) {
  if (cfg.pairing == LossConfig::NodePairing::kSharedSets) {
    std::vector<int> anchors(static_cast<std::size_t>(n_anchor));
    std::iota(anchors.begin(), anchors.end(), 0);
    return circle_loss(t, d, anchors, other_pos, other_neg, cfg);
  }
  // matched: each anchor's correspondent is its positive, everything else in
  // the other graph is a negative
  Tape::Val total{};
  const int n_other = d.empty() ? 0 : static_cast<int>(d[0].size());
  for (int a = 0; a < n_anchor; ++a) {
    const auto& row = d[static_cast<std::size_t>(a)];
    std::vector<Tape::Val> pos, neg;
    const int match = anchor_correspondent[static_cast<std::size_t>(a)];
    if (match >= 0) pos.push_back(row[static_cast<std::size_t>(match)]);
    neg.reserve(static_cast<std::size_t>(n_other));
    for (int j = 0; j < n_other; ++j)
      if (j != match) neg.push_back(row[static_cast<std::size_t>(j)]);
    const Tape::Val term = circle_term(t, pos, neg, cfg);
    total = total.valid() ? t.add(total, term) : term;
  }
  if (!total.valid()) return t.leaf(Tensor::scalar(0.0));
  return total;
}

/// Node-to-graph terms: covisible anchors are pulled toward the reference z,
/// the rest pushed past the negative margin.
Tape::Val graph_direction_loss(Tape& t, const std::vector<Tape::Val>& m,
                               Tape::Val z, const std::vector<int>& pos,
                               const std::vector<int>& neg,
                               const LossConfig& node_cfg) {
  LossConfig cfg = node_cfg;
  cfg.delta_p = node_cfg.graph_delta_p;
  cfg.delta_n = node_cfg.graph_delta_n;
  Tape::Val total{};
  auto accumulate = [&](Tape::Val term) {
    total = total.valid() ? t.add(total, term) : term;
  };
  for (int i : pos) {
    const Tape::Val d[] = {distance(t, m[static_cast<std::size_t>(i)], z)};
    accumulate(circle_term(t, std::span<const Tape::Val>(d, 1), {}, cfg));
  }
  for (int i : neg) {
    const Tape::Val d[] = {distance(t, m[static_cast<std::size_t>(i)], z)};
    accumulate(circle_term(t, {}, std::span<const Tape::Val>(d, 1), cfg));
  }
  if (!total.valid()) return t.leaf(Tensor::scalar(0.0));
  return total;
}

}  // namespace

Tape::Val total_loss(Tape& t, const ParamBinding& b, const ModelConfig& mcfg,
                     const SpatioTemporalGraph& ego_graph,
                     const SpatioTemporalGraph& collab_graph,
                     const GroundTruthPairs& gt, const LossConfig& cfg) {
  cfg.validate();
  const EmbeddedGraph ego = embed_for_loss(t, b, mcfg, ego_graph);
  const EmbeddedGraph collab = embed_for_loss(t, b, mcfg, collab_graph);
  const int n = static_cast<int>(ego.m.size());
  const int np = static_cast<int>(collab.m.size());

  // pairwise node distances, ego-major
  std::vector<std::vector<Tape::Val>> d_fwd(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    d_fwd[static_cast<std::size_t>(i)].reserve(static_cast<std::size_t>(np));
    for (int j = 0; j < np; ++j)
      d_fwd[static_cast<std::size_t>(i)].push_back(
          distance(t, ego.m[static_cast<std::size_t>(i)],
                   collab.m[static_cast<std::size_t>(j)]));
  }
  std::vector<std::vector<Tape::Val>> d_bwd(static_cast<std::size_t>(np));
  for (int j = 0; j < np; ++j) {
    d_bwd[static_cast<std::size_t>(j)].reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      d_bwd[static_cast<std::size_t>(j)].push_back(
          d_fwd[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  }

  const PosNegPartition part = partition(gt, n, np);
  std::vector<int> match_of_ego(static_cast<std::size_t>(n), -1);
  std::vector<int> match_of_collab(static_cast<std::size_t>(np), -1);
  for (const auto& [e, c] : gt.pairs) {
    match_of_ego[static_cast<std::size_t>(e)] = c;
    match_of_collab[static_cast<std::size_t>(c)] = e;
  }

  const Tape::Val l_node_fwd = node_direction_loss(
      t, d_fwd, n, match_of_ego, part.collab_pos, part.collab_neg, cfg);
  const Tape::Val l_node_bwd = node_direction_loss(
      t, d_bwd, np, match_of_collab, part.ego_pos, part.ego_neg, cfg);

  const bool other = cfg.graph_anchor == LossConfig::GraphAnchor::kOtherGraph;
  const Tape::Val l_graph_fwd = graph_direction_loss(
      t, ego.m, other ? collab.z : ego.z, part.ego_pos, part.ego_neg, cfg);
  const Tape::Val l_graph_bwd = graph_direction_loss(
      t, collab.m, other ? ego.z : collab.z, part.collab_pos, part.collab_neg,
      cfg);

  return t.const_mul(
      0.25, t.add(t.add(l_node_fwd, l_node_bwd),
                  t.add(l_graph_fwd, l_graph_bwd)));
}

std::vector<TrainScene> make_train_scenes(const Dataset& dataset,
                                          const BuildOptions& options) {
  std::vector<TrainScene> scenes;
  scenes.reserve(dataset.scenes.size());
  for (const ScenePair& s : dataset.scenes) {
    TrainScene ts;
    ts.scene_id = s.scene_id;
    ts.ego = build_graph(
        std::span<const ObjectObservation>(s.agents[0].observations), options);
    ts.collab = build_graph(
        std::span<const ObjectObservation>(s.agents[1].observations), options);
    ts.gt = s.gt;
    scenes.push_back(std::move(ts));
  }
  return scenes;
}

namespace {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

void adam_update(ModelParameters& params, const std::vector<Tensor>& grads,
                 AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.count(); ++p) {
    Tensor& value = params.entry(p).value;
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    const Tensor& g = grads[p];
    for (std::size_t i = 0; i < value.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      value[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
    }
  }
}

double scene_loss_and_grads(const TrainScene& scene,
                            const ModelParameters& params,
                            const LossConfig& cfg,
                            std::vector<Tensor>* grads) {
  Tape t;
  const ParamBinding b = bind_parameters(t, params);
  const Tape::Val loss =
      total_loss(t, b, params.config(), scene.ego, scene.collab, scene.gt, cfg);
  const double value = t.value(loss)[0];
  if (!std::isfinite(value))
    throw std::runtime_error("train: non-finite loss at scene " +
                             std::to_string(scene.scene_id));
  if (grads) {
    t.backward(loss);
    for (std::size_t p = 0; p < params.count(); ++p) {
      const Tensor g = t.grad(b.vals[p]);
      Tensor& acc = (*grads)[p];
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
  }
  return value;
}

std::vector<Tensor> zero_like(const ModelParameters& params) {
  std::vector<Tensor> out;
  out.reserve(params.count());
  for (std::size_t p = 0; p < params.count(); ++p)
    out.push_back(Tensor::zeros(params.entry(p).value.shape()));
  return out;
}

}  // namespace

TrainResult train(const std::vector<TrainScene>& dataset,
                  const LossConfig& cfg, const ModelConfig& mcfg) {
  cfg.validate();
  mcfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  ModelParameters params = ModelParameters::init(mcfg, cfg.seed);
  TrainResult result{params, {}, 0};
  if (cfg.epochs == 0) return result;

  // held-out split for model selection
  std::mt19937_64 rng(mix_seed(cfg.seed, 2001));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = dataset.size() / 5;
  if (n_val == 0 && dataset.size() >= 2) n_val = 1;
  std::vector<std::size_t> val_idx(order.begin(),
                                   order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val),
                                     order.end());

  AdamState adam;
  adam.m = zero_like(params);
  adam.v = zero_like(params);

  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double train_loss_sum = 0.0;
    std::size_t done = 0;
    while (done < train_idx.size()) {
      const std::size_t batch_end = std::min(
          done + static_cast<std::size_t>(cfg.batch_size), train_idx.size());
      std::vector<Tensor> grads = zero_like(params);
      for (std::size_t k = done; k < batch_end; ++k)
        train_loss_sum +=
            scene_loss_and_grads(dataset[train_idx[k]], params, cfg, &grads);
      const double inv = 1.0 / static_cast<double>(batch_end - done);
      for (Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= inv;
      adam_update(params, grads, adam, cfg.learning_rate);
      done = batch_end;
    }
    const double train_loss =
        train_idx.empty() ? 0.0
                          : train_loss_sum / static_cast<double>(train_idx.size());

    double val_loss = 0.0;
    for (std::size_t k : val_idx)
      val_loss += scene_loss_and_grads(dataset[k], params, cfg, nullptr);
    if (!val_idx.empty()) val_loss /= static_cast<double>(val_idx.size());

    result.curve.push_back({epoch, train_loss, val_loss});
    const double selection = val_idx.empty() ? train_loss : val_loss;
    if (selection < best_val) {
      best_val = selection;
      result.params = params;
      result.best_epoch = epoch;
    }
  }
  return result;
}

std::vector<std::string> dead_parameters(const std::vector<TrainScene>& scenes,
                                         const ModelParameters& params,
                                         const LossConfig& cfg) {
  std::vector<Tensor> grads = zero_like(params);
  for (const TrainScene& s : scenes) {
    std::vector<Tensor> g = zero_like(params);
    scene_loss_and_grads(s, params, cfg, &g);
    for (std::size_t p = 0; p < params.count(); ++p)
      for (std::size_t i = 0; i < g[p].size(); ++i)
        grads[p][i] += std::abs(g[p][i]);
  }
  std::vector<std::string> dead;
  for (std::size_t p = 0; p < params.count(); ++p) {
    double total = 0.0;
    for (std::size_t i = 0; i < grads[p].size(); ++i) total += grads[p][i];
    if (total == 0.0) dead.push_back(params.entry(p).name);
  }
  return dead;
}

}  // namespace coid
