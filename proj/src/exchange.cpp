#include "coid/exchange.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace coid {

namespace {

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("embedding dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

BandwidthSchedule BandwidthSchedule::constant(int k, int rounds) {
  BandwidthSchedule s;
  s.k_per_round.assign(static_cast<std::size_t>(rounds), k);
  s.validate();
  return s;
}

void BandwidthSchedule::validate() const {
  if (k_per_round.empty())
    throw std::invalid_argument("BandwidthSchedule: needs at least one round");
  for (int k : k_per_round)
    if (k < 1)
      throw std::invalid_argument("BandwidthSchedule: K must be >= 1");
}

int ExchangeTranscript::rounds_used() const {
  int used = 0;
  for (const ExchangeRound& r : rounds)
    if (!r.ego_to_collab.sent.empty() || !r.collab_to_ego.sent.empty())
      used = r.round;
  return used;
}

int ExchangeTranscript::shared_from_collab() const {
  int n = 0;
  for (const ExchangeRound& r : rounds)
    n += static_cast<int>(r.collab_to_ego.sent.size());
  return n;
}

int ExchangeTranscript::shared_from_ego() const {
  int n = 0;
  for (const ExchangeRound& r : rounds)
    n += static_cast<int>(r.ego_to_collab.sent.size());
  return n;
}

std::uint64_t ExchangeTranscript::total_bytes() const {
  std::uint64_t b = bootstrap_bytes;
  for (const ExchangeRound& r : rounds)
    b += r.ego_to_collab.bytes + r.collab_to_ego.bytes;
  return b;
}

std::vector<int> ExchangeTranscript::received_by_ego() const {
  std::vector<int> out;
  for (const ExchangeRound& r : rounds)
    out.insert(out.end(), r.collab_to_ego.sent.begin(),
               r.collab_to_ego.sent.end());
  return out;
}

std::vector<int> ExchangeTranscript::received_by_collab() const {
  std::vector<int> out;
  for (const ExchangeRound& r : rounds)
    out.insert(out.end(), r.ego_to_collab.sent.begin(),
               r.ego_to_collab.sent.end());
  return out;
}

Similarities similarities(const std::vector<std::vector<double>>& m_ego,
                          const std::vector<std::vector<double>>& m_recv,
                          const std::vector<double>& z_recv) {
  Similarities s;
  s.node.resize(m_ego.size());
  s.graph.resize(m_ego.size());
  for (std::size_t i = 0; i < m_ego.size(); ++i) {
    s.node[i].reserve(m_recv.size());
    for (const auto& mj : m_recv)
      s.node[i].push_back(std::exp(-l2_distance(m_ego[i], mj)));
    s.graph[i] = std::exp(-l2_distance(m_ego[i], z_recv));
  }
  return s;
}

std::vector<double> matching_score(const Similarities& sims, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("matching_score: lambda must be in [0, 1]");
  std::vector<double> s(sims.graph.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (sims.node[i].empty()) {
      s[i] = lambda * sims.graph[i];
    } else {
      const double best =
          *std::max_element(sims.node[i].begin(), sims.node[i].end());
      s[i] = lambda * sims.graph[i] + (1.0 - lambda) * best;
    }
  }
  return s;
}

std::vector<int> select_topk(const std::vector<double>& scores, int k,
                             const std::vector<int>& excluded) {
  if (k < 1) throw std::invalid_argument("select_topk: K must be >= 1");
  const std::set<int> skip(excluded.begin(), excluded.end());
  std::vector<int> candidates;
  candidates.reserve(scores.size());
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (!skip.count(i)) candidates.push_back(i);
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  if (static_cast<int>(candidates.size()) > k) candidates.resize(k);
  return candidates;
}

namespace {

struct AgentState {
  const SceneEmbedding* self = nullptr;
  std::vector<int> shared;                       // own nodes already sent
  std::vector<std::vector<double>> received;     // embeddings received so far
  std::vector<int> received_index;               // their node indices
  bool has_peer_graph_embedding = false;
  std::vector<double> peer_z;

  int node_count() const { return static_cast<int>(self->m.size()); }
};

/// One agent picks its next batch: scored Top-K against everything received,
/// or a random draw for the baselines.
std::vector<int> pick_batch(AgentState& agent, int k, double lambda,
                            SelectionPolicy policy, std::mt19937_64& rng) {
  const int n = agent.node_count();
  std::vector<int> remaining;
  for (int i = 0; i < n; ++i)
    if (std::find(agent.shared.begin(), agent.shared.end(), i) ==
        agent.shared.end())
      remaining.push_back(i);
  if (remaining.empty()) return {};

  const bool random_pick =
      policy == SelectionPolicy::kRandom ||
      (policy == SelectionPolicy::kNodeOnly && agent.received.empty());
  if (random_pick) {
    std::vector<int> pool = remaining;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k)));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  // kNodeOnly never uses the graph embedding; kFull needs it from round 0.
  const double lam = policy == SelectionPolicy::kNodeOnly ? 0.0 : lambda;
  const std::vector<double> z =
      agent.has_peer_graph_embedding
          ? agent.peer_z
          : std::vector<double>(agent.self->m.front().size(), 0.0);
  const Similarities sims = similarities(agent.self->m, agent.received, z);
  const std::vector<double> scores = matching_score(sims, lam);
  return select_topk(scores, k, agent.shared);
}

}  // namespace

ExchangeTranscript run_exchange(const SceneEmbedding& ego,
                                const SceneEmbedding& collab,
                                const BandwidthSchedule& schedule,
                                const ExchangeOptions& options) {
  schedule.validate();
  if (!(options.lambda >= 0.0 && options.lambda <= 1.0))
    throw std::invalid_argument("run_exchange: lambda must be in [0, 1]");

  std::mt19937_64 rng(options.seed);
  AgentState a;
  a.self = &ego;
  AgentState b;
  b.self = &collab;
  const std::uint64_t z_bytes = 8ull * ego.z.size();

  ExchangeTranscript transcript;
  transcript.schedule = schedule.k_per_round;

  if (options.policy == SelectionPolicy::kFull) {
    a.peer_z = collab.z;
    a.has_peer_graph_embedding = true;
    b.peer_z = ego.z;
    b.has_peer_graph_embedding = true;
    transcript.graph_embeddings_exchanged = true;
    transcript.bootstrap_bytes = 2 * z_bytes;
  }

  for (int r = 1; r <= schedule.rounds(); ++r) {
    const int k = schedule.k_per_round[static_cast<std::size_t>(r - 1)];
    ExchangeRound round;
    round.round = r;

    // ego sends first; the collaborator sees this round's batch before picking
    auto deliver = [&](AgentState& sender, AgentState& receiver,
                       DirectionTraffic& traffic) {
      const std::vector<int> batch =
          pick_batch(sender, k, options.lambda, options.policy, rng);
      for (int idx : batch) {
        sender.shared.push_back(idx);
        receiver.received.push_back(
            sender.self->m[static_cast<std::size_t>(idx)]);
        receiver.received_index.push_back(idx);
      }
      traffic.sent = batch;
      traffic.bytes = 8ull * sender.self->m.front().size() * batch.size();
    };
    deliver(a, b, round.ego_to_collab);
    deliver(b, a, round.collab_to_ego);
    transcript.rounds.push_back(std::move(round));
  }
  return transcript;
}

CorrespondenceSet match(const std::vector<std::vector<double>>& m_ego,
                        const std::vector<std::vector<double>>& received,
                        const std::vector<int>& received_index, double tau) {
  CorrespondenceSet out;
  if (received.empty()) return out;
  if (received_index.size() != received.size())
    throw std::invalid_argument("match: received index size mismatch");

  for (std::size_t i = 0; i < m_ego.size(); ++i) {
    std::vector<double> row(received.size());
    for (std::size_t j = 0; j < received.size(); ++j)
      row[j] = dot(m_ego[i], received[j]);
    // shift-stable row softmax
    const double hi = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (double& v : row) {
      v = std::exp(v - hi);
      denom += v;
    }
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;
    const double confidence = row[best] / denom;
    if (confidence >= tau)
      out.pairs.push_back({static_cast<int>(i), received_index[best],
                           confidence});
  }
  return out;
}

MetricsReport compute_metrics(const CorrespondenceSet& predicted,
                              const ExchangeTranscript& transcript,
                              const GroundTruthPairs& gt, int n_query) {
  MetricsReport r;
  r.predicted = static_cast<int>(predicted.pairs.size());
  r.gt_pairs = static_cast<int>(gt.pairs.size());
  r.n_query = n_query;
  r.bytes = transcript.total_bytes();

  const std::set<std::pair<int, int>> gt_set(gt.pairs.begin(), gt.pairs.end());
  for (const Correspondence& c : predicted.pairs)
    if (gt_set.count({c.ego, c.collab})) ++r.correct;

  r.precision = r.predicted > 0
                    ? static_cast<double>(r.correct) / r.predicted
                    : 0.0;
  if (r.gt_pairs > 0)
    r.recall = static_cast<double>(r.correct) / r.gt_pairs;
  else
    r.recall = r.predicted == 0 ? 1.0 : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;

  r.interactions = transcript.rounds_used();
  if (r.interactions > 0) {
    double k_sum = 0.0;
    for (int i = 0; i < r.interactions; ++i)
      k_sum += transcript.schedule[static_cast<std::size_t>(i)];
    r.shared_per_round = k_sum / r.interactions;
    r.bis = r.recall * n_query / (r.interactions * r.shared_per_round);
  }

  // fraction of gt-covisible collaborator nodes that actually crossed the wire
  std::set<int> covisible;
  for (const auto& [e, c] : gt.pairs) {
    (void)e;
    covisible.insert(c);
  }
  if (!covisible.empty()) {
    int present = 0;
    for (int idx : transcript.received_by_ego())
      if (covisible.count(idx)) ++present;
    r.sharing_recall = static_cast<double>(present) / covisible.size();
  } else {
    r.sharing_recall = 1.0;
  }
  return r;
}

}  // namespace coid
