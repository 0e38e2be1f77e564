#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "coid/hetpool.hpp"

namespace coid {

/// Per-round node-embedding budget. k_per_round[r-1] caps round r; round 0 of
/// the protocol carries only the pooled graph embeddings.
struct BandwidthSchedule {
  std::vector<int> k_per_round;

  static BandwidthSchedule constant(int k, int rounds);
  void validate() const;
  int rounds() const { return static_cast<int>(k_per_round.size()); }
};

/// Candidate-selection policy of the interactive protocol.
enum class SelectionPolicy {
  kFull,      // graph-embedding bootstrap + scored Top-K (lambda blend)
  kNodeOnly,  // no bootstrap, random round 1, then node-similarity Top-K
  kRandom,    // uniformly random K nodes every round
};

struct DirectionTraffic {
  std::vector<int> sent;       // node indices shared this round
  std::uint64_t bytes = 0;
};

struct ExchangeRound {
  int round = 0;  // 1-based; round 0 is the graph-embedding bootstrap
  DirectionTraffic ego_to_collab;
  DirectionTraffic collab_to_ego;
};

struct ExchangeTranscript {
  bool graph_embeddings_exchanged = false;
  std::uint64_t bootstrap_bytes = 0;
  std::vector<ExchangeRound> rounds;
  std::vector<int> schedule;  // K_r actually configured per round

  int rounds_used() const;        // rounds that carried any node traffic
  int shared_from_collab() const; // total nodes the collaborator sent
  int shared_from_ego() const;
  std::uint64_t total_bytes() const;
  std::vector<int> received_by_ego() const;  // collaborator node indices, in order
  std::vector<int> received_by_collab() const;
};

struct Correspondence {
  int ego = 0;
  int collab = 0;
  double confidence = 0.0;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double bis = 0.0;
  double sharing_recall = 0.0;
  int predicted = 0;
  int correct = 0;
  int gt_pairs = 0;
  int n_query = 0;
  int interactions = 0;
  double shared_per_round = 0.0;
  std::uint64_t bytes = 0;
};

/// S_node[i][j] = exp(-|m_i - recv_j|), s_graph[i] = exp(-|m_i - z'|).
struct Similarities {
  std::vector<std::vector<double>> node;  // N x K, K may be 0
  std::vector<double> graph;              // N
};

Similarities similarities(const std::vector<std::vector<double>>& m_ego,
                          const std::vector<std::vector<double>>& m_recv,
                          const std::vector<double>& z_recv);

/// s_i = lambda * s_graph_i + (1-lambda) * max_j S_node[i][j]; with no
/// received nodes the node term drops out.
std::vector<double> matching_score(const Similarities& sims, double lambda);

/// K highest-scoring indices not in `excluded`, ties to the lower index.
std::vector<int> select_topk(const std::vector<double>& scores, int k,
                             const std::vector<int>& excluded);

struct ExchangeOptions {
  double lambda = 0.5;
  SelectionPolicy policy = SelectionPolicy::kFull;
  std::uint64_t seed = 0;  // drives the random selections only
};

/// Runs the interactive sharing protocol between the two embedded graphs.
/// The ego agent sends first within each round; previously shared nodes are
/// never re-selected. Deterministic for a fixed seed.
ExchangeTranscript run_exchange(const SceneEmbedding& ego,
                                const SceneEmbedding& collab,
                                const BandwidthSchedule& schedule,
                                const ExchangeOptions& options);

/// Row-wise softmax of the dot-product similarity between ego embeddings and
/// the received embeddings; emits (i, argmax_j) where the softmax mass at the
/// argmax clears the threshold. `received_index[j]` maps matrix columns back
/// to collaborator node indices.
CorrespondenceSet match(const std::vector<std::vector<double>>& m_ego,
                        const std::vector<std::vector<double>>& received,
                        const std::vector<int>& received_index, double tau);

struct GroundTruthPairs {
  std::vector<std::pair<int, int>> pairs;  // (ego node, collaborator node)
};

MetricsReport compute_metrics(const CorrespondenceSet& predicted,
                              const ExchangeTranscript& transcript,
                              const GroundTruthPairs& gt, int n_query);

}  // namespace coid
