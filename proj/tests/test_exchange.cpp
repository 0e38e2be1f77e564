#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "coid/exchange.hpp"
#include "doctest.h"

using coid::BandwidthSchedule;
using coid::CorrespondenceSet;
using coid::ExchangeOptions;
using coid::ExchangeTranscript;
using coid::GroundTruthPairs;
using coid::MetricsReport;
using coid::SceneEmbedding;
using coid::SelectionPolicy;
using coid::Similarities;

namespace {

std::vector<double> basis(std::size_t dim, std::size_t i, double v = 1.0) {
  std::vector<double> e(dim, 0.0);
  e[i] = v;
  return e;
}

SceneEmbedding embedding_of(std::vector<std::vector<double>> m,
                            std::vector<double> z) {
  SceneEmbedding e;
  e.m = std::move(m);
  e.z = std::move(z);
  return e;
}

// sort-and-slice reference for select_topk
std::vector<int> topk_oracle(const std::vector<double>& s, int k,
                             const std::vector<int>& excluded) {
  const std::set<int> skip(excluded.begin(), excluded.end());
  std::vector<std::pair<double, int>> order;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (!skip.count(i)) order.emplace_back(-s[static_cast<std::size_t>(i)], i);
  std::sort(order.begin(), order.end());
  std::vector<int> out;
  for (const auto& [neg, i] : order) {
    (void)neg;
    if (static_cast<int>(out.size()) == k) break;
    out.push_back(i);
  }
  return out;
}

}  // namespace

TEST_SUITE("similarities") {
  TEST_CASE("identical embeddings score exactly 1") {
    const std::vector<std::vector<double>> m = {{0.5, 0.5}, {1.0, 0.0}};
    const Similarities s = coid::similarities(m, m, m[0]);
    CHECK(s.node[0][0] == 1.0);
    CHECK(s.node[1][1] == 1.0);
    CHECK(s.graph[0] == 1.0);
  }

  TEST_CASE("distance ln 2 scores exactly 0.5") {
    const std::vector<std::vector<double>> a = {{0.0}};
    const std::vector<std::vector<double>> b = {{std::log(2.0)}};
    const Similarities s = coid::similarities(a, b, b[0]);
    CHECK(s.node[0][0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.graph[0] == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("scores decrease strictly with distance and stay in (0, 1]") {
    const std::vector<std::vector<double>> ego = {{0.0, 0.0}};
    std::vector<std::vector<double>> recv;
    for (int k = 1; k <= 6; ++k) recv.push_back({0.3 * k, 0.0});
    const Similarities s = coid::similarities(ego, recv, recv[0]);
    for (std::size_t j = 0; j + 1 < recv.size(); ++j)
      CHECK(s.node[0][j] > s.node[0][j + 1]);
    for (double v : s.node[0]) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("empty received set gives zero columns but a graph score") {
    const std::vector<std::vector<double>> ego = {{1.0, 0.0}};
    const Similarities s = coid::similarities(ego, {}, {0.0, 1.0});
    CHECK(s.node[0].empty());
    CHECK(s.graph[0] > 0.0);
  }
}

TEST_SUITE("matching_score") {
  TEST_CASE("lambda endpoints collapse to one term") {
    Similarities s;
    s.node = {{0.6, 0.2}};
    s.graph = {0.2};
    CHECK(coid::matching_score(s, 1.0)[0] == doctest::Approx(0.2));
    CHECK(coid::matching_score(s, 0.0)[0] == doctest::Approx(0.6));
    CHECK(coid::matching_score(s, 0.5)[0] == doctest::Approx(0.4));
  }

  TEST_CASE("missing node columns leave only the graph term") {
    Similarities s;
    s.node = {{}};
    s.graph = {0.8};
    CHECK(coid::matching_score(s, 0.5)[0] == doctest::Approx(0.4));
  }

  TEST_CASE("lambda outside [0,1] is rejected") {
    Similarities s;
    s.node = {{0.5}};
    s.graph = {0.5};
    CHECK_THROWS_AS(coid::matching_score(s, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(coid::matching_score(s, -0.1), std::invalid_argument);
  }
}

TEST_SUITE("select_topk") {
  TEST_CASE("kitchen-sink examples") {
    CHECK(coid::select_topk({0.9, 0.1, 0.5}, 2, {}) ==
          std::vector<int>{0, 2});
    CHECK(coid::select_topk({0.1, 0.9}, 5, {}) == std::vector<int>{1, 0});
    CHECK(coid::select_topk({0.5, 0.5, 0.5}, 2, {}) ==
          std::vector<int>{0, 1});  // ties to the lower index
    CHECK(coid::select_topk({0.9, 0.1, 0.5}, 2, {0}) ==
          std::vector<int>{2, 1});
  }

  TEST_CASE("matches the brute-force oracle on 1000 random instances") {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> quant(0, 9);
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + static_cast<int>(rng() % 20);
      std::vector<double> s(static_cast<std::size_t>(n));
      // quantized scores keep ties frequent
      for (double& v : s)
        v = trial % 2 == 0 ? unit(rng) : quant(rng) / 10.0;
      std::vector<int> excluded;
      for (int i = 0; i < n; ++i)
        if (unit(rng) < 0.2) excluded.push_back(i);
      const int k = 1 + static_cast<int>(rng() % (n + 2));
      CHECK(coid::select_topk(s, k, excluded) == topk_oracle(s, k, excluded));
    }
  }
}

TEST_SUITE("run_exchange") {
  TEST_CASE("unconstrained bandwidth shares everything in one round") {
    const std::size_t d = 4;
    std::vector<std::vector<double>> ma, mb;
    for (std::size_t i = 0; i < 3; ++i) ma.push_back(basis(d, i));
    for (std::size_t i = 0; i < 4; ++i) mb.push_back(basis(d, i % d, 0.7));
    const SceneEmbedding ego = embedding_of(ma, basis(d, 0));
    const SceneEmbedding collab = embedding_of(mb, basis(d, 1));

    const ExchangeTranscript tr = coid::run_exchange(
        ego, collab, BandwidthSchedule::constant(10, 1), ExchangeOptions{});
    CHECK(tr.graph_embeddings_exchanged);
    CHECK(tr.shared_from_ego() == 3);
    CHECK(tr.shared_from_collab() == 4);
    CHECK(tr.rounds_used() == 1);

    GroundTruthPairs gt;
    gt.pairs = {{0, 0}, {1, 1}, {2, 2}};
    const MetricsReport m = coid::compute_metrics(
        CorrespondenceSet{}, tr, gt, static_cast<int>(mb.size()));
    CHECK(m.sharing_recall == 1.0);
  }

  TEST_CASE("bandwidth caps each round and rounds are accounted") {
    const std::size_t d = 3;
    std::vector<std::vector<double>> ma = {basis(d, 0)};
    std::vector<std::vector<double>> mb;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < 20; ++i)
      mb.push_back({unit(rng), unit(rng), unit(rng)});
    const SceneEmbedding ego = embedding_of(ma, basis(d, 0));
    const SceneEmbedding collab = embedding_of(mb, basis(d, 1));

    const ExchangeTranscript tr = coid::run_exchange(
        ego, collab, BandwidthSchedule::constant(5, 2), ExchangeOptions{});
    CHECK(tr.shared_from_collab() == 10);
    CHECK(tr.rounds_used() == 2);
    for (const coid::ExchangeRound& r : tr.rounds)
      CHECK(r.collab_to_ego.sent.size() <= 5);

    GroundTruthPairs gt;  // empty; only the accounting matters here
    const MetricsReport m =
        coid::compute_metrics(CorrespondenceSet{}, tr, gt, 20);
    CHECK(m.interactions == 2);
    CHECK(m.shared_per_round == doctest::Approx(5.0));
  }

  TEST_CASE("identical seeds give bit-identical transcripts") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<std::vector<double>> ma, mb;
    for (int i = 0; i < 8; ++i) {
      ma.push_back({unit(rng), unit(rng)});
      mb.push_back({unit(rng), unit(rng)});
    }
    const SceneEmbedding ego = embedding_of(ma, {unit(rng), unit(rng)});
    const SceneEmbedding collab = embedding_of(mb, {unit(rng), unit(rng)});
    ExchangeOptions opts;
    opts.policy = SelectionPolicy::kRandom;
    opts.seed = 99;
    const auto t1 =
        coid::run_exchange(ego, collab, BandwidthSchedule::constant(3, 2), opts);
    const auto t2 =
        coid::run_exchange(ego, collab, BandwidthSchedule::constant(3, 2), opts);
    REQUIRE(t1.rounds.size() == t2.rounds.size());
    for (std::size_t r = 0; r < t1.rounds.size(); ++r) {
      CHECK(t1.rounds[r].ego_to_collab.sent == t2.rounds[r].ego_to_collab.sent);
      CHECK(t1.rounds[r].collab_to_ego.sent == t2.rounds[r].collab_to_ego.sent);
    }
  }

  TEST_CASE("no node is ever re-shared and caps hold under all policies") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (const SelectionPolicy policy :
         {SelectionPolicy::kFull, SelectionPolicy::kNodeOnly,
          SelectionPolicy::kRandom}) {
      for (int trial = 0; trial < 30; ++trial) {
        const int na = 1 + static_cast<int>(rng() % 12);
        const int nb = 1 + static_cast<int>(rng() % 12);
        std::vector<std::vector<double>> ma, mb;
        for (int i = 0; i < na; ++i) ma.push_back({unit(rng), unit(rng)});
        for (int i = 0; i < nb; ++i) mb.push_back({unit(rng), unit(rng)});
        const SceneEmbedding ego = embedding_of(ma, {unit(rng), unit(rng)});
        const SceneEmbedding collab =
            embedding_of(mb, {unit(rng), unit(rng)});
        BandwidthSchedule schedule;
        const int rounds = 1 + static_cast<int>(rng() % 4);
        for (int r = 0; r < rounds; ++r)
          schedule.k_per_round.push_back(1 + static_cast<int>(rng() % 5));
        ExchangeOptions opts;
        opts.policy = policy;
        opts.seed = rng();
        const ExchangeTranscript tr =
            coid::run_exchange(ego, collab, schedule, opts);
        std::set<int> seen_ego, seen_collab;
        for (std::size_t r = 0; r < tr.rounds.size(); ++r) {
          const auto& round = tr.rounds[r];
          CHECK(round.ego_to_collab.sent.size() <=
                static_cast<std::size_t>(schedule.k_per_round[r]));
          CHECK(round.collab_to_ego.sent.size() <=
                static_cast<std::size_t>(schedule.k_per_round[r]));
          for (int i : round.ego_to_collab.sent)
            CHECK(seen_ego.insert(i).second);
          for (int i : round.collab_to_ego.sent)
            CHECK(seen_collab.insert(i).second);
        }
      }
    }
  }
}

TEST_SUITE("match") {
  TEST_CASE("dominant similarity matches with high confidence") {
    const std::vector<std::vector<double>> ego = {{10.0, 0.0, 0.0}};
    const std::vector<std::vector<double>> recv = {
        {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const CorrespondenceSet cs = coid::match(ego, recv, {0, 1, 2}, 0.5);
    REQUIRE(cs.pairs.size() == 1);
    CHECK(cs.pairs[0].ego == 0);
    CHECK(cs.pairs[0].collab == 0);
    CHECK(cs.pairs[0].confidence > 0.99);
  }

  TEST_CASE("indistinguishable candidates stay unmatched at tau 0.5") {
    const std::vector<std::vector<double>> ego = {{1.0, 0.0}};
    const std::vector<std::vector<double>> recv = {
        {0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
    const CorrespondenceSet cs = coid::match(ego, recv, {0, 1, 2}, 0.5);
    CHECK(cs.pairs.empty());
  }

  TEST_CASE("a single received node is matched with confidence 1") {
    const std::vector<std::vector<double>> ego = {{1.0, 0.0}};
    const std::vector<std::vector<double>> recv = {{0.2, 0.1}};
    const CorrespondenceSet cs = coid::match(ego, recv, {5}, 0.5);
    REQUIRE(cs.pairs.size() == 1);
    CHECK(cs.pairs[0].collab == 5);
    CHECK(cs.pairs[0].confidence == 1.0);
  }

  TEST_CASE("empty received set yields an empty correspondence set") {
    const std::vector<std::vector<double>> ego = {{1.0, 0.0}};
    CHECK(coid::match(ego, {}, {}, 0.5).pairs.empty());
  }

  TEST_CASE("permuting the received set permutes nothing after index mapping") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<std::vector<double>> ego, recv;
    for (int i = 0; i < 5; ++i) ego.push_back({unit(rng), unit(rng)});
    for (int i = 0; i < 7; ++i) recv.push_back({unit(rng), unit(rng)});
    std::vector<int> index = {10, 11, 12, 13, 14, 15, 16};
    const CorrespondenceSet base = coid::match(ego, recv, index, 0.2);

    std::vector<std::size_t> perm = {3, 0, 6, 2, 5, 1, 4};
    std::vector<std::vector<double>> recv_p(recv.size());
    std::vector<int> index_p(index.size());
    for (std::size_t j = 0; j < perm.size(); ++j) {
      recv_p[j] = recv[perm[j]];
      index_p[j] = index[perm[j]];
    }
    const CorrespondenceSet permuted = coid::match(ego, recv_p, index_p, 0.2);
    REQUIRE(base.pairs.size() == permuted.pairs.size());
    for (std::size_t i = 0; i < base.pairs.size(); ++i) {
      CHECK(base.pairs[i].ego == permuted.pairs[i].ego);
      CHECK(base.pairs[i].collab == permuted.pairs[i].collab);
      CHECK(base.pairs[i].confidence ==
            doctest::Approx(permuted.pairs[i].confidence).epsilon(1e-12));
    }
  }

  TEST_CASE("softmax rows of the correspondence matrix sum to 1") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<std::vector<double>> ego, recv;
    for (int i = 0; i < 4; ++i) ego.push_back({unit(rng), unit(rng)});
    for (int i = 0; i < 6; ++i) recv.push_back({unit(rng), unit(rng)});
    // tau 0 emits every row's argmax; confidences are the row maxima of Y
    const CorrespondenceSet cs =
        coid::match(ego, recv, {0, 1, 2, 3, 4, 5}, 0.0);
    REQUIRE(cs.pairs.size() == ego.size());
    for (const coid::Correspondence& c : cs.pairs) {
      CHECK(c.confidence > 1.0 / 7.0);  // above uniform
      CHECK(c.confidence <= 1.0);
    }
  }
}

TEST_SUITE("compute_metrics") {
  namespace {
  ExchangeTranscript transcript_with(std::vector<std::vector<int>> collab_sent,
                                     std::vector<int> schedule) {
    ExchangeTranscript tr;
    tr.schedule = std::move(schedule);
    for (std::size_t r = 0; r < collab_sent.size(); ++r) {
      coid::ExchangeRound round;
      round.round = static_cast<int>(r + 1);
      round.collab_to_ego.sent = collab_sent[r];
      tr.rounds.push_back(std::move(round));
    }
    return tr;
  }
  }  // namespace

  TEST_CASE("precision / recall / F1 on the worked example") {
    CorrespondenceSet pred;
    pred.pairs = {{1, 100, 0.9}, {3, 300, 0.8}};
    GroundTruthPairs gt;
    gt.pairs = {{1, 100}, {2, 200}};
    const auto tr = transcript_with({{100, 200, 300}}, {3});
    const MetricsReport m = coid::compute_metrics(pred, tr, gt, 10);
    CHECK(m.precision == doctest::Approx(0.5));
    CHECK(m.recall == doctest::Approx(0.5));
    CHECK(m.f1 == doctest::Approx(0.5));
  }

  TEST_CASE("full sharing at perfect recall gives BIS exactly 1") {
    CorrespondenceSet pred;
    pred.pairs = {{0, 0, 0.9}, {1, 1, 0.9}, {2, 2, 0.9}, {3, 3, 0.9}};
    GroundTruthPairs gt;
    gt.pairs = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    const auto tr = transcript_with({{0, 1, 2, 3}}, {4});
    const MetricsReport m = coid::compute_metrics(pred, tr, gt, 4);
    CHECK(m.recall == 1.0);
    CHECK(m.bis == 1.0);
  }

  TEST_CASE("BIS formula on the 20-query construction") {
    CorrespondenceSet pred;
    GroundTruthPairs gt;
    for (int i = 0; i < 10; ++i) {
      pred.pairs.push_back({i, i, 0.9});
      gt.pairs.emplace_back(i, i);
    }
    const auto tr =
        transcript_with({{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}}, {5, 5});
    const MetricsReport m = coid::compute_metrics(pred, tr, gt, 20);
    CHECK(m.recall == 1.0);
    CHECK(m.interactions == 2);
    CHECK(m.shared_per_round == doctest::Approx(5.0));
    CHECK(m.bis == doctest::Approx(2.0));
  }

  TEST_CASE("degenerate counts") {
    const auto tr = transcript_with({{0}}, {1});
    GroundTruthPairs gt;
    gt.pairs = {{0, 0}};
    const MetricsReport none =
        coid::compute_metrics(CorrespondenceSet{}, tr, gt, 5);
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);

    GroundTruthPairs empty_gt;
    const MetricsReport trivially_right =
        coid::compute_metrics(CorrespondenceSet{}, tr, empty_gt, 5);
    CHECK(trivially_right.recall == 1.0);
    CorrespondenceSet spurious;
    spurious.pairs = {{0, 0, 0.9}};
    const MetricsReport wrong =
        coid::compute_metrics(spurious, tr, empty_gt, 5);
    CHECK(wrong.recall == 0.0);
  }
}
