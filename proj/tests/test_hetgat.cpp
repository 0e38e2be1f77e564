#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "coid/hetgat.hpp"
#include "coid/hetpool.hpp"
#include "doctest.h"

using coid::EdgeType;
using coid::ModelConfig;
using coid::ModelParameters;
using coid::ObjectObservation;
using coid::ParamBinding;
using coid::SpatioTemporalGraph;
using coid::Tape;
using coid::Tensor;

namespace {

ObjectObservation obs(int track, int t, double x, double y, double z = 0.0) {
  return {track, track, t, {x, y, z}};
}

ModelConfig tiny_config(int layers = 1, int heads = 1, int dim = 2,
                        int beta_dim = 2) {
  ModelConfig cfg;
  cfg.layers = layers;
  cfg.heads = heads;
  cfg.dim = dim;
  cfg.beta_dim = beta_dim;
  cfg.input_scale = 1.0;  // hand-built fixtures use feature units directly
  return cfg;
}

SpatioTemporalGraph random_graph(std::mt19937_64& rng, int tracks, int steps) {
  std::uniform_real_distribution<double> coord(-8.0, 8.0);
  std::vector<ObjectObservation> seq;
  for (int t = 0; t < steps; ++t)
    for (int k = 0; k < tracks; ++k)
      seq.push_back(obs(k, t, coord(rng), coord(rng), coord(rng)));
  return coid::build_graph(std::span<const ObjectObservation>(seq));
}

}  // namespace

TEST_SUITE("gat.project") {
  TEST_CASE("zero projection maps every node to zero") {
    const ModelConfig cfg = tiny_config();
    ModelParameters params = ModelParameters::init(cfg, 1);
    Tensor& w_v = params.find("gat.W_v");
    for (std::size_t i = 0; i < w_v.size(); ++i) w_v[i] = 0.0;

    const std::vector<ObjectObservation> seq = {obs(0, 0, 1, 2, 3),
                                                obs(1, 0, -1, 0, 4)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    for (const Tape::Val v : h)
      for (double x : t.value(v).data()) CHECK(x == 0.0);
  }

  TEST_CASE("identity rows embed the position, padded with zeros") {
    ModelConfig cfg = tiny_config(1, 1, 4, 4);
    ModelParameters params = ModelParameters::init(cfg, 1);
    Tensor& w_v = params.find("gat.W_v");
    for (std::size_t i = 0; i < w_v.size(); ++i) w_v[i] = 0.0;
    w_v.at(0, 0) = 1.0;
    w_v.at(1, 1) = 1.0;
    w_v.at(2, 2) = 1.0;

    const std::vector<ObjectObservation> seq = {obs(0, 0, 1, 2, 3),
                                                obs(1, 0, 0, 0, 1)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const Tensor& h0 = t.value(h[0]);
    CHECK(h0[0] == doctest::Approx(1.0));
    CHECK(h0[1] == doctest::Approx(2.0));
    CHECK(h0[2] == doctest::Approx(3.0));
    CHECK(h0[3] == 0.0);
  }
}

TEST_SUITE("gat.attention") {
  TEST_CASE("zero attention vector gives uniform weights") {
    const ModelConfig cfg = tiny_config();
    ModelParameters params = ModelParameters::init(cfg, 2);
    Tensor& a = params.find("gat.layer0.head0.spat.a");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.0;

    std::mt19937_64 rng(3);
    const SpatioTemporalGraph g = random_graph(rng, 4, 1);
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const auto rows = coid::gat::attention(t, b, cfg, 0, 0,
                                           EdgeType::kSpatial, h,
                                           coid::spatial_adjacency(g));
    for (const Tape::Val row : rows) {
      REQUIRE(row.valid());
      const Tensor& alpha = t.value(row);
      for (std::size_t k = 0; k < alpha.size(); ++k)
        CHECK(alpha[k] ==
              doctest::Approx(1.0 / static_cast<double>(alpha.size()))
                  .epsilon(1e-12));
    }
  }

  TEST_CASE("single neighbor gets attention exactly 1") {
    const ModelConfig cfg = tiny_config();
    const ModelParameters params = ModelParameters::init(cfg, 4);
    const std::vector<ObjectObservation> seq = {obs(0, 0, 0, 0),
                                                obs(1, 0, 2, 0)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const auto rows = coid::gat::attention(t, b, cfg, 0, 0,
                                           EdgeType::kSpatial, h,
                                           coid::spatial_adjacency(g));
    CHECK(t.value(rows[0])[0] == 1.0);
    CHECK(t.value(rows[1])[0] == 1.0);
  }

  TEST_CASE("raw scores (1, 1+ln3) softmax to (0.25, 0.75)") {
    // W = 0 so only the edge feature drives the score; a picks W_e e, and the
    // distances 1 and 1+ln3 become the raw scores. Softmax shift-invariance
    // turns the ln 3 gap into the 1:3 ratio.
    ModelConfig cfg = tiny_config(1, 1, 1, 1);
    ModelParameters params = ModelParameters::init(cfg, 5);
    Tensor& w = params.find("gat.layer0.head0.spat.W");
    w[0] = 0.0;
    params.find("gat.layer0.head0.spat.W_e")[0] = 1.0;
    Tensor& a = params.find("gat.layer0.head0.spat.a");
    a[0] = 0.0;
    a[1] = 0.0;
    a[2] = 1.0;

    const double far = 1.0 + std::log(3.0);
    const std::vector<ObjectObservation> seq = {
        obs(0, 0, 0, 0), obs(1, 0, 1, 0), obs(2, 0, -far, 0)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const auto rows = coid::gat::attention(t, b, cfg, 0, 0,
                                           EdgeType::kSpatial, h,
                                           coid::spatial_adjacency(g));
    const Tensor& alpha = t.value(rows[0]);
    REQUIRE(alpha.size() == 2);
    CHECK(alpha[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(alpha[1] == doctest::Approx(0.75).epsilon(1e-12));
  }

  TEST_CASE("attention rows sum to 1 on random graphs") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      const ModelConfig cfg = tiny_config(2, 2, 4, 4);
      const ModelParameters params = ModelParameters::init(cfg, rng());
      const SpatioTemporalGraph g = random_graph(rng, 3, 2);
      Tape t;
      const ParamBinding b = bind_parameters(t, params);
      const auto h = coid::gat::project(t, b, cfg, g);
      for (const EdgeType type : {EdgeType::kSpatial, EdgeType::kTemporal}) {
        const coid::TypeAdjacency adj = type == EdgeType::kSpatial
                                            ? coid::spatial_adjacency(g)
                                            : coid::temporal_adjacency(g);
        const auto rows =
            coid::gat::attention(t, b, cfg, 0, 1 % cfg.heads, type, h, adj);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (!adj.has_edges(static_cast<int>(i))) {
            CHECK_FALSE(rows[i].valid());
            continue;
          }
          double sum = 0.0;
          for (double v : t.value(rows[i]).data()) sum += v;
          CHECK(std::abs(sum - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_SUITE("gat.propagate") {
  TEST_CASE("isolated nodes reduce to relu(W h)") {
    const ModelConfig cfg = tiny_config();
    const ModelParameters params = ModelParameters::init(cfg, 6);
    // two nodes, far apart, spatial radius keeps them disconnected
    const std::vector<ObjectObservation> seq = {obs(0, 0, 0, 0),
                                                obs(1, 0, 500, 0)};
    coid::BuildOptions opts;
    opts.spatial_radius = 10.0;
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq), opts);
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const auto out = coid::gat::propagate_layer(t, b, cfg, 0,
                                                EdgeType::kSpatial, h,
                                                coid::spatial_adjacency(g));
    for (std::size_t i = 0; i < 2; ++i) {
      const Tape::Val expected =
          t.relu(t.matvec(b.val("gat.layer0.head0.spat.W"), h[i]));
      const Tensor& got = t.value(out.h[i]);
      const Tensor& want = t.value(expected);
      for (std::size_t k = 0; k < got.size(); ++k)
        CHECK(got[k] == doctest::Approx(want[k]));
    }
  }

  TEST_CASE("single edge with zero edge weights aggregates relu(Wh_i + Wh_j)") {
    ModelConfig cfg = tiny_config(1, 1, 2, 2);
    ModelParameters params = ModelParameters::init(cfg, 7);
    Tensor& w_e = params.find("gat.layer0.head0.spat.W_e");
    for (std::size_t i = 0; i < w_e.size(); ++i) w_e[i] = 0.0;
    Tensor& w_v = params.find("gat.W_v");
    for (std::size_t i = 0; i < w_v.size(); ++i) w_v[i] = 0.0;
    w_v.at(0, 0) = 1.0;
    w_v.at(1, 1) = 1.0;
    Tensor& w = params.find("gat.layer0.head0.spat.W");
    w.at(0, 0) = 1.0;
    w.at(0, 1) = 1.0;
    w.at(1, 0) = 0.0;
    w.at(1, 1) = 1.0;

    const std::vector<ObjectObservation> seq = {obs(0, 0, 1, 2),
                                                obs(1, 0, 0.5, -1)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const auto out = coid::gat::propagate_layer(t, b, cfg, 0,
                                                EdgeType::kSpatial, h,
                                                coid::spatial_adjacency(g));
    // W h_0 = (3, 2); W h_1 = (-0.5, -1); sum = (2.5, 1) -> relu keeps it
    const Tensor& got = t.value(out.h[0]);
    CHECK(got[0] == doctest::Approx(2.5));
    CHECK(got[1] == doctest::Approx(1.0));
  }

  TEST_CASE("node relabeling permutes embeddings (equivariance)") {
    std::mt19937_64 rng(23);
    const ModelConfig cfg = tiny_config(2, 2, 8, 8);
    for (int trial = 0; trial < 5; ++trial) {
      const ModelParameters params = ModelParameters::init(cfg, rng());
      const SpatioTemporalGraph g = random_graph(rng, 3, 2);
      const int n = static_cast<int>(g.nodes.size());
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const SpatioTemporalGraph pg = coid::permute_graph(g, perm);

      Tape t1, t2;
      const auto e1 = coid::gat::embed(t1, bind_parameters(t1, params), cfg, g);
      const auto e2 =
          coid::gat::embed(t2, bind_parameters(t2, params), cfg, pg);
      for (int i = 0; i < n; ++i) {
        const Tensor& a = t1.value(e1.m[static_cast<std::size_t>(i)]);
        const Tensor& b =
            t2.value(e2.m[static_cast<std::size_t>(perm[i])]);
        for (std::size_t k = 0; k < a.size(); ++k)
          CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
      }
    }
  }
}

TEST_SUITE("gat.type_weights") {
  TEST_CASE("identical populations split the weight evenly") {
    const ModelConfig cfg = tiny_config();
    const ModelParameters params = ModelParameters::init(cfg, 8);
    const std::vector<ObjectObservation> seq = {obs(0, 0, 0, 0),
                                                obs(1, 0, 2, 0)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto h = coid::gat::project(t, b, cfg, g);
    const coid::TypeAdjacency adj = coid::spatial_adjacency(g);
    const auto w = coid::gat::type_weights(t, b, h, h, adj, adj);
    CHECK(t.value(w.spat)[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(t.value(w.temp)[0] == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("single-frame graphs put all weight on the spatial type") {
    const ModelConfig cfg = tiny_config();
    const ModelParameters params = ModelParameters::init(cfg, 9);
    const std::vector<ObjectObservation> seq = {obs(0, 0, 0, 0),
                                                obs(1, 0, 1, 1)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto e = coid::gat::embed(t, b, cfg, g);
    CHECK(t.value(e.beta_spat)[0] == 1.0);
    CHECK(t.value(e.beta_temp)[0] == 0.0);
  }

  TEST_CASE("weights sum to 1 and lie in [0,1] on random graphs") {
    std::mt19937_64 rng(31);
    const ModelConfig cfg = tiny_config(2, 2, 4, 4);
    for (int trial = 0; trial < 20; ++trial) {
      const ModelParameters params = ModelParameters::init(cfg, rng());
      const SpatioTemporalGraph g = random_graph(rng, 3, 2);
      Tape t;
      const auto e = coid::gat::embed(t, bind_parameters(t, params), cfg, g);
      const double bs = t.value(e.beta_spat)[0];
      const double bt = t.value(e.beta_temp)[0];
      CHECK(std::abs(bs + bt - 1.0) < 1e-12);
      CHECK(bs >= 0.0);
      CHECK(bs <= 1.0);
    }
  }

  TEST_CASE("edgeless graphs are rejected") {
    const ModelConfig cfg = tiny_config();
    const ModelParameters params = ModelParameters::init(cfg, 10);
    const std::vector<ObjectObservation> seq = {obs(0, 0, 0, 0)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    CHECK_THROWS_AS(coid::gat::embed(t, b, cfg, g), std::invalid_argument);
  }
}

TEST_SUITE("gat.embed") {
  TEST_CASE("beta collapse: single-frame embedding is normalize(h_spat)") {
    const ModelConfig cfg = tiny_config(2, 2, 4, 4);
    const ModelParameters params = ModelParameters::init(cfg, 11);
    const std::vector<ObjectObservation> seq = {
        obs(0, 0, 0, 0), obs(1, 0, 1, 1), obs(2, 0, -1, 2)};
    const SpatioTemporalGraph g =
        coid::build_graph(std::span<const ObjectObservation>(seq));
    Tape t;
    const ParamBinding b = bind_parameters(t, params);
    const auto e = coid::gat::embed(t, b, cfg, g);
    for (std::size_t i = 0; i < e.m.size(); ++i) {
      const Tensor& m = t.value(e.m[i]);
      const Tensor& hs = t.value(t.normalize(e.h_spat[i]));
      for (std::size_t k = 0; k < m.size(); ++k)
        CHECK(m[k] == doctest::Approx(hs[k]).epsilon(1e-12));
    }
  }

  TEST_CASE("embeddings are unit length when normalization is enabled") {
    std::mt19937_64 rng(37);
    const ModelConfig cfg = tiny_config(2, 2, 4, 4);
    const ModelParameters params = ModelParameters::init(cfg, 13);
    const SpatioTemporalGraph g = random_graph(rng, 4, 2);
    Tape t;
    const auto e = coid::gat::embed(t, bind_parameters(t, params), cfg, g);
    CHECK(e.zero_norm_nodes.empty());
    for (const Tape::Val m : e.m) {
      double norm = 0.0;
      for (double v : t.value(m).data()) norm += v * v;
      CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("pipeline gradient matches finite differences") {
    ModelConfig cfg = tiny_config(2, 2, 4, 4);
    cfg.normalize_node_embeddings = false;  // sum of squared norms is constant otherwise
    std::mt19937_64 rng(41);
    const SpatioTemporalGraph g = random_graph(rng, 2, 2);
    const ModelParameters params = ModelParameters::init(cfg, 17);
    std::vector<Tensor> theta;
    for (std::size_t i = 0; i < params.count(); ++i)
      theta.push_back(params.entry(i).value);

    const coid::GradCheckResult r = coid::grad_check(
        [&](Tape& t, const std::vector<Tape::Val>& leaves) {
          ParamBinding b;
          b.params = &params;
          b.vals = leaves;
          const auto e = coid::gat::embed(t, b, cfg, g);
          Tape::Val loss{};
          for (const Tape::Val m : e.m) {
            const Tape::Val sq = t.dot(m, m);
            loss = loss.valid() ? t.add(loss, sq) : sq;
          }
          return loss;
        },
        theta, 1e-6);
    CHECK(r.non_finite.empty());
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_SUITE("model JSON") {
  TEST_CASE("round trip preserves every parameter") {
    const ModelConfig cfg = tiny_config(2, 2, 4, 4);
    const ModelParameters params = ModelParameters::init(cfg, 99);
    const std::string text = params.to_json_string();
    const ModelParameters back = ModelParameters::from_json_string(text);
    REQUIRE(back.count() == params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
      CHECK(back.entry(i).name == params.entry(i).name);
      CHECK(back.entry(i).value == params.entry(i).value);
    }
    CHECK(back.config().dim == cfg.dim);
  }

  TEST_CASE("malformed documents are rejected") {
    CHECK_THROWS_AS(ModelParameters::from_json_string("{not json"),
                    std::runtime_error);
    CHECK_THROWS_AS(ModelParameters::from_json_string("{\"format\":\"x\"}"),
                    std::runtime_error);
  }
}
