#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "coid/experiment.hpp"

namespace py = pybind11;

namespace {

coid::SceneConfig scene_config_from_kwargs(const py::kwargs& kwargs) {
  coid::SceneConfig cfg;
  for (auto item : kwargs) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "n_objects") cfg.n_objects = py::cast<int>(item.second);
    else if (key == "sequence_length") cfg.sequence_length = py::cast<int>(item.second);
    else if (key == "fov_radius") cfg.fov_radius = py::cast<double>(item.second);
    else if (key == "arena_half_width") cfg.arena_half_width = py::cast<double>(item.second);
    else if (key == "noise_sigma") cfg.noise_sigma = py::cast<double>(item.second);
    else if (key == "p_miss") cfg.p_miss = py::cast<double>(item.second);
    else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
    else throw std::invalid_argument("unknown SceneConfig field: " + key);
  }
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bandwidth-adaptive spatiotemporal correspondence identification";

  py::class_<coid::SceneConfig>(m, "SceneConfig")
      .def(py::init([](const py::kwargs& kwargs) {
        return scene_config_from_kwargs(kwargs);
      }))
      .def_static("preset", &coid::SceneConfig::preset, py::arg("name"))
      .def_readwrite("n_objects", &coid::SceneConfig::n_objects)
      .def_readwrite("sequence_length", &coid::SceneConfig::sequence_length)
      .def_readwrite("fov_radius", &coid::SceneConfig::fov_radius)
      .def_readwrite("noise_sigma", &coid::SceneConfig::noise_sigma)
      .def_readwrite("p_miss", &coid::SceneConfig::p_miss)
      .def_readwrite("seed", &coid::SceneConfig::seed);

  py::class_<coid::ObjectObservation>(m, "ObjectObservation")
      .def_readonly("track_id", &coid::ObjectObservation::track_id)
      .def_readonly("gt_id", &coid::ObjectObservation::gt_id)
      .def_readonly("t", &coid::ObjectObservation::t)
      .def_readonly("pos", &coid::ObjectObservation::pos);

  py::class_<coid::AgentObservations>(m, "AgentObservations")
      .def_readonly("agent_id", &coid::AgentObservations::agent_id)
      .def_readonly("observations", &coid::AgentObservations::observations);

  py::class_<coid::ScenePair>(m, "ScenePair")
      .def_readonly("scene_id", &coid::ScenePair::scene_id)
      .def_property_readonly(
          "agents",
          [](const coid::ScenePair& s) {
            return std::vector<coid::AgentObservations>{s.agents[0],
                                                        s.agents[1]};
          })
      .def_property_readonly("gt_pairs", [](const coid::ScenePair& s) {
        return s.gt.pairs;
      })
      .def("__eq__", [](const coid::ScenePair& a, const coid::ScenePair& b) {
        return a == b;
      });

  py::class_<coid::SpatioTemporalGraph>(m, "SpatioTemporalGraph")
      .def_property_readonly("node_count",
                             &coid::SpatioTemporalGraph::node_count)
      .def_property_readonly(
          "spatial_edge_count",
          [](const coid::SpatioTemporalGraph& g) {
            return g.spatial_edges.size();
          })
      .def_property_readonly(
          "temporal_edge_count", [](const coid::SpatioTemporalGraph& g) {
            return g.temporal_edges.size();
          });

  py::class_<coid::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("layers", &coid::ModelConfig::layers)
      .def_readwrite("heads", &coid::ModelConfig::heads)
      .def_readwrite("dim", &coid::ModelConfig::dim)
      .def_readwrite("beta_dim", &coid::ModelConfig::beta_dim);

  py::class_<coid::ModelParameters>(m, "ModelParameters")
      .def_static("init", &coid::ModelParameters::init, py::arg("config"),
                  py::arg("seed"))
      .def_static("load", &coid::ModelParameters::load_file, py::arg("path"))
      .def("save", &coid::ModelParameters::save_file, py::arg("path"))
      .def_property_readonly("parameter_count",
                             &coid::ModelParameters::coord_count);

  py::class_<coid::SceneEmbedding>(m, "SceneEmbedding")
      .def_readonly("m", &coid::SceneEmbedding::m)
      .def_readonly("z", &coid::SceneEmbedding::z)
      .def_readonly("beta_spat", &coid::SceneEmbedding::beta_spat)
      .def_readonly("beta_temp", &coid::SceneEmbedding::beta_temp);

  py::class_<coid::MetricsReport>(m, "MetricsReport")
      .def_readonly("precision", &coid::MetricsReport::precision)
      .def_readonly("recall", &coid::MetricsReport::recall)
      .def_readonly("f1", &coid::MetricsReport::f1)
      .def_readonly("bis", &coid::MetricsReport::bis)
      .def_readonly("sharing_recall", &coid::MetricsReport::sharing_recall)
      .def_readonly("predicted", &coid::MetricsReport::predicted)
      .def_readonly("correct", &coid::MetricsReport::correct)
      .def_readonly("gt_pairs", &coid::MetricsReport::gt_pairs)
      .def_readonly("bytes", &coid::MetricsReport::bytes)
      .def("__repr__", [](const coid::MetricsReport& r) {
        return "MetricsReport(precision=" + std::to_string(r.precision) +
               ", recall=" + std::to_string(r.recall) +
               ", f1=" + std::to_string(r.f1) +
               ", bis=" + std::to_string(r.bis) + ")";
      });

  m.def("generate_scene", &coid::generate_scene, py::arg("config"),
        "Deterministic synthetic scene pair for one (config, seed)");

  m.def(
      "build_graph",
      [](const std::vector<coid::ObjectObservation>& observations,
         double spatial_radius) {
        coid::BuildOptions opts;
        opts.spatial_radius = spatial_radius;
        return coid::build_graph(
            std::span<const coid::ObjectObservation>(observations), opts);
      },
      py::arg("observations"), py::arg("spatial_radius") = 50.0);

  m.def("embed_scene", &coid::embed_scene, py::arg("params"), py::arg("graph"),
        "Node embeddings, pooled graph embedding and type weights");

  m.def(
      "evaluate_scene",
      [](const coid::ModelParameters& params, const coid::ScenePair& scene,
         double lam, double tau, int bandwidth, int rounds,
         const std::string& baseline, std::uint64_t seed) {
        coid::ExchangeSettings settings;
        settings.lambda = lam;
        settings.tau = tau;
        settings.bandwidth = {bandwidth};
        settings.rounds = rounds;
        if (baseline == "full")
          settings.baseline = coid::SelectionPolicy::kFull;
        else if (baseline == "ne")
          settings.baseline = coid::SelectionPolicy::kNodeOnly;
        else if (baseline == "random")
          settings.baseline = coid::SelectionPolicy::kRandom;
        else
          throw std::invalid_argument("unknown baseline: " + baseline);
        return coid::evaluate_scene(params, scene, {}, settings, seed);
      },
      py::arg("params"), py::arg("scene"), py::arg("lambda_") = 0.5,
      py::arg("tau") = 0.1, py::arg("bandwidth") = 4, py::arg("rounds") = 2,
      py::arg("baseline") = "full", py::arg("seed") = 0,
      "Full exchange-and-match evaluation of one scene pair");

  m.def(
      "train_model",
      [](const std::vector<coid::ScenePair>& scenes, int epochs,
         double learning_rate, std::uint64_t seed,
         const coid::ModelConfig& mcfg) {
        coid::Dataset dataset;
        dataset.scenes = scenes;
        coid::LossConfig cfg;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.seed = seed;
        const coid::TrainResult result =
            coid::train(coid::make_train_scenes(dataset), cfg, mcfg);
        std::vector<std::pair<double, double>> curve;
        curve.reserve(result.curve.size());
        for (const coid::EpochStats& e : result.curve)
          curve.emplace_back(e.train_loss, e.val_loss);
        return py::make_tuple(result.params, curve);
      },
      py::arg("scenes"), py::arg("epochs") = 5,
      py::arg("learning_rate") = 0.01, py::arg("seed") = 0,
      py::arg("model_config") = coid::ModelConfig{},
      "Circle-loss training; returns (params, loss curve)");

  m.def("save_dataset", &coid::save_dataset, py::arg("dataset"),
        py::arg("path"));
  m.def("load_dataset", &coid::load_dataset, py::arg("path"));
  m.def(
      "generate_dataset",
      [](const coid::SceneConfig& cfg, int count) {
        return coid::generate_dataset(cfg, count);
      },
      py::arg("config"), py::arg("count"));

  py::class_<coid::Dataset>(m, "Dataset")
      .def_readonly("scenes", &coid::Dataset::scenes)
      .def_readonly("config", &coid::Dataset::config);

  m.attr("__version__") = "0.1.0";
}
