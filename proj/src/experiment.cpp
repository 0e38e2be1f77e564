#include "coid/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace coid {

using nlohmann::json;

void ExchangeSettings::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("ExchangeSettings: lambda must be in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("ExchangeSettings: tau must be in [0, 1]");
  if (rounds < 1)
    throw std::invalid_argument("ExchangeSettings: rounds must be >= 1");
  if (bandwidth.empty())
    throw std::invalid_argument("ExchangeSettings: bandwidth must be nonempty");
  if (bandwidth.size() != 1 &&
      bandwidth.size() != static_cast<std::size_t>(rounds))
    throw std::invalid_argument(
        "ExchangeSettings: bandwidth must have 1 entry or one per round");
  for (int k : bandwidth)
    if (k < 1)
      throw std::invalid_argument("ExchangeSettings: bandwidth entries >= 1");
}

BandwidthSchedule ExchangeSettings::schedule() const {
  validate();
  if (bandwidth.size() == 1)
    return BandwidthSchedule::constant(bandwidth[0], rounds);
  BandwidthSchedule s;
  s.k_per_round = bandwidth;
  s.validate();
  return s;
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw std::runtime_error("config: unknown key \"" + it.key() + "\" in " +
                               where);
}

json pose_json(const AgentPose& p) {
  return json::array({p.position[0], p.position[1], p.position[2], p.yaw});
}

AgentPose pose_from(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error(std::string("config: ") + name +
                             " must be [x, y, z, yaw]");
  return {{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()},
          j[3].get<double>()};
}

const char* pairing_name(LossConfig::NodePairing p) {
  return p == LossConfig::NodePairing::kMatched ? "matched" : "shared_sets";
}

const char* anchor_name(LossConfig::GraphAnchor a) {
  return a == LossConfig::GraphAnchor::kOtherGraph ? "other" : "own";
}

const char* baseline_name(SelectionPolicy p) {
  switch (p) {
    case SelectionPolicy::kFull: return "full";
    case SelectionPolicy::kNodeOnly: return "ne";
    case SelectionPolicy::kRandom: return "random";
  }
  return "full";
}

SelectionPolicy baseline_from(const std::string& s) {
  if (s == "full") return SelectionPolicy::kFull;
  if (s == "ne") return SelectionPolicy::kNodeOnly;
  if (s == "random") return SelectionPolicy::kRandom;
  throw std::runtime_error("config: unknown baseline \"" + s + "\"");
}

}  // namespace

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["seed"] = seed;
  j["scenes"] = scenes;
  j["scene"] = json{{"n_objects", scene.n_objects},
                    {"arena_half_width", scene.arena_half_width},
                    {"sequence_length", scene.sequence_length},
                    {"fov_radius", scene.fov_radius},
                    {"agent_a", pose_json(scene.agent_a)},
                    {"agent_b", pose_json(scene.agent_b)},
                    {"noise_sigma", scene.noise_sigma},
                    {"p_miss", scene.p_miss},
                    {"speed_min", scene.speed_min},
                    {"speed_max", scene.speed_max},
                    {"elevation_min", scene.elevation_min},
                    {"elevation_max", scene.elevation_max},
                    {"heading_jitter", scene.heading_jitter},
                    {"radial_flow", scene.radial_flow},
                    {"id_switch_prob", scene.id_switch_prob}};
  j["graph"] = json{
      {"spatial_radius", graph.spatial_radius},
      {"temporal_links", graph.temporal_links == TemporalLinks::kConsecutive
                             ? "consecutive"
                             : "all_pairs"}};
  j["model"] = json{{"layers", model.layers},
                    {"heads", model.heads},
                    {"dim", model.dim},
                    {"beta_dim", model.beta_dim},
                    {"pool_ratio", model.pool_ratio},
                    {"input_scale", model.input_scale},
                    {"input_scale_z", model.input_scale_z},
                    {"normalize_node_embeddings", model.normalize_node_embeddings},
                    {"normalize_graph_embedding", model.normalize_graph_embedding}};
  j["loss"] = json{{"gamma", loss.gamma},
                   {"delta_p", loss.delta_p},
                   {"delta_n", loss.delta_n},
                   {"graph_delta_p", loss.graph_delta_p},
                   {"graph_delta_n", loss.graph_delta_n},
                   {"learning_rate", loss.learning_rate},
                   {"epochs", loss.epochs},
                   {"batch_size", loss.batch_size},
                   {"node_pairing", pairing_name(loss.pairing)},
                   {"graph_anchor", anchor_name(loss.graph_anchor)}};
  j["exchange"] = json{{"lambda", exchange.lambda},
                       {"tau", exchange.tau},
                       {"bandwidth", exchange.bandwidth},
                       {"rounds", exchange.rounds},
                       {"baseline", baseline_name(exchange.baseline)}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("config parse error: ") + e.what());
  }
  ExperimentConfig c;
  reject_unknown_keys(
      j, {"seed", "scenes", "scene", "graph", "model", "loss", "exchange"},
      "top level");
  c.seed = j.value("seed", c.seed);
  c.scenes = j.value("scenes", c.scenes);

  if (j.contains("scene")) {
    const json& s = j["scene"];
    reject_unknown_keys(s,
                        {"n_objects", "arena_half_width", "sequence_length",
                         "fov_radius", "agent_a", "agent_b", "noise_sigma",
                         "p_miss", "speed_min", "speed_max", "heading_jitter",
                         "id_switch_prob", "elevation_min", "elevation_max",
                         "radial_flow"},
                        "scene");
    c.scene.n_objects = s.value("n_objects", c.scene.n_objects);
    c.scene.arena_half_width =
        s.value("arena_half_width", c.scene.arena_half_width);
    c.scene.sequence_length =
        s.value("sequence_length", c.scene.sequence_length);
    c.scene.fov_radius = s.value("fov_radius", c.scene.fov_radius);
    if (s.contains("agent_a")) c.scene.agent_a = pose_from(s["agent_a"], "agent_a");
    if (s.contains("agent_b")) c.scene.agent_b = pose_from(s["agent_b"], "agent_b");
    c.scene.noise_sigma = s.value("noise_sigma", c.scene.noise_sigma);
    c.scene.p_miss = s.value("p_miss", c.scene.p_miss);
    c.scene.speed_min = s.value("speed_min", c.scene.speed_min);
    c.scene.speed_max = s.value("speed_max", c.scene.speed_max);
    c.scene.elevation_min = s.value("elevation_min", c.scene.elevation_min);
    c.scene.elevation_max = s.value("elevation_max", c.scene.elevation_max);
    c.scene.heading_jitter = s.value("heading_jitter", c.scene.heading_jitter);
    c.scene.radial_flow = s.value("radial_flow", c.scene.radial_flow);
    c.scene.id_switch_prob = s.value("id_switch_prob", c.scene.id_switch_prob);
  }
  if (j.contains("graph")) {
    const json& g = j["graph"];
    reject_unknown_keys(g, {"spatial_radius", "temporal_links"}, "graph");
    c.graph.spatial_radius = g.value("spatial_radius", c.graph.spatial_radius);
    const std::string links = g.value("temporal_links", "consecutive");
    if (links == "consecutive")
      c.graph.temporal_links = TemporalLinks::kConsecutive;
    else if (links == "all_pairs")
      c.graph.temporal_links = TemporalLinks::kAllPairs;
    else
      throw std::runtime_error("config: unknown temporal_links \"" + links +
                               "\"");
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    reject_unknown_keys(m,
                        {"layers", "heads", "dim", "beta_dim", "pool_ratio",
                         "input_scale", "input_scale_z", "normalize_node_embeddings",
                         "normalize_graph_embedding"},
                        "model");
    c.model.layers = m.value("layers", c.model.layers);
    c.model.heads = m.value("heads", c.model.heads);
    c.model.dim = m.value("dim", c.model.dim);
    c.model.beta_dim = m.value("beta_dim", c.model.beta_dim);
    c.model.pool_ratio = m.value("pool_ratio", c.model.pool_ratio);
    c.model.input_scale = m.value("input_scale", c.model.input_scale);
    c.model.input_scale_z = m.value("input_scale_z", c.model.input_scale_z);
    c.model.normalize_node_embeddings = m.value(
        "normalize_node_embeddings", c.model.normalize_node_embeddings);
    c.model.normalize_graph_embedding = m.value(
        "normalize_graph_embedding", c.model.normalize_graph_embedding);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    reject_unknown_keys(l,
                        {"gamma", "delta_p", "delta_n", "graph_delta_p",
                         "graph_delta_n", "learning_rate", "epochs",
                         "batch_size", "node_pairing", "graph_anchor"},
                        "loss");
    c.loss.gamma = l.value("gamma", c.loss.gamma);
    c.loss.delta_p = l.value("delta_p", c.loss.delta_p);
    c.loss.delta_n = l.value("delta_n", c.loss.delta_n);
    c.loss.graph_delta_p = l.value("graph_delta_p", c.loss.graph_delta_p);
    c.loss.graph_delta_n = l.value("graph_delta_n", c.loss.graph_delta_n);
    c.loss.learning_rate = l.value("learning_rate", c.loss.learning_rate);
    c.loss.epochs = l.value("epochs", c.loss.epochs);
    c.loss.batch_size = l.value("batch_size", c.loss.batch_size);
    const std::string pairing = l.value("node_pairing", "matched");
    if (pairing == "matched")
      c.loss.pairing = LossConfig::NodePairing::kMatched;
    else if (pairing == "shared_sets")
      c.loss.pairing = LossConfig::NodePairing::kSharedSets;
    else
      throw std::runtime_error("config: unknown node_pairing \"" + pairing +
                               "\"");
    const std::string anchor = l.value("graph_anchor", "other");
    if (anchor == "other")
      c.loss.graph_anchor = LossConfig::GraphAnchor::kOtherGraph;
    else if (anchor == "own")
      c.loss.graph_anchor = LossConfig::GraphAnchor::kOwnGraph;
    else
      throw std::runtime_error("config: unknown graph_anchor \"" + anchor +
                               "\"");
  }
  if (j.contains("exchange")) {
    const json& e = j["exchange"];
    reject_unknown_keys(e, {"lambda", "tau", "bandwidth", "rounds", "baseline"},
                        "exchange");
    c.exchange.lambda = e.value("lambda", c.exchange.lambda);
    c.exchange.tau = e.value("tau", c.exchange.tau);
    if (e.contains("bandwidth"))
      c.exchange.bandwidth = e["bandwidth"].get<std::vector<int>>();
    c.exchange.rounds = e.value("rounds", c.exchange.rounds);
    c.exchange.baseline =
        baseline_from(e.value("baseline", std::string("full")));
  }
  c.scene.validate();
  c.model.validate();
  c.loss.validate();
  c.exchange.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  return from_json_string(read_text_file(path));
}

std::string ExperimentConfig::config_hash() const {
  return hash_hex(fnv1a64(to_json_string()));
}

void ExperimentConfig::apply_preset(const std::string& name) {
  const SceneConfig preset = SceneConfig::preset(name);
  scene.n_objects = preset.n_objects;
}

MetricsReport evaluate_scene(const ModelParameters& params,
                             const ScenePair& scene, const BuildOptions& graph,
                             const ExchangeSettings& settings,
                             std::uint64_t seed) {
  settings.validate();
  const SpatioTemporalGraph ego_graph = build_graph(
      std::span<const ObjectObservation>(scene.agents[0].observations), graph);
  const SpatioTemporalGraph collab_graph = build_graph(
      std::span<const ObjectObservation>(scene.agents[1].observations), graph);
  const SceneEmbedding ego = embed_scene(params, ego_graph);
  const SceneEmbedding collab = embed_scene(params, collab_graph);

  ExchangeOptions opts;
  opts.lambda = settings.lambda;
  opts.policy = settings.baseline;
  opts.seed = seed;
  const ExchangeTranscript transcript =
      run_exchange(ego, collab, settings.schedule(), opts);

  const std::vector<int> received_index = transcript.received_by_ego();
  std::vector<std::vector<double>> received;
  received.reserve(received_index.size());
  for (int idx : received_index)
    received.push_back(collab.m[static_cast<std::size_t>(idx)]);

  const CorrespondenceSet predicted =
      match(ego.m, received, received_index, settings.tau);
  return compute_metrics(predicted, transcript, scene.gt,
                         static_cast<int>(collab.m.size()));
}

std::vector<SceneEvalRow> evaluate_dataset(const ModelParameters& params,
                                           const Dataset& dataset,
                                           const BuildOptions& graph,
                                           const ExchangeSettings& settings,
                                           std::uint64_t seed) {
  std::vector<SceneEvalRow> rows;
  rows.reserve(dataset.scenes.size());
  for (const ScenePair& scene : dataset.scenes) {
    SceneEvalRow row;
    row.scene_id = scene.scene_id;
    row.metrics =
        evaluate_scene(params, scene, graph, settings,
                       mix_seed(seed, static_cast<std::uint64_t>(scene.scene_id)));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct Stats {
  double mean = 0.0;
  double stddev = 0.0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

MetricSummary summarize(const std::vector<SceneEvalRow>& rows) {
  MetricSummary s;
  s.n = static_cast<int>(rows.size());
  std::vector<double> precision, recall, f1, bis, sharing;
  for (const SceneEvalRow& r : rows) {
    precision.push_back(r.metrics.precision);
    recall.push_back(r.metrics.recall);
    f1.push_back(r.metrics.f1);
    bis.push_back(r.metrics.bis);
    sharing.push_back(r.metrics.sharing_recall);
  }
  const Stats p = stats_of(precision), rc = stats_of(recall),
              f = stats_of(f1), b = stats_of(bis), sh = stats_of(sharing);
  s.precision_mean = p.mean;
  s.precision_std = p.stddev;
  s.recall_mean = rc.mean;
  s.recall_std = rc.stddev;
  s.f1_mean = f.mean;
  s.f1_std = f.stddev;
  s.bis_mean = b.mean;
  s.bis_std = b.stddev;
  s.sharing_recall_mean = sh.mean;
  s.sharing_recall_std = sh.stddev;
  return s;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
}

void run_gen(const ExperimentConfig& cfg, const std::string& out_path) {
  SceneConfig scene_cfg = cfg.scene;
  scene_cfg.seed = mix_seed(cfg.seed, 3001);
  const Dataset dataset = generate_dataset(scene_cfg, cfg.scenes);
  save_dataset(dataset, out_path);
}

void run_train(const ExperimentConfig& cfg, const TrainPaths& paths) {
  const Dataset dataset = load_dataset(paths.data);
  const std::vector<TrainScene> scenes = make_train_scenes(dataset, cfg.graph);
  LossConfig loss = cfg.loss;
  loss.seed = mix_seed(cfg.seed, 3002);
  const TrainResult result = train(scenes, loss, cfg.model);
  result.params.save_file(paths.model_out);
  if (!paths.curve_out.empty()) {
    std::ostringstream csv;
    csv << "# config_hash=" << cfg.config_hash() << "\n";
    csv << "epoch,train_loss,val_loss\n";
    for (const EpochStats& e : result.curve)
      csv << e.epoch << "," << fmt(e.train_loss) << "," << fmt(e.val_loss)
          << "\n";
    write_text_file(paths.curve_out, csv.str());
  }
}

namespace {

double schedule_mean_k(const ExchangeSettings& settings) {
  const BandwidthSchedule s = settings.schedule();
  double sum = 0.0;
  for (int k : s.k_per_round) sum += k;
  return sum / static_cast<double>(s.k_per_round.size());
}

}  // namespace

void run_eval(const ExperimentConfig& cfg, const std::string& model_path,
              const std::string& data_path, const std::string& out_csv) {
  const ModelParameters params = ModelParameters::load_file(model_path);
  const Dataset dataset = load_dataset(data_path);
  const std::vector<SceneEvalRow> rows =
      evaluate_dataset(params, dataset, cfg.graph, cfg.exchange,
                       mix_seed(cfg.seed, 3003));

  std::ostringstream csv;
  csv << "# config_hash=" << cfg.config_hash() << "\n";
  csv << "scene_id,lambda,tau,K,R,precision,recall,f1,bis,sharing_recall,"
         "bytes\n";
  for (const SceneEvalRow& r : rows)
    csv << r.scene_id << "," << fmt(cfg.exchange.lambda) << ","
        << fmt(cfg.exchange.tau) << "," << fmt(schedule_mean_k(cfg.exchange))
        << "," << cfg.exchange.rounds << "," << fmt(r.metrics.precision) << ","
        << fmt(r.metrics.recall) << "," << fmt(r.metrics.f1) << ","
        << fmt(r.metrics.bis) << "," << fmt(r.metrics.sharing_recall) << ","
        << r.metrics.bytes << "\n";
  write_text_file(out_csv, csv.str());
}

void run_sweep(const ExperimentConfig& cfg, const std::string& model_path,
               const std::string& data_path, const std::vector<int>& k_values,
               const std::vector<int>& r_values, const std::string& out_csv) {
  if (k_values.empty() || r_values.empty())
    throw std::invalid_argument("run_sweep: empty K or R range");
  const ModelParameters params = ModelParameters::load_file(model_path);
  const Dataset dataset = load_dataset(data_path);

  std::ostringstream csv;
  csv << "# config_hash=" << cfg.config_hash() << "\n";
  csv << "K,R,scenes,precision_mean,precision_std,recall_mean,recall_std,"
         "f1_mean,f1_std,bis_mean,bis_std,sharing_recall_mean,"
         "sharing_recall_std\n";
  for (int r : r_values) {
    for (int k : k_values) {
      ExchangeSettings settings = cfg.exchange;
      settings.bandwidth = {k};
      settings.rounds = r;
      const std::vector<SceneEvalRow> rows = evaluate_dataset(
          params, dataset, cfg.graph, settings,
          mix_seed(cfg.seed, 3004ull + static_cast<std::uint64_t>(k * 1000 + r)));
      const MetricSummary s = summarize(rows);
      csv << k << "," << r << "," << s.n << "," << fmt(s.precision_mean) << ","
          << fmt(s.precision_std) << "," << fmt(s.recall_mean) << ","
          << fmt(s.recall_std) << "," << fmt(s.f1_mean) << ","
          << fmt(s.f1_std) << "," << fmt(s.bis_mean) << "," << fmt(s.bis_std)
          << "," << fmt(s.sharing_recall_mean) << ","
          << fmt(s.sharing_recall_std) << "\n";
    }
  }
  write_text_file(out_csv, csv.str());
}

void run_ablate_seqlen(const ExperimentConfig& cfg, const AblateOptions& opts,
                       const std::string& out_csv) {
  if (opts.t_values.empty())
    throw std::invalid_argument("run_ablate_seqlen: empty T range");
  std::ostringstream csv;
  csv << "# config_hash=" << cfg.config_hash() << "\n";
  csv << "T,scenes,precision_mean,recall_mean,f1_mean,bis_mean,"
         "sharing_recall_mean\n";
  for (int t_len : opts.t_values) {
    SceneConfig scene_cfg = cfg.scene;
    scene_cfg.sequence_length = t_len;
    scene_cfg.seed = mix_seed(cfg.seed, 3005ull + static_cast<std::uint64_t>(t_len));
    const Dataset train_set = generate_dataset(scene_cfg, opts.train_scenes);
    scene_cfg.seed = mix_seed(scene_cfg.seed, 3006);
    const Dataset eval_set = generate_dataset(scene_cfg, opts.eval_scenes);

    LossConfig loss = cfg.loss;
    loss.seed = mix_seed(cfg.seed, 3002);
    const TrainResult trained =
        train(make_train_scenes(train_set, cfg.graph), loss, cfg.model);
    const std::vector<SceneEvalRow> rows =
        evaluate_dataset(trained.params, eval_set, cfg.graph, cfg.exchange,
                         mix_seed(cfg.seed, 3003));
    const MetricSummary s = summarize(rows);
    csv << t_len << "," << s.n << "," << fmt(s.precision_mean) << ","
        << fmt(s.recall_mean) << "," << fmt(s.f1_mean) << ","
        << fmt(s.bis_mean) << "," << fmt(s.sharing_recall_mean) << "\n";
  }
  write_text_file(out_csv, csv.str());
}

}  // namespace coid
