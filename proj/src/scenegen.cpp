#include "coid/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace coid {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void SceneConfig::validate() const {
  if (n_objects < 1)
    throw std::invalid_argument("SceneConfig: n_objects must be >= 1");
  if (sequence_length < 1)
    throw std::invalid_argument("SceneConfig: sequence_length must be >= 1");
  if (!(fov_radius > 0.0))
    throw std::invalid_argument("SceneConfig: fov_radius must be > 0");
  if (!(p_miss >= 0.0 && p_miss < 1.0))
    throw std::invalid_argument("SceneConfig: p_miss must be in [0, 1)");
  if (!(noise_sigma >= 0.0))
    throw std::invalid_argument("SceneConfig: noise_sigma must be >= 0");
  if (!(speed_min >= 0.0 && speed_max >= speed_min))
    throw std::invalid_argument("SceneConfig: bad speed range");
  if (!(elevation_max >= elevation_min))
    throw std::invalid_argument("SceneConfig: bad elevation range");
  if (!(arena_half_width > 0.0))
    throw std::invalid_argument("SceneConfig: arena_half_width must be > 0");
  if (!(id_switch_prob >= 0.0 && id_switch_prob < 1.0))
    throw std::invalid_argument("SceneConfig: id_switch_prob must be in [0, 1)");
  if (!(radial_flow >= 0.0 && radial_flow <= 1.0))
    throw std::invalid_argument("SceneConfig: radial_flow must be in [0, 1]");
}

SceneConfig SceneConfig::preset(const std::string& name) {
  SceneConfig cfg;
  if (name == "normal") {
    cfg.n_objects = 10;
  } else if (name == "crowded") {
    cfg.n_objects = 24;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return cfg;
}

bool operator==(const AgentPose& a, const AgentPose& b) {
  return a.position == b.position && a.yaw == b.yaw;
}

bool operator==(const ObjectObservation& a, const ObjectObservation& b) {
  return a.track_id == b.track_id && a.gt_id == b.gt_id && a.t == b.t &&
         a.pos == b.pos;
}

bool operator==(const AgentObservations& a, const AgentObservations& b) {
  return a.agent_id == b.agent_id && a.pose == b.pose &&
         a.observations == b.observations;
}

bool ScenePair::operator==(const ScenePair& o) const {
  return scene_id == o.scene_id && agents[0] == o.agents[0] &&
         agents[1] == o.agents[1] && gt.pairs == o.gt.pairs;
}

namespace {

std::array<double, 3> to_local(const AgentPose& pose,
                               const std::array<double, 3>& world) {
  const double dx = world[0] - pose.position[0];
  const double dy = world[1] - pose.position[1];
  const double dz = world[2] - pose.position[2];
  const double c = std::cos(-pose.yaw);
  const double s = std::sin(-pose.yaw);
  return {c * dx - s * dy, s * dx + c * dy, dz};
}

double range_to(const AgentPose& pose, const std::array<double, 3>& world) {
  const double dx = world[0] - pose.position[0];
  const double dy = world[1] - pose.position[1];
  const double dz = world[2] - pose.position[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

struct AttemptResult {
  ScenePair scene;
  bool has_covisible = false;
};

AttemptResult attempt_scene(const SceneConfig& cfg, std::uint64_t seed) {
  const int n = cfg.n_objects;
  const int t_len = cfg.sequence_length;

  // world trajectories: constant speed, jittered heading
  std::mt19937_64 world_rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<std::array<double, 3>>> traj(
      static_cast<std::size_t>(n));
  for (int o = 0; o < n; ++o) {
    double x = (2.0 * unit(world_rng) - 1.0) * cfg.arena_half_width;
    double y = (2.0 * unit(world_rng) - 1.0) * cfg.arena_half_width;
    // persistent elevation of the detection centroid; viewpoint-invariant
    const double z =
        cfg.elevation_min + unit(world_rng) * (cfg.elevation_max - cfg.elevation_min);
    const double speed =
        cfg.speed_min + unit(world_rng) * (cfg.speed_max - cfg.speed_min);
    // blend a dispersal flow (outward from the intersection center) with a
    // random heading; dispersal makes the scene scale carry the timestep
    const double outward = std::atan2(y, x);
    const double random_heading = unit(world_rng) * 2.0 * M_PI;
    double heading = outward;
    if (unit(world_rng) >= cfg.radial_flow) heading = random_heading;
    auto& points = traj[static_cast<std::size_t>(o)];
    points.reserve(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
      points.push_back({x, y, z});
      heading += cfg.heading_jitter * gauss(world_rng);
      x += speed * std::cos(heading);
      y += speed * std::sin(heading);
    }
  }

  ScenePair scene;
  const AgentPose poses[2] = {cfg.agent_a, cfg.agent_b};
  // detected[a][o][t]
  std::vector<std::vector<std::vector<bool>>> detected(
      2, std::vector<std::vector<bool>>(
             static_cast<std::size_t>(n),
             std::vector<bool>(static_cast<std::size_t>(t_len), false)));

  for (int a = 0; a < 2; ++a) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(1 + a)));
    AgentObservations& agent = scene.agents[static_cast<std::size_t>(a)];
    agent.agent_id = a;
    agent.pose = poses[a];
    std::map<int, int> track_of_object;  // gt id -> current track id
    int next_track = 0;
    for (int t = 0; t < t_len; ++t) {
      for (int o = 0; o < n; ++o) {
        const auto& world = traj[static_cast<std::size_t>(o)][
            static_cast<std::size_t>(t)];
        if (range_to(poses[a], world) > cfg.fov_radius) continue;
        if (unit(rng) < cfg.p_miss) continue;
        auto it = track_of_object.find(o);
        if (it == track_of_object.end()) {
          it = track_of_object.emplace(o, next_track++).first;
        } else if (cfg.id_switch_prob > 0.0 &&
                   unit(rng) < cfg.id_switch_prob) {
          it->second = next_track++;
        }
        std::array<double, 3> local = to_local(poses[a], world);
        for (double& v : local) v += cfg.noise_sigma * gauss(rng);
        agent.observations.push_back({it->second, o, t, local});
        detected[static_cast<std::size_t>(a)][static_cast<std::size_t>(o)][
            static_cast<std::size_t>(t)] = true;
      }
    }
    // store in the node order build_graph will use
    std::sort(agent.observations.begin(), agent.observations.end(),
              [](const ObjectObservation& x, const ObjectObservation& y) {
                if (x.t != y.t) return x.t < y.t;
                return x.track_id < y.track_id;
              });
  }

  // node index per (gt id, t) per agent
  std::map<std::pair<int, int>, int> index_a, index_b;
  for (std::size_t i = 0; i < scene.agents[0].observations.size(); ++i) {
    const auto& obs = scene.agents[0].observations[i];
    index_a[{obs.gt_id, obs.t}] = static_cast<int>(i);
  }
  for (std::size_t i = 0; i < scene.agents[1].observations.size(); ++i) {
    const auto& obs = scene.agents[1].observations[i];
    index_b[{obs.gt_id, obs.t}] = static_cast<int>(i);
  }
  for (int t = 0; t < t_len; ++t)
    for (int o = 0; o < n; ++o)
      if (detected[0][static_cast<std::size_t>(o)][static_cast<std::size_t>(t)] &&
          detected[1][static_cast<std::size_t>(o)][static_cast<std::size_t>(t)])
        scene.gt.pairs.emplace_back(index_a.at({o, t}), index_b.at({o, t}));
  std::sort(scene.gt.pairs.begin(), scene.gt.pairs.end());

  AttemptResult result;
  result.has_covisible = !scene.gt.pairs.empty();
  result.scene = std::move(scene);
  return result;
}

}  // namespace

ScenePair generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    AttemptResult r = attempt_scene(cfg, mix_seed(cfg.seed, attempt << 8));
    if (r.has_covisible) return std::move(r.scene);
  }
  throw std::runtime_error(
      "generate_scene: no covisible objects after 100 attempts; widen the "
      "fov or move the agents closer");
}

Dataset generate_dataset(const SceneConfig& cfg, int count) {
  if (count < 0) throw std::invalid_argument("generate_dataset: count < 0");
  Dataset d;
  d.config = cfg;
  d.scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SceneConfig scene_cfg = cfg;
    scene_cfg.seed = mix_seed(cfg.seed, 1000ull + static_cast<std::uint64_t>(i));
    ScenePair scene = generate_scene(scene_cfg);
    scene.scene_id = i;
    d.scenes.push_back(std::move(scene));
  }
  return d;
}

namespace {

json config_to_json(const SceneConfig& c) {
  return json{{"n_objects", c.n_objects},
              {"arena_half_width", c.arena_half_width},
              {"sequence_length", c.sequence_length},
              {"fov_radius", c.fov_radius},
              {"agent_a", {c.agent_a.position[0], c.agent_a.position[1],
                           c.agent_a.position[2], c.agent_a.yaw}},
              {"agent_b", {c.agent_b.position[0], c.agent_b.position[1],
                           c.agent_b.position[2], c.agent_b.yaw}},
              {"noise_sigma", c.noise_sigma},
              {"p_miss", c.p_miss},
              {"speed_min", c.speed_min},
              {"speed_max", c.speed_max},
              {"elevation_min", c.elevation_min},
              {"elevation_max", c.elevation_max},
              {"heading_jitter", c.heading_jitter},
              {"radial_flow", c.radial_flow},
              {"id_switch_prob", c.id_switch_prob},
              {"seed", c.seed}};
}

AgentPose pose_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4)
    throw std::runtime_error("dataset JSON: pose must be [x, y, z, yaw]");
  return {{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()},
          j[3].get<double>()};
}

SceneConfig config_from_json(const json& j) {
  SceneConfig c;
  c.n_objects = j.at("n_objects").get<int>();
  c.arena_half_width = j.at("arena_half_width").get<double>();
  c.sequence_length = j.at("sequence_length").get<int>();
  c.fov_radius = j.at("fov_radius").get<double>();
  c.agent_a = pose_from_json(j.at("agent_a"));
  c.agent_b = pose_from_json(j.at("agent_b"));
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.p_miss = j.at("p_miss").get<double>();
  c.speed_min = j.at("speed_min").get<double>();
  c.speed_max = j.at("speed_max").get<double>();
  c.elevation_min = j.at("elevation_min").get<double>();
  c.elevation_max = j.at("elevation_max").get<double>();
  c.heading_jitter = j.at("heading_jitter").get<double>();
  c.radial_flow = j.at("radial_flow").get<double>();
  c.id_switch_prob = j.at("id_switch_prob").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

}  // namespace

std::string dataset_to_json_string(const Dataset& dataset) {
  json scenes = json::array();
  for (const ScenePair& s : dataset.scenes) {
    json agents = json::array();
    for (const AgentObservations& a : s.agents) {
      json obs = json::array();
      for (const ObjectObservation& o : a.observations)
        obs.push_back(json{{"t", o.t},
                           {"track_id", o.track_id},
                           {"gt_id", o.gt_id},
                           {"pos", {o.pos[0], o.pos[1], o.pos[2]}}});
      agents.push_back(json{{"agent_id", a.agent_id},
                            {"pose",
                             {a.pose.position[0], a.pose.position[1],
                              a.pose.position[2], a.pose.yaw}},
                            {"observations", std::move(obs)}});
    }
    json pairs = json::array();
    for (const auto& [e, c] : s.gt.pairs) pairs.push_back(json::array({e, c}));
    scenes.push_back(json{{"scene_id", s.scene_id},
                          {"agents", std::move(agents)},
                          {"gt_pairs", std::move(pairs)}});
  }
  json doc{{"version", 1},
           {"config", config_to_json(dataset.config)},
           {"scenes", std::move(scenes)}};
  return doc.dump(2) + "\n";
}

namespace {

ObjectObservation observation_from_json(const json& j, const char* where) {
  ObjectObservation o;
  o.t = j.at("t").get<int>();
  o.track_id = j.at("track_id").get<int>();
  o.gt_id = j.at("gt_id").get<int>();
  const json& pos = j.at("pos");
  if (!pos.is_array() || pos.size() != 3)
    throw std::runtime_error(std::string("dataset JSON: bad pos in ") + where);
  o.pos = {pos[0].get<double>(), pos[1].get<double>(), pos[2].get<double>()};
  if (o.t < 0)
    throw std::runtime_error(std::string("dataset JSON: negative t in ") +
                             where);
  return o;
}

}  // namespace

Dataset dataset_from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("dataset JSON parse error: ") +
                             e.what());
  }
  if (doc.value("version", 0) != 1)
    throw std::runtime_error("dataset JSON: unsupported version");
  Dataset d;
  d.config = config_from_json(doc.at("config"));
  for (const json& sj : doc.at("scenes")) {
    ScenePair s;
    s.scene_id = sj.at("scene_id").get<int>();
    const json& agents = sj.at("agents");
    if (!agents.is_array() || agents.size() != 2)
      throw std::runtime_error("dataset JSON: scene " +
                               std::to_string(s.scene_id) +
                               " must have exactly 2 agents");
    const std::string where = "scene " + std::to_string(s.scene_id);
    for (std::size_t a = 0; a < 2; ++a) {
      AgentObservations& agent = s.agents[a];
      agent.agent_id = agents[a].at("agent_id").get<int>();
      agent.pose = pose_from_json(agents[a].at("pose"));
      for (const json& oj : agents[a].at("observations"))
        agent.observations.push_back(
            observation_from_json(oj, where.c_str()));
    }
    // gt indices reference the (t, track_id) node ordering of build_graph
    auto sorted_view = [](const std::vector<ObjectObservation>& obs) {
      std::vector<ObjectObservation> v = obs;
      std::sort(v.begin(), v.end(),
                [](const ObjectObservation& x, const ObjectObservation& y) {
                  if (x.t != y.t) return x.t < y.t;
                  return x.track_id < y.track_id;
                });
      return v;
    };
    const std::vector<ObjectObservation> nodes_a =
        sorted_view(s.agents[0].observations);
    const std::vector<ObjectObservation> nodes_b =
        sorted_view(s.agents[1].observations);
    for (const json& pj : sj.at("gt_pairs")) {
      if (!pj.is_array() || pj.size() != 2)
        throw std::runtime_error("dataset JSON: bad gt pair in " + where);
      const int e = pj[0].get<int>();
      const int c = pj[1].get<int>();
      if (e < 0 || e >= static_cast<int>(nodes_a.size()) || c < 0 ||
          c >= static_cast<int>(nodes_b.size()))
        throw std::runtime_error("dataset JSON: gt pair (" +
                                 std::to_string(e) + ", " + std::to_string(c) +
                                 ") references a missing node in " + where);
      const ObjectObservation& oe = nodes_a[static_cast<std::size_t>(e)];
      const ObjectObservation& oc = nodes_b[static_cast<std::size_t>(c)];
      if (oe.gt_id != oc.gt_id || oe.t != oc.t)
        throw std::runtime_error(
            "dataset JSON: gt pair (" + std::to_string(e) + ", " +
            std::to_string(c) + ") links different objects in " + where);
      s.gt.pairs.emplace_back(e, c);
    }
    d.scenes.push_back(std::move(s));
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out << dataset_to_json_string(dataset);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read dataset file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return dataset_from_json_string(ss.str());
}

}  // namespace coid
