#include "coid/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace coid {

using nlohmann::json;

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("ModelConfig: layers must be >= 1");
  if (heads < 1) throw std::invalid_argument("ModelConfig: heads must be >= 1");
  if (dim < 1 || beta_dim < 1)
    throw std::invalid_argument("ModelConfig: dims must be >= 1");
  if (dim % heads != 0)
    throw std::invalid_argument("ModelConfig: dim must be divisible by heads");
  if (!(pool_ratio > 0.0 && pool_ratio <= 1.0))
    throw std::invalid_argument("ModelConfig: pool_ratio must be in (0, 1]");
  if (!(input_scale > 0.0) || !(input_scale_z > 0.0))
    throw std::invalid_argument("ModelConfig: input scales must be > 0");
}

void ModelParameters::add(std::string name, Tensor value) {
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

ModelParameters ModelParameters::empty_for(const ModelConfig& cfg) {
  cfg.validate();
  ModelParameters p(cfg);
  const std::size_t d = static_cast<std::size_t>(cfg.dim);
  const std::size_t db = static_cast<std::size_t>(cfg.beta_dim);

  p.add("gat.W_v", Tensor::zeros({d, 3}));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::size_t dh = static_cast<std::size_t>(cfg.head_width(l));
    for (int h = 0; h < cfg.heads; ++h) {
      for (const char* type : {"spat", "temp"}) {
        const std::string base = "gat.layer" + std::to_string(l) + ".head" +
                                 std::to_string(h) + "." + type;
        p.add(base + ".W", Tensor::zeros({dh, d}));
        p.add(base + ".W_e", Tensor::zeros({dh, 1}));
        p.add(base + ".a", Tensor::zeros({3 * dh}));
      }
    }
  }
  p.add("beta.W_b", Tensor::zeros({db, d}));
  p.add("beta.b", Tensor::zeros({db}));
  p.add("beta.q", Tensor::zeros({db}));
  for (const char* type : {"spat", "temp"}) {
    const std::string base = std::string("pool.") + type;
    p.add(base + ".W_p", Tensor::zeros({db, 2 * d}));
    p.add(base + ".q_p", Tensor::zeros({db}));
    p.add(base + ".W1", Tensor::zeros({d, d}));
    p.add(base + ".W2", Tensor::zeros({d, d}));
    p.add(base + ".W3", Tensor::zeros({d, d}));
    p.add(base + ".w_f", Tensor::zeros({d}));
    p.add(base + ".W_m", Tensor::zeros({d, d}));
  }
  return p;
}

ModelParameters ModelParameters::init(const ModelConfig& cfg,
                                      std::uint64_t seed) {
  ModelParameters p = empty_for(cfg);
  std::mt19937_64 rng(seed);
  for (Entry& e : p.entries_) {
    const std::size_t fan_in =
        e.value.is_matrix() ? e.value.cols() : e.value.size();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t i = 0; i < e.value.size(); ++i) e.value[i] = dist(rng);
  }
  return p;
}

std::size_t ModelParameters::coord_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.value.size();
  return n;
}

Tensor& ModelParameters::find(std::string_view name) {
  return entries_[index_of(name)].value;
}

const Tensor& ModelParameters::find(std::string_view name) const {
  return entries_[index_of(name)].value;
}

std::size_t ModelParameters::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end())
    throw std::invalid_argument("ModelParameters: unknown parameter " +
                                std::string(name));
  return it->second;
}

bool ModelParameters::all_finite() const {
  for (const Entry& e : entries_)
    if (!e.value.all_finite()) return false;
  return true;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"layers", c.layers},
              {"heads", c.heads},
              {"dim", c.dim},
              {"beta_dim", c.beta_dim},
              {"pool_ratio", c.pool_ratio},
              {"input_scale", c.input_scale},
              {"input_scale_z", c.input_scale_z},
              {"normalize_node_embeddings", c.normalize_node_embeddings},
              {"normalize_graph_embedding", c.normalize_graph_embedding}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.dim = j.at("dim").get<int>();
  c.beta_dim = j.at("beta_dim").get<int>();
  c.pool_ratio = j.at("pool_ratio").get<double>();
  c.input_scale = j.at("input_scale").get<double>();
  c.input_scale_z = j.at("input_scale_z").get<double>();
  c.normalize_node_embeddings = j.at("normalize_node_embeddings").get<bool>();
  c.normalize_graph_embedding = j.at("normalize_graph_embedding").get<bool>();
  c.validate();
  return c;
}

}  // namespace

std::string ModelParameters::to_json_string() const {
  json doc;
  doc["format"] = "coid-model";
  doc["version"] = 1;
  doc["config"] = config_to_json(cfg_);
  doc["config_hash"] = hash_hex(fnv1a64(doc["config"].dump()));
  json params = json::object();
  for (const Entry& e : entries_) {
    params[e.name] = json{{"shape", e.value.shape()},
                          {"values", e.value.data()}};
  }
  doc["params"] = std::move(params);
  return doc.dump(2) + "\n";
}

ModelParameters ModelParameters::from_json_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("model JSON parse error: ") +
                             e.what());
  }
  if (doc.value("format", "") != "coid-model")
    throw std::runtime_error("model JSON: missing coid-model format marker");
  ModelParameters p = empty_for(config_from_json(doc.at("config")));
  const json& params = doc.at("params");
  for (Entry& e : p.entries_) {
    if (!params.contains(e.name))
      throw std::runtime_error("model JSON: missing parameter " + e.name);
    const json& pj = params.at(e.name);
    auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    auto values = pj.at("values").get<std::vector<double>>();
    Tensor t(std::move(shape), std::move(values));
    if (!t.same_shape(e.value))
      throw std::runtime_error("model JSON: shape mismatch for " + e.name);
    e.value = std::move(t);
  }
  if (params.size() != p.entries_.size())
    throw std::runtime_error("model JSON: unexpected extra parameters");
  if (!p.all_finite())
    throw std::runtime_error("model JSON: non-finite parameter values");
  return p;
}

void ModelParameters::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write model file: " + path);
  out << to_json_string();
}

ModelParameters ModelParameters::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_string(ss.str());
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

}  // namespace coid
