#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coid/tensor.hpp"

namespace coid {

/// Network dimensions and the switchable conventions. `dim` must be divisible
/// by `heads`; intermediate attention layers concatenate heads of width
/// dim/heads, the final layer averages full-width heads.
struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int dim = 32;
  int beta_dim = 32;
  double pool_ratio = 0.5;
  double input_scale = 0.05;    // meters-to-feature scaling of x, y and edges
  double input_scale_z = 0.5;   // elevation channel scaling (smaller spread)
  bool normalize_node_embeddings = true;
  bool normalize_graph_embedding = true;

  void validate() const;
  /// Head output width of one attention layer (0-based index).
  int head_width(int layer) const {
    return layer == layers - 1 ? dim : dim / heads;
  }
};

/// All learnable tensors of the attention network, the type-weight head and
/// the pooling stage, in a fixed creation order so that initialization,
/// optimizer state and gradient extraction all line up.
class ModelParameters {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  ModelParameters() = default;

  /// Creates all tensors for `cfg`, each filled uniformly from
  /// [-1/sqrt(fan_in), +1/sqrt(fan_in)] with the given seed.
  static ModelParameters init(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  std::size_t count() const { return entries_.size(); }
  std::size_t coord_count() const;
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  Tensor& find(std::string_view name);
  const Tensor& find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  bool all_finite() const;

  /// JSON document with a header (dims + config hash) and one entry per
  /// parameter mapping name to shape + flat values.
  std::string to_json_string() const;
  static ModelParameters from_json_string(const std::string& text);
  void save_file(const std::string& path) const;
  static ModelParameters load_file(const std::string& path);

 private:
  ModelParameters(ModelConfig cfg) : cfg_(cfg) {}
  void add(std::string name, Tensor value);
  static ModelParameters empty_for(const ModelConfig& cfg);

  ModelConfig cfg_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::uint64_t fnv1a64(std::string_view text);
std::string hash_hex(std::uint64_t h);

}  // namespace coid
