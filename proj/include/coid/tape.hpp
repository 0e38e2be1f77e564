#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "coid/tensor.hpp"

namespace coid {

/// Reverse-mode autodiff over an append-only record of primitive operations.
///
/// Every operation appends one node holding its inputs and forward value.
/// backward() replays the record in reverse and accumulates gradients;
/// replay_forward() recomputes all values from the current leaf contents,
/// which is what the finite-difference checker perturbs.
class Tape {
 public:
  struct Val {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records an input value. Leaves are the only mutable nodes.
  Val leaf(Tensor value);

  // -- primitives ----------------------------------------------------------

  Val matvec(Val w, Val x);            // [r x c] . [c] -> [r]
  Val add(Val a, Val b);               // elementwise, same shape
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);               // Hadamard
  Val scale(Val s, Val x);             // scalar s times tensor x
  Val const_mul(double c, Val x);
  Val const_add(double c, Val x);
  Val relu(Val x);                     // subgradient at 0 is 0
  Val tanh(Val x);
  Val exp(Val x);
  Val log(Val x);
  Val softmax(Val x);                  // vector -> vector, shift-stable
  Val l2_norm(Val x);                  // -> scalar
  Val neg_l2_norm(Val x);              // -> scalar
  Val normalize(Val x);                // x / |x|; zero input stays zero
  Val concat(std::span<const Val> parts);
  Val dot(Val a, Val b);               // -> scalar
  Val sum(Val x);                      // -> scalar
  Val pick(Val x, std::size_t index);  // -> scalar x[index]
  /// sum_i weights[i] * items[i]; weights are scalars, items share a shape.
  Val weighted_sum(std::span<const Val> items, std::span<const Val> weights);
  /// mean of same-shape tensors
  Val mean(std::span<const Val> items);

  // -- access ---------------------------------------------------------------

  const Tensor& value(Val v) const { return nodes_[check(v)].value; }
  void set_leaf(Val v, std::size_t coord, double x);
  double leaf_coord(Val v, std::size_t coord) const;

  /// Reverse pass from a scalar loss. Rejects non-scalar losses. Gradients of
  /// values not on any path to the loss are zero.
  void backward(Val loss);

  /// Gradient computed by the last backward(); zeros if the value was unused.
  Tensor grad(Val v) const;

  /// Recomputes every non-leaf value in recording order from current leaves.
  void replay_forward();

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatVec,
    kAdd,
    kSub,
    kMul,
    kScale,
    kConstMul,
    kConstAdd,
    kRelu,
    kTanh,
    kExp,
    kLog,
    kSoftmax,
    kL2Norm,
    kNegL2Norm,
    kNormalize,
    kConcat,
    kDot,
    kSum,
    kPick,
    kWeightedSum,
  };

  struct Node {
    Op op = Op::kLeaf;
    std::array<std::int32_t, 2> in{-1, -1};
    std::int32_t extra_begin = 0;  // span into extra_ids_ for n-ary ops
    std::int32_t extra_count = 0;
    double c = 0.0;       // constant operand
    std::int32_t aux = 0; // pick index / weighted_sum item count
    Tensor value;
  };

  std::int32_t check(Val v) const;
  const Tensor& in_value(const Node& n, int slot) const {
    return nodes_[n.in[slot]].value;
  }
  Val push(Node n);
  void eval(Node& n) const;
  Tensor& grad_slot(std::int32_t id, const Tensor& like);

  std::vector<Node> nodes_;
  std::vector<std::int32_t> extra_ids_;
  std::vector<Tensor> grads_;
};

/// W . x (+ bias). Shapes must conform: W [out x in], x [in], bias [out].
Tape::Val linear_map(Tape& t, Tape::Val w, Tape::Val x,
                     std::optional<Tape::Val> bias = std::nullopt);

/// |a - b|_2 as a scalar value.
inline Tape::Val distance(Tape& t, Tape::Val a, Tape::Val b) {
  return t.l2_norm(t.sub(a, b));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  // probe points where the function came back non-finite, per coordinate
  std::vector<std::pair<std::size_t, std::size_t>> non_finite;
};

/// Compares analytic gradients of a scalar function against central finite
/// differences. `build` records the function once; probes then perturb the
/// parameter leaves in place and replay the record.
/// Relative error per coordinate: |analytic - central| / max(1, |analytic|).
GradCheckResult grad_check(
    const std::function<Tape::Val(Tape&, const std::vector<Tape::Val>&)>& build,
    std::vector<Tensor> theta, double step);

}  // namespace coid
