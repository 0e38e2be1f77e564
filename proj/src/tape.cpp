#include "coid/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace coid {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_string(a) + " vs " + shape_string(b));
}

void require_nonempty(const Tensor& a, const char* op) {
  if (a.empty())
    throw std::invalid_argument(std::string(op) + ": empty input rejected");
}

void require_scalar(const Tensor& a, const char* op) {
  if (!a.is_scalar())
    throw std::invalid_argument(std::string(op) + ": expected scalar, got " +
                                shape_string(a));
}

}  // namespace

std::int32_t Tape::check(Val v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw std::invalid_argument("Tape: invalid value handle");
  return v.id;
}

Tape::Val Tape::push(Node n) {
  eval(n);
  nodes_.push_back(std::move(n));
  return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tape::Val Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::set_leaf(Val v, std::size_t coord, double x) {
  Node& n = nodes_[check(v)];
  if (n.op != Op::kLeaf) throw std::invalid_argument("set_leaf: not a leaf");
  n.value[coord] = x;
}

double Tape::leaf_coord(Val v, std::size_t coord) const {
  return nodes_[check(v)].value[coord];
}

Tape::Val Tape::matvec(Val w, Val x) {
  const Tensor& wt = value(w);
  const Tensor& xt = value(x);
  if (!wt.is_matrix())
    throw std::invalid_argument("matvec: W must be a matrix, got " +
                                shape_string(wt));
  if (!xt.is_vector() || wt.cols() != xt.size())
    throw std::invalid_argument("matvec: shape mismatch " + shape_string(wt) +
                                " . " + shape_string(xt));
  Node n;
  n.op = Op::kMatVec;
  n.in = {check(w), check(x)};
  return push(std::move(n));
}

Tape::Val Tape::add(Val a, Val b) {
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::kAdd;
  n.in = {check(a), check(b)};
  return push(std::move(n));
}

Tape::Val Tape::sub(Val a, Val b) {
  require_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::kSub;
  n.in = {check(a), check(b)};
  return push(std::move(n));
}

Tape::Val Tape::mul(Val a, Val b) {
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.op = Op::kMul;
  n.in = {check(a), check(b)};
  return push(std::move(n));
}

Tape::Val Tape::scale(Val s, Val x) {
  require_scalar(value(s), "scale");
  Node n;
  n.op = Op::kScale;
  n.in = {check(s), check(x)};
  return push(std::move(n));
}

Tape::Val Tape::const_mul(double c, Val x) {
  Node n;
  n.op = Op::kConstMul;
  n.in = {check(x), -1};
  n.c = c;
  return push(std::move(n));
}

Tape::Val Tape::const_add(double c, Val x) {
  Node n;
  n.op = Op::kConstAdd;
  n.in = {check(x), -1};
  n.c = c;
  return push(std::move(n));
}

Tape::Val Tape::relu(Val x) {
  require_nonempty(value(x), "relu");
  Node n;
  n.op = Op::kRelu;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::tanh(Val x) {
  require_nonempty(value(x), "tanh");
  Node n;
  n.op = Op::kTanh;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::exp(Val x) {
  require_nonempty(value(x), "exp");
  Node n;
  n.op = Op::kExp;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::log(Val x) {
  require_nonempty(value(x), "log");
  Node n;
  n.op = Op::kLog;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::softmax(Val x) {
  const Tensor& xt = value(x);
  require_nonempty(xt, "softmax");
  if (!xt.all_finite())
    throw std::invalid_argument("softmax: non-finite input rejected");
  Node n;
  n.op = Op::kSoftmax;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::l2_norm(Val x) {
  require_nonempty(value(x), "l2_norm");
  Node n;
  n.op = Op::kL2Norm;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::neg_l2_norm(Val x) {
  require_nonempty(value(x), "neg_l2_norm");
  Node n;
  n.op = Op::kNegL2Norm;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::normalize(Val x) {
  require_nonempty(value(x), "normalize");
  Node n;
  n.op = Op::kNormalize;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::concat(std::span<const Val> parts) {
  if (parts.size() < 2)
    throw std::invalid_argument("concat: needs at least 2 inputs");
  Node n;
  n.op = Op::kConcat;
  n.extra_begin = static_cast<std::int32_t>(extra_ids_.size());
  n.extra_count = static_cast<std::int32_t>(parts.size());
  for (Val p : parts) {
    if (!value(p).is_vector())
      throw std::invalid_argument("concat: vector inputs only");
    extra_ids_.push_back(check(p));
  }
  return push(std::move(n));
}

Tape::Val Tape::dot(Val a, Val b) {
  require_same_shape(value(a), value(b), "dot");
  require_nonempty(value(a), "dot");
  Node n;
  n.op = Op::kDot;
  n.in = {check(a), check(b)};
  return push(std::move(n));
}

Tape::Val Tape::sum(Val x) {
  require_nonempty(value(x), "sum");
  Node n;
  n.op = Op::kSum;
  n.in = {check(x), -1};
  return push(std::move(n));
}

Tape::Val Tape::pick(Val x, std::size_t index) {
  if (index >= value(x).size())
    throw std::invalid_argument("pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.in = {check(x), -1};
  n.aux = static_cast<std::int32_t>(index);
  return push(std::move(n));
}

Tape::Val Tape::weighted_sum(std::span<const Val> items,
                             std::span<const Val> weights) {
  if (items.empty() || items.size() != weights.size())
    throw std::invalid_argument("weighted_sum: items/weights mismatch");
  Node n;
  n.op = Op::kWeightedSum;
  n.aux = static_cast<std::int32_t>(items.size());
  n.extra_begin = static_cast<std::int32_t>(extra_ids_.size());
  n.extra_count = static_cast<std::int32_t>(items.size() + weights.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    require_same_shape(value(items[i]), value(items[0]), "weighted_sum");
    require_scalar(value(weights[i]), "weighted_sum weight");
  }
  for (Val v : items) extra_ids_.push_back(check(v));
  for (Val v : weights) extra_ids_.push_back(check(v));
  return push(std::move(n));
}

Tape::Val Tape::mean(std::span<const Val> items) {
  if (items.empty()) throw std::invalid_argument("mean: empty input rejected");
  Val acc = items[0];
  for (std::size_t i = 1; i < items.size(); ++i) acc = add(acc, items[i]);
  return const_mul(1.0 / static_cast<double>(items.size()), acc);
}

void Tape::eval(Node& n) const {
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatVec: {
      const Tensor& w = in_value(n, 0);
      const Tensor& x = in_value(n, 1);
      Tensor y = Tensor::zeros({w.rows()});
      for (std::size_t r = 0; r < w.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < w.cols(); ++c) acc += w.at(r, c) * x[c];
        y[r] = acc;
      }
      n.value = std::move(y);
      break;
    }
    case Op::kAdd: {
      Tensor y = in_value(n, 0);
      const Tensor& b = in_value(n, 1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
      n.value = std::move(y);
      break;
    }
    case Op::kSub: {
      Tensor y = in_value(n, 0);
      const Tensor& b = in_value(n, 1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b[i];
      n.value = std::move(y);
      break;
    }
    case Op::kMul: {
      Tensor y = in_value(n, 0);
      const Tensor& b = in_value(n, 1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b[i];
      n.value = std::move(y);
      break;
    }
    case Op::kScale: {
      const double s = in_value(n, 0)[0];
      Tensor y = in_value(n, 1);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s;
      n.value = std::move(y);
      break;
    }
    case Op::kConstMul: {
      Tensor y = in_value(n, 0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] *= n.c;
      n.value = std::move(y);
      break;
    }
    case Op::kConstAdd: {
      Tensor y = in_value(n, 0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += n.c;
      n.value = std::move(y);
      break;
    }
    case Op::kRelu: {
      Tensor y = in_value(n, 0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
      n.value = std::move(y);
      break;
    }
    case Op::kTanh: {
      Tensor y = in_value(n, 0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
      n.value = std::move(y);
      break;
    }
    case Op::kExp: {
      Tensor y = in_value(n, 0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(y[i]);
      n.value = std::move(y);
      break;
    }
    case Op::kLog: {
      Tensor y = in_value(n, 0);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(y[i]);
      n.value = std::move(y);
      break;
    }
    case Op::kSoftmax: {
      Tensor y = in_value(n, 0);
      double hi = y[0];
      for (std::size_t i = 1; i < y.size(); ++i) hi = std::max(hi, y[i]);
      double denom = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = std::exp(y[i] - hi);
        denom += y[i];
      }
      for (std::size_t i = 0; i < y.size(); ++i) y[i] /= denom;
      n.value = std::move(y);
      break;
    }
    case Op::kL2Norm:
    case Op::kNegL2Norm: {
      const Tensor& x = in_value(n, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x[i];
      double norm = std::sqrt(acc);
      n.value = Tensor::scalar(n.op == Op::kL2Norm ? norm : -norm);
      break;
    }
    case Op::kNormalize: {
      Tensor y = in_value(n, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * y[i];
      const double norm = std::sqrt(acc);
      if (norm > 0.0)
        for (std::size_t i = 0; i < y.size(); ++i) y[i] /= norm;
      n.value = std::move(y);
      break;
    }
    case Op::kConcat: {
      std::size_t total = 0;
      for (std::int32_t k = 0; k < n.extra_count; ++k)
        total += nodes_[extra_ids_[n.extra_begin + k]].value.size();
      Tensor y = Tensor::zeros({total});
      std::size_t off = 0;
      for (std::int32_t k = 0; k < n.extra_count; ++k) {
        const Tensor& part = nodes_[extra_ids_[n.extra_begin + k]].value;
        for (std::size_t i = 0; i < part.size(); ++i) y[off + i] = part[i];
        off += part.size();
      }
      n.value = std::move(y);
      break;
    }
    case Op::kDot: {
      const Tensor& a = in_value(n, 0);
      const Tensor& b = in_value(n, 1);
      double acc = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
      n.value = Tensor::scalar(acc);
      break;
    }
    case Op::kSum: {
      const Tensor& x = in_value(n, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += x[i];
      n.value = Tensor::scalar(acc);
      break;
    }
    case Op::kPick: {
      n.value = Tensor::scalar(in_value(n, 0)[static_cast<std::size_t>(n.aux)]);
      break;
    }
    case Op::kWeightedSum: {
      const std::int32_t m = n.aux;
      const Tensor& first = nodes_[extra_ids_[n.extra_begin]].value;
      Tensor y = Tensor::zeros(first.shape());
      for (std::int32_t k = 0; k < m; ++k) {
        const Tensor& item = nodes_[extra_ids_[n.extra_begin + k]].value;
        const double w = nodes_[extra_ids_[n.extra_begin + m + k]].value[0];
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += w * item[i];
      }
      n.value = std::move(y);
      break;
    }
  }
}

void Tape::replay_forward() {
  for (Node& n : nodes_)
    if (n.op != Op::kLeaf) eval(n);
}

Tensor& Tape::grad_slot(std::int32_t id, const Tensor& like) {
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor::zeros(like.shape());
  return g;
}

void Tape::backward(Val loss) {
  const std::int32_t root = check(loss);
  if (!nodes_[root].value.is_scalar())
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                shape_string(nodes_[root].value));
  grads_.assign(nodes_.size(), Tensor{});
  grads_[root] = Tensor::scalar(1.0);

  for (std::int32_t id = root; id >= 0; --id) {
    const Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    if (g.empty() || n.op == Op::kLeaf) continue;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatVec: {
        const Tensor& w = in_value(n, 0);
        const Tensor& x = in_value(n, 1);
        Tensor& gw = grad_slot(n.in[0], w);
        Tensor& gx = grad_slot(n.in[1], x);
        for (std::size_t r = 0; r < w.rows(); ++r) {
          const double gr = g[r];
          for (std::size_t c = 0; c < w.cols(); ++c) {
            gw.at(r, c) += gr * x[c];
            gx[c] += gr * w.at(r, c);
          }
        }
        break;
      }
      case Op::kAdd: {
        Tensor& ga = grad_slot(n.in[0], n.value);
        Tensor& gb = grad_slot(n.in[1], n.value);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = grad_slot(n.in[0], n.value);
        Tensor& gb = grad_slot(n.in[1], n.value);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = in_value(n, 0);
        const Tensor& b = in_value(n, 1);
        Tensor& ga = grad_slot(n.in[0], a);
        Tensor& gb = grad_slot(n.in[1], b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * b[i];
          gb[i] += g[i] * a[i];
        }
        break;
      }
      case Op::kScale: {
        const Tensor& x = in_value(n, 1);
        const double s = in_value(n, 0)[0];
        Tensor& gs = grad_slot(n.in[0], in_value(n, 0));
        Tensor& gx = grad_slot(n.in[1], x);
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          acc += g[i] * x[i];
          gx[i] += g[i] * s;
        }
        gs[0] += acc;
        break;
      }
      case Op::kConstMul: {
        Tensor& gx = grad_slot(n.in[0], n.value);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.c;
        break;
      }
      case Op::kConstAdd: {
        Tensor& gx = grad_slot(n.in[0], n.value);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        break;
      }
      case Op::kRelu: {
        const Tensor& x = in_value(n, 0);
        Tensor& gx = grad_slot(n.in[0], x);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::kTanh: {
        Tensor& gx = grad_slot(n.in[0], n.value);
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::kExp: {
        Tensor& gx = grad_slot(n.in[0], n.value);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * n.value[i];
        break;
      }
      case Op::kLog: {
        const Tensor& x = in_value(n, 0);
        Tensor& gx = grad_slot(n.in[0], x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x[i];
        break;
      }
      case Op::kSoftmax: {
        const Tensor& y = n.value;
        Tensor& gx = grad_slot(n.in[0], y);
        double inner = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
        for (std::size_t i = 0; i < y.size(); ++i)
          gx[i] += y[i] * (g[i] - inner);
        break;
      }
      case Op::kL2Norm:
      case Op::kNegL2Norm: {
        const Tensor& x = in_value(n, 0);
        Tensor& gx = grad_slot(n.in[0], x);
        const double norm = std::abs(n.value[0]);
        if (norm > 0.0) {
          const double sign = n.op == Op::kL2Norm ? 1.0 : -1.0;
          const double s = sign * g[0] / norm;
          for (std::size_t i = 0; i < x.size(); ++i) gx[i] += s * x[i];
        }
        break;
      }
      case Op::kNormalize: {
        const Tensor& x = in_value(n, 0);
        const Tensor& y = n.value;
        Tensor& gx = grad_slot(n.in[0], x);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x[i];
        const double norm = std::sqrt(acc);
        if (norm > 0.0) {
          double inner = 0.0;
          for (std::size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
          for (std::size_t i = 0; i < y.size(); ++i)
            gx[i] += (g[i] - y[i] * inner) / norm;
        }
        break;
      }
      case Op::kConcat: {
        std::size_t off = 0;
        for (std::int32_t k = 0; k < n.extra_count; ++k) {
          const std::int32_t src = extra_ids_[n.extra_begin + k];
          const Tensor& part = nodes_[src].value;
          Tensor& gp = grad_slot(src, part);
          for (std::size_t i = 0; i < part.size(); ++i) gp[i] += g[off + i];
          off += part.size();
        }
        break;
      }
      case Op::kDot: {
        const Tensor& a = in_value(n, 0);
        const Tensor& b = in_value(n, 1);
        Tensor& ga = grad_slot(n.in[0], a);
        Tensor& gb = grad_slot(n.in[1], b);
        const double g0 = g[0];
        for (std::size_t i = 0; i < a.size(); ++i) {
          ga[i] += g0 * b[i];
          gb[i] += g0 * a[i];
        }
        break;
      }
      case Op::kSum: {
        const Tensor& x = in_value(n, 0);
        Tensor& gx = grad_slot(n.in[0], x);
        const double g0 = g[0];
        for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g0;
        break;
      }
      case Op::kPick: {
        const Tensor& x = in_value(n, 0);
        Tensor& gx = grad_slot(n.in[0], x);
        gx[static_cast<std::size_t>(n.aux)] += g[0];
        break;
      }
      case Op::kWeightedSum: {
        const std::int32_t m = n.aux;
        for (std::int32_t k = 0; k < m; ++k) {
          const std::int32_t item_id = extra_ids_[n.extra_begin + k];
          const std::int32_t w_id = extra_ids_[n.extra_begin + m + k];
          const Tensor& item = nodes_[item_id].value;
          const double w = nodes_[w_id].value[0];
          Tensor& gi = grad_slot(item_id, item);
          Tensor& gw = grad_slot(w_id, nodes_[w_id].value);
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) {
            gi[i] += g[i] * w;
            acc += g[i] * item[i];
          }
          gw[0] += acc;
        }
        break;
      }
    }
  }
}

Tensor Tape::grad(Val v) const {
  const std::int32_t id = check(v);
  if (grads_.size() != nodes_.size() || grads_[id].empty())
    return Tensor::zeros(nodes_[id].value.shape());
  return grads_[id];
}

Tape::Val linear_map(Tape& t, Tape::Val w, Tape::Val x,
                     std::optional<Tape::Val> bias) {
  Tape::Val y = t.matvec(w, x);
  if (bias) y = t.add(y, *bias);
  return y;
}

GradCheckResult grad_check(
    const std::function<Tape::Val(Tape&, const std::vector<Tape::Val>&)>& build,
    std::vector<Tensor> theta, double step) {
  Tape tape;
  std::vector<Tape::Val> leaves;
  leaves.reserve(theta.size());
  for (Tensor& p : theta) leaves.push_back(tape.leaf(std::move(p)));
  const Tape::Val loss = build(tape, leaves);
  if (!tape.value(loss).is_scalar())
    throw std::invalid_argument("grad_check: function must be scalar-valued");
  tape.backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (Tape::Val v : leaves) analytic.push_back(tape.grad(v));

  GradCheckResult result;
  for (std::size_t p = 0; p < leaves.size(); ++p) {
    const std::size_t n = tape.value(leaves[p]).size();
    for (std::size_t c = 0; c < n; ++c) {
      const double original = tape.leaf_coord(leaves[p], c);
      tape.set_leaf(leaves[p], c, original + step);
      tape.replay_forward();
      const double f_plus = tape.value(loss)[0];
      tape.set_leaf(leaves[p], c, original - step);
      tape.replay_forward();
      const double f_minus = tape.value(loss)[0];
      tape.set_leaf(leaves[p], c, original);
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        result.non_finite.emplace_back(p, c);
        continue;
      }
      const double central = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[p][c];
      const double err = std::abs(a - central) / std::max(1.0, std::abs(a));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p;
        result.worst_coord = c;
      }
    }
  }
  tape.replay_forward();  // restore original values
  return result;
}

}  // namespace coid
