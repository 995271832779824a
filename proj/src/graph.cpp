// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cuetrack {

namespace {

constexpr double kGroupNormEps = 1e-5;

Array matrix_of(std::size_t rows, std::size_t cols) { return Array({rows, cols}); }

void require(bool ok, const std::string& label, const std::string& what) {
  if (!ok) throw Error("node '" + label + "': " + what);
}

std::string dims(const Array& a) { return shape_string({a.rows(), a.cols()}); }

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "input";
    case OpKind::Param: return "param";
    case OpKind::Const: return "const";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddRowBias: return "add_row_bias";
    case OpKind::AddColBias: return "add_col_bias";
    case OpKind::RowSoftmax: return "row_softmax";
    case OpKind::Relu: return "relu";
    case OpKind::Exp: return "exp";
    case OpKind::GroupNorm: return "group_norm";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::RowLogSumExp: return "row_logsumexp";
    case OpKind::ColLogSumExp: return "col_logsumexp";
    case OpKind::MeanRows: return "mean_rows";
    case OpKind::Sum: return "sum";
    case OpKind::Dustbin: return "dustbin";
  }
  return "unknown";
}

NodeId Graph::append(OpKind kind, std::vector<NodeId> inputs, std::string label) {
  for (NodeId id : inputs) check_id(id);
  Node node;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.label = label.empty() ? std::string(op_name(kind)) + "#" + std::to_string(nodes_.size())
                             : std::move(label);
  nodes_.push_back(std::move(node));
  evaluated_ = false;
  return NodeId{nodes_.size() - 1};
}

void Graph::check_id(NodeId id) const {
  if (id.index >= nodes_.size()) {
    throw Error("node id " + std::to_string(id.index) + " does not exist in this graph");
  }
}

NodeId Graph::input(const std::string& name) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Input && nodes_[i].name == name) return NodeId{i};
  }
  NodeId id = append(OpKind::Input, {}, "input:" + name);
  nodes_[id.index].name = name;
  return id;
}

NodeId Graph::param(const std::string& name) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::Param && nodes_[i].name == name) return NodeId{i};
  }
  NodeId id = append(OpKind::Param, {}, "param:" + name);
  nodes_[id.index].name = name;
  return id;
}

NodeId Graph::constant(Array value, std::string label) {
  if (value.rank() != 2) value = Array({value.rows(), value.cols()}, value.values());
  NodeId id = append(OpKind::Const, {}, std::move(label));
  nodes_[id.index].saved = std::move(value);
  return id;
}

NodeId Graph::matmul(NodeId a, NodeId b, std::string label) {
  return append(OpKind::MatMul, {a, b}, std::move(label));
}
NodeId Graph::transpose(NodeId a, std::string label) {
  return append(OpKind::Transpose, {a}, std::move(label));
}
NodeId Graph::add(NodeId a, NodeId b, std::string label) {
  return append(OpKind::Add, {a, b}, std::move(label));
}
NodeId Graph::sub(NodeId a, NodeId b, std::string label) {
  return append(OpKind::Sub, {a, b}, std::move(label));
}
NodeId Graph::mul(NodeId a, NodeId b, std::string label) {
  return append(OpKind::Mul, {a, b}, std::move(label));
}
NodeId Graph::scale(NodeId a, double factor, std::string label) {
  NodeId id = append(OpKind::Scale, {a}, std::move(label));
  nodes_[id.index].factor = factor;
  return id;
}
NodeId Graph::add_row_bias(NodeId a, NodeId b, std::string label) {
  return append(OpKind::AddRowBias, {a, b}, std::move(label));
}
NodeId Graph::add_col_bias(NodeId a, NodeId b, std::string label) {
  return append(OpKind::AddColBias, {a, b}, std::move(label));
}
NodeId Graph::row_softmax(NodeId a, std::string label) {
  return append(OpKind::RowSoftmax, {a}, std::move(label));
}
NodeId Graph::relu(NodeId a, std::string label) {
  return append(OpKind::Relu, {a}, std::move(label));
}
NodeId Graph::exp(NodeId a, std::string label) {
  return append(OpKind::Exp, {a}, std::move(label));
}
NodeId Graph::group_norm(NodeId x, NodeId gamma, NodeId beta, std::size_t groups,
                         std::string label) {
  if (groups == 0) throw Error("group_norm needs at least one group");
  NodeId id = append(OpKind::GroupNorm, {x, gamma, beta}, std::move(label));
  nodes_[id.index].groups = groups;
  return id;
}
NodeId Graph::concat_cols(const std::vector<NodeId>& parts, std::string label) {
  if (parts.empty()) throw Error("concat_cols needs at least one part");
  return append(OpKind::ConcatCols, parts, std::move(label));
}
NodeId Graph::concat_rows(const std::vector<NodeId>& parts, std::string label) {
  if (parts.empty()) throw Error("concat_rows needs at least one part");
  return append(OpKind::ConcatRows, parts, std::move(label));
}
NodeId Graph::row_logsumexp(NodeId a, std::string label) {
  return append(OpKind::RowLogSumExp, {a}, std::move(label));
}
NodeId Graph::col_logsumexp(NodeId a, std::string label) {
  return append(OpKind::ColLogSumExp, {a}, std::move(label));
}
NodeId Graph::mean_rows(NodeId a, std::string label) {
  return append(OpKind::MeanRows, {a}, std::move(label));
}
NodeId Graph::sum(NodeId a, std::string label) {
  return append(OpKind::Sum, {a}, std::move(label));
}
NodeId Graph::dustbin(NodeId scores, NodeId bin, std::string label) {
  return append(OpKind::Dustbin, {scores, bin}, std::move(label));
}

void Graph::mark_output(const std::string& name, NodeId node) {
  check_id(node);
  for (auto& [existing, id] : outputs_) {
    if (existing == name) {
      id = node;
      return;
    }
  }
  outputs_.emplace_back(name, node);
}

const Array& Graph::value(NodeId node) const {
  check_id(node);
  if (!evaluated_) throw Error("value requested before forward");
  return nodes_[node.index].value;
}

const Array& Graph::grad(NodeId node) const {
  check_id(node);
  return nodes_[node.index].grad;
}

const std::string& Graph::label(NodeId node) const {
  check_id(node);
  return nodes_[node.index].label;
}

std::vector<std::string> Graph::input_names() const {
  std::vector<std::string> out;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Input) out.push_back(n.name);
  }
  return out;
}

std::vector<std::string> Graph::param_names() const {
  std::vector<std::string> out;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Param) out.push_back(n.name);
  }
  return out;
}

NamedArrays Graph::forward(const NamedArrays& inputs, const ParameterStore& params) {
  evaluated_ = false;
  for (Node& node : nodes_) {
    node.grad = Array();
    evaluate(node, inputs, params);
    if (!node.value.all_finite()) {
      throw Error("node '" + node.label + "': non-finite value produced");
    }
  }
  evaluated_ = true;
  NamedArrays out;
  for (const auto& [name, id] : outputs_) out.insert_or_assign(name, nodes_[id.index].value);
  return out;
}

void Graph::evaluate(Node& node, const NamedArrays& inputs, const ParameterStore& params) {
  const std::string& label = node.label;
  auto in = [&](std::size_t k) -> const Array& { return nodes_[node.inputs[k].index].value; };

  switch (node.kind) {
    case OpKind::Input: {
      auto it = inputs.find(node.name);
      require(it != inputs.end(), label, "input '" + node.name + "' not supplied");
      const Array& v = it->second;
      require(v.rank() <= 2, label, "inputs must be rank 1 or 2");
      require(v.all_finite(), label, "non-finite input '" + node.name + "'");
      node.value = Array({v.rows(), v.cols()}, v.values());
      return;
    }
    case OpKind::Param: {
      require(params.contains(node.name), label, "parameter '" + node.name + "' missing");
      const Array& v = params.value(node.name);
      node.value = Array({v.rows(), v.cols()}, v.values());
      return;
    }
    case OpKind::Const:
      node.value = node.saved;
      return;
    case OpKind::MatMul: {
      const Array& a = in(0);
      const Array& b = in(1);
      require(a.cols() == b.rows(), label,
              "matmul shape mismatch " + dims(a) + " * " + dims(b));
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      node.value = matrix_of(m, n);
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      double* pc = node.value.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          const double* brow = pb + p * n;
          double* crow = pc + i * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
      return;
    }
    case OpKind::Transpose: {
      const Array& a = in(0);
      node.value = matrix_of(a.cols(), a.rows());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) node.value(j, i) = a(i, j);
      }
      return;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      require(a.rows() == b.rows() && a.cols() == b.cols(), label,
              std::string(op_name(node.kind)) + " shape mismatch " + dims(a) + " vs " + dims(b));
      node.value = a;
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (node.kind == OpKind::Add) node.value[i] += b[i];
        else if (node.kind == OpKind::Sub) node.value[i] -= b[i];
        else node.value[i] *= b[i];
      }
      return;
    }
    case OpKind::Scale: {
      node.value = in(0);
      for (double& v : node.value.data()) v *= node.factor;
      return;
    }
    case OpKind::AddRowBias: {
      const Array& a = in(0);
      const Array& b = in(1);
      require(b.rows() == 1 && b.cols() == a.cols(), label,
              "row bias " + dims(b) + " does not fit " + dims(a));
      node.value = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) node.value(i, j) += b[j];
      }
      return;
    }
    case OpKind::AddColBias: {
      const Array& a = in(0);
      const Array& b = in(1);
      require(b.cols() == 1 && b.rows() == a.rows(), label,
              "column bias " + dims(b) + " does not fit " + dims(a));
      node.value = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) node.value(i, j) += b[i];
      }
      return;
    }
    case OpKind::RowSoftmax: {
      const Array& a = in(0);
      require(a.cols() > 0, label, "softmax over an empty row");
      node.value = a;
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
          node.value(i, j) = std::exp(a(i, j) - mx);
          total += node.value(i, j);
        }
        for (std::size_t j = 0; j < a.cols(); ++j) node.value(i, j) /= total;
      }
      return;
    }
    case OpKind::Relu: {
      node.value = in(0);
      for (double& v : node.value.data()) v = v > 0.0 ? v : 0.0;
      return;
    }
    case OpKind::Exp: {
      node.value = in(0);
      for (double& v : node.value.data()) v = std::exp(v);
      return;
    }
    case OpKind::GroupNorm: {
      const Array& x = in(0);
      const Array& gamma = in(1);
      const Array& beta = in(2);
      const std::size_t c = x.cols();
      require(c % node.groups == 0, label,
              std::to_string(c) + " channels not divisible into " +
                  std::to_string(node.groups) + " groups");
      require(gamma.rows() == 1 && gamma.cols() == c && beta.rows() == 1 && beta.cols() == c,
              label, "affine parameters must be 1x" + std::to_string(c));
      const std::size_t gs = c / node.groups;
      node.saved = matrix_of(x.rows(), c);
      node.saved_aux = matrix_of(x.rows(), node.groups);
      node.value = matrix_of(x.rows(), c);
      for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t g = 0; g < node.groups; ++g) {
          double mean = 0.0;
          for (std::size_t k = 0; k < gs; ++k) mean += x(r, g * gs + k);
          mean /= static_cast<double>(gs);
          double var = 0.0;
          for (std::size_t k = 0; k < gs; ++k) {
            const double d = x(r, g * gs + k) - mean;
            var += d * d;
          }
          var /= static_cast<double>(gs);
          const double inv = 1.0 / std::sqrt(var + kGroupNormEps);
          node.saved_aux(r, g) = inv;
          for (std::size_t k = 0; k < gs; ++k) {
            const std::size_t ch = g * gs + k;
            const double xhat = (x(r, ch) - mean) * inv;
            node.saved(r, ch) = xhat;
            node.value(r, ch) = gamma[ch] * xhat + beta[ch];
          }
        }
      }
      return;
    }
    case OpKind::ConcatCols: {
      const std::size_t rows = in(0).rows();
      std::size_t cols = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        require(in(k).rows() == rows, label, "concat_cols row mismatch at part " + std::to_string(k));
        cols += in(k).cols();
      }
      node.value = matrix_of(rows, cols);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Array& p = in(k);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < p.cols(); ++j) node.value(i, offset + j) = p(i, j);
        }
        offset += p.cols();
      }
      return;
    }
    case OpKind::ConcatRows: {
      const std::size_t cols = in(0).cols();
      std::size_t rows = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        require(in(k).cols() == cols, label, "concat_rows column mismatch at part " + std::to_string(k));
        rows += in(k).rows();
      }
      std::vector<double> data;
      data.reserve(rows * cols);
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        data.insert(data.end(), in(k).values().begin(), in(k).values().end());
      }
      node.value = Array({rows, cols}, std::move(data));
      return;
    }
    case OpKind::RowLogSumExp: {
      const Array& a = in(0);
      require(a.cols() > 0, label, "logsumexp over an empty row");
      node.value = matrix_of(a.rows(), 1);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < a.cols(); ++j) mx = std::max(mx, a(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) total += std::exp(a(i, j) - mx);
        node.value[i] = mx + std::log(total);
      }
      return;
    }
    case OpKind::ColLogSumExp: {
      const Array& a = in(0);
      require(a.rows() > 0, label, "logsumexp over an empty column");
      node.value = matrix_of(1, a.cols());
      for (std::size_t j = 0; j < a.cols(); ++j) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < a.rows(); ++i) mx = std::max(mx, a(i, j));
        double total = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) total += std::exp(a(i, j) - mx);
        node.value[j] = mx + std::log(total);
      }
      return;
    }
    case OpKind::MeanRows: {
      const Array& a = in(0);
      require(a.rows() > 0, label, "mean over zero rows");
      node.value = matrix_of(1, a.cols());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) node.value[j] += a(i, j);
      }
      for (double& v : node.value.data()) v /= static_cast<double>(a.rows());
      return;
    }
    case OpKind::Sum: {
      double total = 0.0;
      for (double v : in(0).data()) total += v;
      node.value = Array({1, 1}, total);
      return;
    }
    case OpKind::Dustbin: {
      const Array& s = in(0);
      const Array& bin = in(1);
      require(bin.size() == 1, label, "dustbin score must be 1x1, got " + dims(bin));
      const std::size_t m = s.rows(), n = s.cols();
      node.value = Array({m + 1, n + 1}, bin[0]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) node.value(i, j) = s(i, j);
      }
      return;
    }
  }
}

Array& Graph::grad_slot(NodeId id) {
  Node& n = nodes_[id.index];
  if (n.grad.empty() && !n.value.empty()) n.grad = Array(n.value.shape());
  if (n.grad.shape() != n.value.shape()) n.grad = Array(n.value.shape());
  return n.grad;
}

Gradients Graph::backward(const NamedArrays& output_grads) {
  if (!evaluated_) throw Error("backward called before forward");
  for (Node& node : nodes_) node.grad = Array();

  for (const auto& [name, upstream] : output_grads) {
    auto it = std::find_if(outputs_.begin(), outputs_.end(),
                           [&](const auto& o) { return o.first == name; });
    if (it == outputs_.end()) throw Error("gradient supplied for unknown output '" + name + "'");
    Array& slot = grad_slot(it->second);
    if (upstream.size() != slot.size()) {
      throw Error("output '" + name + "' gradient has " + std::to_string(upstream.size()) +
                  " entries, output has " + std::to_string(slot.size()));
    }
    for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += upstream[i];
  }

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].grad.empty()) continue;
    propagate(nodes_[i]);
  }

  Gradients out;
  for (const Node& node : nodes_) {
    if (node.kind != OpKind::Param && node.kind != OpKind::Input) continue;
    Array g = node.grad.empty() ? Array(node.value.shape()) : node.grad;
    NamedArrays& target = node.kind == OpKind::Param ? out.params : out.inputs;
    target.insert_or_assign(node.name, std::move(g));
  }
  return out;
}

void Graph::backward(const NamedArrays& output_grads, ParameterStore& params) {
  Gradients g = backward(output_grads);
  for (auto& [name, grad] : g.params) {
    const Shape& shape = params.value(name).shape();
    params.accumulate_grads({{name, Array(shape, grad.values())}});
  }
}

void Graph::propagate(Node& node) {
  const Array& g = node.grad;
  auto in = [&](std::size_t k) -> const Array& { return nodes_[node.inputs[k].index].value; };

  switch (node.kind) {
    case OpKind::Input:
    case OpKind::Param:
    case OpKind::Const:
      return;
    case OpKind::MatMul: {
      const Array& a = in(0);
      const Array& b = in(1);
      const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
      Array& ga = grad_slot(node.inputs[0]);
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * b(p, j);
          ga(i, p) += acc;
        }
      }
      Array& gb = grad_slot(node.inputs[1]);
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a(i, p);
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb(p, j) += av * g(i, j);
        }
      }
      return;
    }
    case OpKind::Transpose: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) ga(j, i) += g(i, j);
      }
      return;
    }
    case OpKind::Add: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Array& gb = grad_slot(node.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      return;
    }
    case OpKind::Sub: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Array& gb = grad_slot(node.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      return;
    }
    case OpKind::Mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      Array& gb = grad_slot(node.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      return;
    }
    case OpKind::Scale: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.factor;
      return;
    }
    case OpKind::AddRowBias: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Array& gb = grad_slot(node.inputs[1]);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
      }
      return;
    }
    case OpKind::AddColBias: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      Array& gb = grad_slot(node.inputs[1]);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb[i] += g(i, j);
      }
      return;
    }
    case OpKind::RowSoftmax: {
      const Array& y = node.value;
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
      }
      return;
    }
    case OpKind::Relu: {
      const Array& x = in(0);
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) ga[i] += g[i];
      }
      return;
    }
    case OpKind::Exp: {
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * node.value[i];
      return;
    }
    case OpKind::GroupNorm: {
      const Array& gamma = in(1);
      const Array& xhat = node.saved;
      const Array& inv = node.saved_aux;
      const std::size_t c = xhat.cols();
      const std::size_t gs = c / node.groups;
      Array& gx = grad_slot(node.inputs[0]);
      Array& gg = grad_slot(node.inputs[1]);
      Array& gbeta = grad_slot(node.inputs[2]);
      std::vector<double> dxhat(gs);
      for (std::size_t r = 0; r < xhat.rows(); ++r) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          gg[ch] += g(r, ch) * xhat(r, ch);
          gbeta[ch] += g(r, ch);
        }
        for (std::size_t grp = 0; grp < node.groups; ++grp) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t k = 0; k < gs; ++k) {
            const std::size_t ch = grp * gs + k;
            dxhat[k] = g(r, ch) * gamma[ch];
            mean_d += dxhat[k];
            mean_dx += dxhat[k] * xhat(r, ch);
          }
          mean_d /= static_cast<double>(gs);
          mean_dx /= static_cast<double>(gs);
          for (std::size_t k = 0; k < gs; ++k) {
            const std::size_t ch = grp * gs + k;
            gx(r, ch) += inv(r, grp) * (dxhat[k] - mean_d - xhat(r, ch) * mean_dx);
          }
        }
      }
      return;
    }
    case OpKind::ConcatCols: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        Array& gp = grad_slot(node.inputs[k]);
        for (std::size_t i = 0; i < gp.rows(); ++i) {
          for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offset + j);
        }
        offset += gp.cols();
      }
      return;
    }
    case OpKind::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        Array& gp = grad_slot(node.inputs[k]);
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        offset += gp.size();
      }
      return;
    }
    case OpKind::RowLogSumExp: {
      const Array& a = in(0);
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
          ga(i, j) += g[i] * std::exp(a(i, j) - node.value[i]);
        }
      }
      return;
    }
    case OpKind::ColLogSumExp: {
      const Array& a = in(0);
      Array& ga = grad_slot(node.inputs[0]);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
          ga(i, j) += g[j] * std::exp(a(i, j) - node.value[j]);
        }
      }
      return;
    }
    case OpKind::MeanRows: {
      Array& ga = grad_slot(node.inputs[0]);
      const double w = 1.0 / static_cast<double>(ga.rows());
      for (std::size_t i = 0; i < ga.rows(); ++i) {
        for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g[j] * w;
      }
      return;
    }
    case OpKind::Sum: {
      Array& ga = grad_slot(node.inputs[0]);
      for (double& v : ga.data()) v += g[0];
      return;
    }
    case OpKind::Dustbin: {
      Array& gs = grad_slot(node.inputs[0]);
      Array& gbin = grad_slot(node.inputs[1]);
      const std::size_t m = gs.rows(), n = gs.cols();
      double bin_total = 0.0;
      for (std::size_t i = 0; i <= m; ++i) {
        for (std::size_t j = 0; j <= n; ++j) {
          if (i < m && j < n) gs(i, j) += g(i, j);
          else bin_total += g(i, j);
        }
      }
      gbin[0] += bin_total;
      return;
    }
  }
}

namespace {

double total_output(const NamedArrays& outputs) {
  double total = 0.0;
  for (const auto& [name, a] : outputs) {
    for (double v : a.data()) total += v;
  }
  return total;
}

}  // namespace

double grad_check(Graph& graph, const NamedArrays& point, const ParameterStore& params,
                  double h) {
  if (!(h > 0.0)) throw Error("grad_check step must be positive");
  NamedArrays outputs = graph.forward(point, params);
  NamedArrays seeds;
  for (const auto& [name, a] : outputs) seeds.insert_or_assign(name, Array(a.shape(), 1.0));
  const Gradients analytic = graph.backward(seeds);

  ParameterStore probe = params;
  double worst = 0.0;
  for (const auto& [name, g] : analytic.params) {
    Array& w = probe.mutable_value(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double original = w[i];
      w[i] = original + h;
      const double plus = total_output(graph.forward(point, probe));
      w[i] = original - h;
      const double minus = total_output(graph.forward(point, probe));
      w[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err =
          std::abs(g[i] - numeric) / std::max(1e-12, std::abs(g[i]) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  // Leave the graph holding the tape of the unperturbed point.
  graph.forward(point, params);
  return worst;
}

}  // namespace cuetrack
