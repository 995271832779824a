// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cuetrack/array.hpp"
#include "cuetrack/params.hpp"

namespace cuetrack {

struct NodeId {
  std::size_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind {
  Input,
  Param,
  Const,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  Scale,
  AddRowBias,
  AddColBias,
  RowSoftmax,
  Relu,
  Exp,
  GroupNorm,
  ConcatCols,
  ConcatRows,
  RowLogSumExp,
  ColLogSumExp,
  MeanRows,
  Sum,
  Dustbin,
};

const char* op_name(OpKind kind);

struct Gradients {
  NamedArrays params;
  NamedArrays inputs;
};

/// A static computation graph over rank-2 arrays with reverse-mode
/// differentiation.
///
/// Nodes are appended in construction order, which is a topological order
/// because every builder call only references existing nodes. `forward`
/// evaluates every node and keeps the values needed by `backward`, which then
/// visits each node once in reverse order. Shapes are checked at forward time
/// so one graph can be evaluated on frames of any object count.
class Graph {
 public:
  NodeId input(const std::string& name);
  NodeId param(const std::string& name);
  NodeId constant(Array value, std::string label = {});

  NodeId matmul(NodeId a, NodeId b, std::string label = {});
  NodeId transpose(NodeId a, std::string label = {});
  NodeId add(NodeId a, NodeId b, std::string label = {});
  NodeId sub(NodeId a, NodeId b, std::string label = {});
  NodeId mul(NodeId a, NodeId b, std::string label = {});
  NodeId scale(NodeId a, double factor, std::string label = {});
  // b is 1 x C, added to every row of a.
  NodeId add_row_bias(NodeId a, NodeId b, std::string label = {});
  // b is R x 1, added to every column of a.
  NodeId add_col_bias(NodeId a, NodeId b, std::string label = {});
  NodeId row_softmax(NodeId a, std::string label = {});
  NodeId relu(NodeId a, std::string label = {});
  NodeId exp(NodeId a, std::string label = {});
  // Per-row normalization over `groups` contiguous channel groups, then the
  // per-channel affine map gamma * x + beta (gamma, beta are 1 x C).
  NodeId group_norm(NodeId x, NodeId gamma, NodeId beta, std::size_t groups,
                    std::string label = {});
  NodeId concat_cols(const std::vector<NodeId>& parts, std::string label = {});
  NodeId concat_rows(const std::vector<NodeId>& parts, std::string label = {});
  NodeId row_logsumexp(NodeId a, std::string label = {});
  NodeId col_logsumexp(NodeId a, std::string label = {});
  NodeId mean_rows(NodeId a, std::string label = {});
  NodeId sum(NodeId a, std::string label = {});
  // Appends one row and one column filled with the 1 x 1 value `bin`.
  NodeId dustbin(NodeId scores, NodeId bin, std::string label = {});

  void mark_output(const std::string& name, NodeId node);

  NamedArrays forward(const NamedArrays& inputs, const ParameterStore& params);
  Gradients backward(const NamedArrays& output_grads);
  // Adds the parameter gradients into `params` grad slots.
  void backward(const NamedArrays& output_grads, ParameterStore& params);

  const Array& value(NodeId node) const;
  const Array& grad(NodeId node) const;
  std::size_t size() const { return nodes_.size(); }
  bool evaluated() const { return evaluated_; }
  std::vector<std::string> input_names() const;
  std::vector<std::string> param_names() const;
  const std::vector<std::pair<std::string, NodeId>>& outputs() const { return outputs_; }

  const std::string& label(NodeId node) const;

 private:
  struct Node {
    OpKind kind{};
    std::vector<NodeId> inputs{};
    std::string name{};  // Input / Param key
    std::string label{};
    double factor = 0.0;
    std::size_t groups = 1;
    Array value{};
    Array grad{};
    Array saved{};  // op-specific forward state (normalized values, etc.)
    Array saved_aux{};
  };

  NodeId append(OpKind kind, std::vector<NodeId> inputs, std::string label);
  void check_id(NodeId id) const;
  void evaluate(Node& node, const NamedArrays& inputs, const ParameterStore& params);
  void propagate(Node& node);
  Array& grad_slot(NodeId id);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, NodeId>> outputs_;
  bool evaluated_ = false;
};

/// Central finite-difference check of d(sum of all outputs)/d(params).
/// Returns max over all parameter entries of
/// |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
double grad_check(Graph& graph, const NamedArrays& point, const ParameterStore& params,
                  double h);

}  // namespace cuetrack
