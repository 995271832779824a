// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "cuetrack/array.hpp"
#include "cuetrack/graph.hpp"

namespace cuetrack {

/// Scaled inner products <f_i, g_j> / sqrt(d) between key and reference rows.
Array score_matrix(const Array& key_desc, const Array& ref_desc);
NodeId add_score_matrix(Graph& graph, NodeId key_desc, NodeId ref_desc, std::size_t descriptor_dim);

/// Appends a dustbin row and column holding `bin_score`.
Array augment_dustbin(const Array& scores, double bin_score);

struct Marginals {
  std::vector<double> rows;  // length M + 1, last entry is the dustbin row
  std::vector<double> cols;  // length N + 1, last entry is the dustbin column
};

/// One unit of mass per real object; each dustbin can absorb the whole
/// opposite frame.
Marginals unit_marginals(std::size_t key_count, std::size_t ref_count);

/// Real-object marginals given per-object multiplicities; each dustbin
/// marginal equals the total real mass of the opposite side.
Marginals multiplicity_marginals(const std::vector<double>& key_mass,
                                 const std::vector<double>& ref_mass);

struct TransportPlan {
  Array values;  // (M + 1) x (N + 1) probabilities
  std::vector<double> row_marginals;
  std::vector<double> col_marginals;

  double max_marginal_deviation() const;
};

/// Log-domain Sinkhorn from `augmented` as logits. Runs exactly `iters`
/// sweeps unless `early_exit_tol` > 0, in which case it stops once every
/// row and column deviates from its marginal by less than the tolerance.
TransportPlan sinkhorn(const Array& augmented, const Marginals& marginals, std::size_t iters,
                       double early_exit_tol = 0.0);

/// Graph form; `log_row_marginals` is an (M+1) x 1 node and
/// `log_col_marginals` a 1 x (N+1) node. Returns the log transport plan.
NodeId add_log_sinkhorn(Graph& graph, NodeId augmented, NodeId log_row_marginals,
                        NodeId log_col_marginals, std::size_t iters);

/// Binary loss-cell matrix over the augmented plan; the dustbin corner is
/// always 0.
struct TargetMatrix {
  Array values;
};

/// -sum over target cells of log(plan).
double association_loss(const TransportPlan& plan, const TargetMatrix& target);
NodeId add_association_loss(Graph& graph, NodeId log_plan, NodeId target);

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // sorted by row
  double total_cost = 0.0;
};

/// Exact minimum-cost assignment of min(M, N) pairs. Among optimal solutions
/// the lexicographically smallest sorted pair list is returned.
Assignment hungarian(const Array& cost);

}  // namespace cuetrack
