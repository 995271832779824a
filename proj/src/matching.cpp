// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cuetrack {

Array score_matrix(const Array& key_desc, const Array& ref_desc) {
  if (key_desc.cols() != ref_desc.cols()) {
    throw Error("score_matrix: descriptor widths differ (" + std::to_string(key_desc.cols()) +
                " vs " + std::to_string(ref_desc.cols()) + ")");
  }
  const std::size_t d = key_desc.cols();
  const double inv = 1.0 / std::sqrt(static_cast<double>(d));
  Array out({key_desc.rows(), ref_desc.rows()});
  for (std::size_t i = 0; i < key_desc.rows(); ++i) {
    for (std::size_t j = 0; j < ref_desc.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += key_desc(i, k) * ref_desc(j, k);
      out(i, j) = dot * inv;
    }
  }
  return out;
}

NodeId add_score_matrix(Graph& graph, NodeId key_desc, NodeId ref_desc, std::size_t descriptor_dim) {
  NodeId dots = graph.matmul(key_desc, graph.transpose(ref_desc), "match.dots");
  return graph.scale(dots, 1.0 / std::sqrt(static_cast<double>(descriptor_dim)), "match.scores");
}

Array augment_dustbin(const Array& scores, double bin_score) {
  const std::size_t m = scores.empty() && scores.rank() == 0 ? 0 : scores.rows();
  const std::size_t n = scores.empty() && scores.rank() == 0 ? 0 : scores.cols();
  Array out({m + 1, n + 1}, bin_score);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) = scores(i, j);
  }
  return out;
}

Marginals unit_marginals(std::size_t key_count, std::size_t ref_count) {
  return multiplicity_marginals(std::vector<double>(key_count, 1.0),
                                std::vector<double>(ref_count, 1.0));
}

Marginals multiplicity_marginals(const std::vector<double>& key_mass,
                                 const std::vector<double>& ref_mass) {
  Marginals m{key_mass, ref_mass};
  m.rows.push_back(std::accumulate(ref_mass.begin(), ref_mass.end(), 0.0));
  m.cols.push_back(std::accumulate(key_mass.begin(), key_mass.end(), 0.0));
  return m;
}

double TransportPlan::max_marginal_deviation() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < values.cols(); ++j) s += values(i, j);
    worst = std::max(worst, std::abs(s - row_marginals[i]));
  }
  for (std::size_t j = 0; j < values.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < values.rows(); ++i) s += values(i, j);
    worst = std::max(worst, std::abs(s - col_marginals[j]));
  }
  return worst;
}

namespace {

void check_marginals(const Array& z, const Marginals& marginals) {
  if (marginals.rows.size() != z.rows() || marginals.cols.size() != z.cols()) {
    throw Error("sinkhorn: marginal lengths " + std::to_string(marginals.rows.size()) + "/" +
                std::to_string(marginals.cols.size()) + " do not fit a " +
                shape_string({z.rows(), z.cols()}) + " matrix");
  }
  auto positive = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && std::isfinite(x); });
  };
  if (!positive(marginals.rows) || !positive(marginals.cols)) {
    throw Error("sinkhorn: marginals must be positive and finite");
  }
  const double row_mass = std::accumulate(marginals.rows.begin(), marginals.rows.end(), 0.0);
  const double col_mass = std::accumulate(marginals.cols.begin(), marginals.cols.end(), 0.0);
  if (std::abs(row_mass - col_mass) > 1e-9 * std::max(1.0, row_mass)) {
    throw Error("sinkhorn: row mass " + std::to_string(row_mass) + " differs from column mass " +
                std::to_string(col_mass));
  }
}

}  // namespace

TransportPlan sinkhorn(const Array& augmented, const Marginals& marginals, std::size_t iters,
                       double early_exit_tol) {
  if (iters == 0) throw Error("sinkhorn: at least one iteration is required");
  const Array& z = augmented;
  check_marginals(z, marginals);
  const std::size_t m = z.rows(), n = z.cols();
  std::vector<double> log_mu(m), log_nu(n), u(m, 0.0), v(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) log_mu[i] = std::log(marginals.rows[i]);
  for (std::size_t j = 0; j < n; ++j) log_nu[j] = std::log(marginals.cols[j]);

  std::vector<double> scratch(std::max(m, n));
  auto lse = [](const std::vector<double>& x, std::size_t count) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k) mx = std::max(mx, x[k]);
    double total = 0.0;
    for (std::size_t k = 0; k < count; ++k) total += std::exp(x[k] - mx);
    return mx + std::log(total);
  };

  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) scratch[j] = z(i, j) + v[j];
      u[i] = log_mu[i] - lse(scratch, n);
    }
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < m; ++i) scratch[i] = z(i, j) + u[i];
      v[j] = log_nu[j] - lse(scratch, m);
    }
    if (early_exit_tol > 0.0) {
      // Columns are exact after the v update; only rows can drift.
      double worst = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(z(i, j) + u[i] + v[j]);
        worst = std::max(worst, std::abs(s - marginals.rows[i]));
      }
      if (worst < early_exit_tol) break;
    }
  }

  TransportPlan plan{Array({m, n}), marginals.rows, marginals.cols};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) plan.values(i, j) = std::exp(z(i, j) + u[i] + v[j]);
  }
  return plan;
}

NodeId add_log_sinkhorn(Graph& graph, NodeId augmented, NodeId log_row_marginals,
                        NodeId log_col_marginals, std::size_t iters) {
  if (iters == 0) throw Error("sinkhorn: at least one iteration is required");
  NodeId u = graph.sub(log_row_marginals, graph.row_logsumexp(augmented), "sinkhorn.u0");
  NodeId v = graph.sub(log_col_marginals,
                       graph.col_logsumexp(graph.add_col_bias(augmented, u)), "sinkhorn.v0");
  for (std::size_t it = 1; it < iters; ++it) {
    u = graph.sub(log_row_marginals, graph.row_logsumexp(graph.add_row_bias(augmented, v)));
    v = graph.sub(log_col_marginals, graph.col_logsumexp(graph.add_col_bias(augmented, u)));
  }
  return graph.add_row_bias(graph.add_col_bias(augmented, u), v, "sinkhorn.log_plan");
}

double association_loss(const TransportPlan& plan, const TargetMatrix& target) {
  const Array& p = plan.values;
  const Array& t = target.values;
  if (p.rows() != t.rows() || p.cols() != t.cols()) {
    throw Error("association_loss: plan " + shape_string(p.shape()) + " vs target " +
                shape_string(t.shape()));
  }
  if (t(t.rows() - 1, t.cols() - 1) != 0.0) {
    throw Error("association_loss: target marks the dustbin corner");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0) loss -= t[i] * std::log(p[i]);
  }
  return loss;
}

NodeId add_association_loss(Graph& graph, NodeId log_plan, NodeId target) {
  return graph.scale(graph.sum(graph.mul(target, log_plan)), -1.0, "loss.sinkhorn");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest augmenting path Hungarian for rows <= cols. Returns the column of
// every row and the optimal cost.
std::pair<std::vector<std::size_t>, double> solve_wide(const std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  const std::size_t m = n == 0 ? 0 : a[0].size();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  double total = 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) total += a[i][row_to_col[i]];
  return {row_to_col, total};
}

double optimal_cost(const Array& cost, const std::vector<std::size_t>& rows,
                    const std::vector<std::size_t>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  const bool wide = rows.size() <= cols.size();
  const auto& r = wide ? rows : cols;
  const auto& c = wide ? cols : rows;
  std::vector<std::vector<double>> a(r.size(), std::vector<double>(c.size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) {
      a[i][j] = wide ? cost(r[i], c[j]) : cost(c[j], r[i]);
    }
  }
  return solve_wide(a).second;
}

}  // namespace

Assignment hungarian(const Array& cost) {
  Assignment result;
  if (cost.empty()) return result;
  if (!cost.all_finite()) throw Error("hungarian: costs must be finite");
  const std::size_t m = cost.rows(), n = cost.cols();
  const std::size_t k = std::min(m, n);
  std::vector<std::size_t> all_rows(m), free_cols(n);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::iota(free_cols.begin(), free_cols.end(), std::size_t{0});
  const double best = optimal_cost(cost, all_rows, free_cols);
  const double tol = 1e-9 * std::max(1.0, std::abs(best));

  // Fix pairs in lexicographic order, keeping each one only if an optimal
  // completion still exists.
  double fixed = 0.0;
  for (std::size_t i = 0; i < m && result.pairs.size() < k; ++i) {
    std::vector<std::size_t> later_rows;
    for (std::size_t r = i + 1; r < m; ++r) later_rows.push_back(r);
    for (std::size_t idx = 0; idx < free_cols.size(); ++idx) {
      const std::size_t j = free_cols[idx];
      std::vector<std::size_t> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(idx));
      const std::size_t need = k - result.pairs.size() - 1;
      if (std::min(later_rows.size(), rest_cols.size()) < need) continue;
      const double total = fixed + cost(i, j) + optimal_cost(cost, later_rows, rest_cols);
      if (total <= best + tol) {
        result.pairs.emplace_back(i, j);
        fixed += cost(i, j);
        free_cols = std::move(rest_cols);
        break;
      }
    }
  }
  result.total_cost = fixed;
  return result;
}

}  // namespace cuetrack
