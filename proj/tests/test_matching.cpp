// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "cuetrack/matching.hpp"
#include "cuetrack/params.hpp"
#include "test_support.hpp"

using namespace cuetrack;
using testing::random_array;

namespace {

struct Brute {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double cost = std::numeric_limits<double>::infinity();
};

// Enumerates every injective row -> column map for M <= N in lexicographic order.
Brute brute_force(const Array& cost) {
  const std::size_t m = cost.rows(), n = cost.cols();
  std::vector<std::size_t> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  Brute best;
  std::vector<std::vector<std::size_t>> seen;
  do {
    std::vector<std::size_t> head(cols.begin(), cols.begin() + m);
    if (!seen.empty() && seen.back() == head) continue;
    seen.push_back(head);
    double c = 0.0;
    for (std::size_t i = 0; i < m; ++i) c += cost(i, head[i]);
    if (c < best.cost - 1e-12) {
      best.cost = c;
      best.pairs.clear();
      for (std::size_t i = 0; i < m; ++i) best.pairs.push_back({i, head[i]});
    }
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

double plan_sum_row(const Array& p, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
  return s;
}

double plan_sum_col(const Array& p, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) s += p(i, j);
  return s;
}

}  // namespace

TEST_CASE("score matrix") {
  std::mt19937_64 rng(1);
  const Array f = random_array({3, 5}, rng), g = random_array({4, 5}, rng);
  const Array s = score_matrix(f, g);
  const Array st = score_matrix(g, f);
  CHECK(s.rows() == 3);
  CHECK(s.cols() == 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 5; ++k) dot += f(i, k) * g(j, k);
      CHECK(s(i, j) == doctest::Approx(dot / std::sqrt(5.0)).epsilon(1e-14));
      CHECK(s(i, j) == st(j, i));
    }
  const Array eye = Array::identity(4);
  const Array se = score_matrix(eye, eye);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(se(i, j) == (i == j ? 0.5 : 0.0));
  CHECK_THROWS_AS(score_matrix(f, random_array({2, 4}, rng)), Error);
}

TEST_CASE("dustbin augmentation") {
  const Array a = augment_dustbin(Array::matrix(1, 1, {5}), 0.0);
  CHECK(a == Array::matrix(2, 2, {5, 0, 0, 0}));
  const Array e = augment_dustbin(Array({0, 3}), 1.5);
  CHECK(e.rows() == 1);
  CHECK(e.cols() == 4);
  for (double v : e.values()) CHECK(v == 1.5);
  std::mt19937_64 rng(2);
  const Array big = augment_dustbin(random_array({3, 4}, rng), -2.0);
  CHECK(big.rows() == 4);
  CHECK(big.cols() == 5);
  CHECK(big(3, 4) == -2.0);
  CHECK(big(1, 4) == -2.0);
  CHECK(big(3, 0) == -2.0);
}

TEST_CASE("marginals") {
  const Marginals u = unit_marginals(3, 5);
  CHECK(u.rows == std::vector<double>{1, 1, 1, 5});
  CHECK(u.cols == std::vector<double>{1, 1, 1, 1, 1, 3});
  const Marginals m = multiplicity_marginals({1, 2}, {2, 1, 1});
  CHECK(m.rows == std::vector<double>{1, 2, 4});
  CHECK(m.cols == std::vector<double>{2, 1, 1, 3});
}

TEST_CASE("sinkhorn dominant diagonal") {
  Marginals m{{1, 1}, {1, 1}};
  const TransportPlan p = sinkhorn(Array::matrix(2, 2, {10, 0, 0, 10}), m, 100);
  CHECK(p.values(0, 0) > 0.99);
  CHECK(p.values(1, 1) > 0.99);
}

TEST_CASE("sinkhorn 1x1 with dustbin has a closed form") {
  // With unit marginals the plan is [[p, 1-p], [1-p, p]] and p/(1-p) = exp(s/2).
  for (double s : {-3.0, -0.5, 0.0, 1.0, 4.0}) {
    const TransportPlan p = sinkhorn(Array::matrix(2, 2, {s, 0, 0, 0}), unit_marginals(1, 1), 100);
    const double expected = 1.0 / (1.0 + std::exp(-s / 2.0));
    CHECK(p.values(0, 0) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(p.values(1, 1) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(p.values(0, 1) == doctest::Approx(1.0 - expected).epsilon(1e-9));
  }
}

TEST_CASE("sinkhorn marginals after full iterations") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + rng() % 10, n = 1 + rng() % 12;
    const Array aug = augment_dustbin(random_array({m, n}, rng, -3, 3), 1.0);
    const Marginals mg = unit_marginals(m, n);
    const TransportPlan p = sinkhorn(aug, mg, 100);
    const double hi = std::max(static_cast<double>(m), static_cast<double>(n));
    for (std::size_t i = 0; i <= m; ++i) CHECK(std::abs(plan_sum_row(p.values, i) - mg.rows[i]) < 1e-6);
    for (std::size_t j = 0; j <= n; ++j) CHECK(std::abs(plan_sum_col(p.values, j) - mg.cols[j]) < 1e-6);
    CHECK(p.max_marginal_deviation() < 1e-6);
    for (double v : p.values.values()) {
      CHECK(v > 0.0);
      CHECK(v < hi);
    }
  }
}

TEST_CASE("sinkhorn with multiplicity marginals") {
  std::mt19937_64 rng(4);
  const Marginals mg = multiplicity_marginals({1, 2, 1}, {2, 1});
  const TransportPlan p = sinkhorn(augment_dustbin(random_array({3, 2}, rng, -3, 3), 1.0), mg, 200);
  CHECK(p.max_marginal_deviation() < 1e-6);
}

TEST_CASE("sinkhorn early exit") {
  std::mt19937_64 rng(5);
  const Array aug = augment_dustbin(random_array({4, 4}, rng, -1, 1), 1.0);
  const TransportPlan p = sinkhorn(aug, unit_marginals(4, 4), 100000, 1e-9);
  CHECK(p.max_marginal_deviation() < 1e-9);
}

TEST_CASE("sinkhorn errors") {
  const Array aug = Array::matrix(2, 2, {0, 0, 0, 0});
  CHECK_THROWS_AS(sinkhorn(aug, Marginals{{1, 2}, {1, 1}}, 10), Error);
  CHECK_THROWS_AS(sinkhorn(aug, Marginals{{1, 1}, {1, 1, 1}}, 10), Error);
  CHECK_THROWS_AS(sinkhorn(aug, Marginals{{1, 1}, {1, 1}}, 0), Error);
  CHECK_THROWS_AS(sinkhorn(aug, Marginals{{1, -1}, {0, 0}}, 10), Error);
}

TEST_CASE("sinkhorn is monotone in each logit") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    const Array base = augment_dustbin(random_array({3, 4}, rng, -3, 3), 1.0);
    const std::size_t i = rng() % 3, j = rng() % 4;
    Array bumped = base;
    bumped(i, j) += 0.5;
    const double a = sinkhorn(base, unit_marginals(3, 4), 100).values(i, j);
    const double b = sinkhorn(bumped, unit_marginals(3, 4), 100).values(i, j);
    CHECK(b >= a - 1e-12);
  }
}

TEST_CASE("sinkhorn agrees with hungarian on well separated scores") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int agree = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 8;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Array s({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s(i, j) = u(rng);
    for (std::size_t i = 0; i < n; ++i) s(i, perm[i]) = 3.0 + u(rng);
    Marginals mg;
    mg.rows.assign(n, 1.0);
    mg.cols.assign(n, 1.0);
    const TransportPlan p = sinkhorn(s, mg, 100);
    Array neg = s;
    for (double& v : neg.data()) v = -v;
    const Assignment h = hungarian(neg);
    bool same = true;
    for (auto [i, j] : h.pairs) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < n; ++c)
        if (p.values(i, c) > p.values(i, best)) best = c;
      same = same && best == j;
    }
    agree += same ? 1 : 0;
  }
  CHECK(agree >= 99);
}

TEST_CASE("association loss") {
  TransportPlan p;
  p.values = Array::matrix(2, 2, {1, 0, 0, 1});
  TargetMatrix t{Array::matrix(2, 2, {1, 0, 0, 0})};
  CHECK(association_loss(p, t) == 0.0);

  p.values = Array::matrix(3, 3, {0.5, 0.5, 0, 0.5, 0.5, 0, 0, 0, 1});
  t.values = Array::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(association_loss(p, t) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  t.values = Array::matrix(3, 3, {0, 0, 0, 0, 0, 0, 0, 0, 1});
  CHECK_THROWS_AS(association_loss(p, t), Error);
  t.values = Array::matrix(2, 2, {1, 0, 0, 0});
  CHECK_THROWS_AS(association_loss(p, t), Error);

  std::mt19937_64 rng(8);
  for (int k = 0; k < 10; ++k) {
    const TransportPlan q = sinkhorn(augment_dustbin(random_array({3, 3}, rng, -3, 3), 1.0),
                                     unit_marginals(3, 3), 100);
    TargetMatrix diag{Array({4, 4})};
    for (std::size_t i = 0; i < 3; ++i) diag.values(i, i) = 1.0;
    CHECK(association_loss(q, diag) > 0.0);
  }
}

TEST_CASE("graph sinkhorn matches the eager plan and its loss gradient") {
  std::mt19937_64 rng(9);
  const std::size_t m = 3, n = 4;
  const Array aug = augment_dustbin(random_array({m, n}, rng, -3, 3), 1.0);
  const Marginals mg = multiplicity_marginals({1, 1, 2}, {1, 2, 1, 1});
  Array lr({m + 1, 1}), lc({1, n + 1});
  for (std::size_t i = 0; i <= m; ++i) lr(i, 0) = std::log(mg.rows[i]);
  for (std::size_t j = 0; j <= n; ++j) lc(0, j) = std::log(mg.cols[j]);

  ParameterStore p;
  p.add("logits", aug.shape(), Init::Zeros);
  p.mutable_value("logits") = aug;
  Array target({m + 1, n + 1});
  target(0, 1) = 1;
  target(2, 1) = 1;
  target(1, n) = 1;
  target(m, 0) = 1;

  Graph g;
  NodeId plan = add_log_sinkhorn(g, g.param("logits"), g.constant(lr), g.constant(lc), 100);
  g.mark_output("plan", plan);
  g.mark_output("loss", add_association_loss(g, plan, g.constant(target)));
  const NamedArrays out = g.forward({}, p);
  const TransportPlan eager = sinkhorn(aug, mg, 100);
  for (std::size_t i = 0; i < aug.size(); ++i) {
    CHECK(std::exp(out.at("plan")[i]) == doctest::Approx(eager.values[i]).epsilon(1e-12));
  }
  CHECK(out.at("loss")[0] == doctest::Approx(association_loss(eager, TargetMatrix{target})).epsilon(1e-12));

  Graph lg;
  NodeId lp = add_log_sinkhorn(lg, lg.param("logits"), lg.constant(lr), lg.constant(lc), 20);
  lg.mark_output("loss", add_association_loss(lg, lp, lg.constant(target)));
  CHECK(grad_check(lg, {}, p, 1e-5) < 1e-4);
}

TEST_CASE("hungarian examples") {
  Array c({4, 4}, 1.0);
  for (std::size_t i = 0; i < 4; ++i) c(i, i) = 0.0;
  const Assignment d = hungarian(c);
  CHECK(d.total_cost == 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(d.pairs[i] == std::make_pair(i, i));

  const Assignment r = hungarian(Array::matrix(1, 3, {5, 2, 7}));
  CHECK(r.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}});
  CHECK(r.total_cost == 2.0);

  const Assignment tall = hungarian(Array::matrix(3, 1, {4, 1, 3}));
  CHECK(tall.pairs == std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}});

  CHECK(hungarian(Array({0, 3})).pairs.empty());
  Array bad({2, 2});
  bad(0, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(hungarian(bad), Error);
}

TEST_CASE("hungarian matches exhaustive enumeration") {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 50; ++t) {
    const Array cost = random_array({6, 6}, rng, 0, 10);
    const Assignment h = hungarian(cost);
    const Brute b = brute_force(cost);
    CHECK(h.total_cost == doctest::Approx(b.cost).epsilon(1e-12));
    CHECK(h.pairs == b.pairs);
  }
  for (int t = 0; t < 20; ++t) {
    const Array cost = random_array({4, 6}, rng, 0, 10);
    const Brute b = brute_force(cost);
    CHECK(hungarian(cost).total_cost == doctest::Approx(b.cost).epsilon(1e-12));
    CHECK(hungarian(cost).pairs == b.pairs);
  }
}

TEST_CASE("hungarian ties resolve to the lexicographically smallest pair list") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    Array cost({5, 5});
    for (double& v : cost.data()) v = static_cast<double>(rng() % 3);
    const Assignment h = hungarian(cost);
    const Brute b = brute_force(cost);
    CHECK(h.total_cost == b.cost);
    CHECK(h.pairs == b.pairs);
  }
  CHECK(hungarian(Array({3, 3}, 1.0)).pairs ==
        std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}, {2, 2}});
}
