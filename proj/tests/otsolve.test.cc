#include "qontot/otsolve.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "qontot/errors.h"

using namespace qontot;

namespace {

QuasiDistribution random_dist(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vector w(d);
  for (int i = 0; i < d; ++i) w[i] = u(rng);
  return QuasiDistribution::normalized(w);
}

CostMatrix random_cost(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix pts(d, 3);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < 3; ++j) pts(i, j) = g(rng);
  }
  Matrix c = cost_from_centroids(pts, CostMetric::Euclidean).entries();
  return CostMatrix(c / c.maxCoeff());
}

// Minimum-cost vertex of the 2x2 transportation polytope with uniform
// marginals: the polytope is {[[t, 1/2 - t], [1/2 - t, t]] : 0 <= t <= 1/2}.
Matrix lp_vertex_2x2(const Matrix& c) {
  Matrix best;
  double best_cost = INFINITY;
  for (double t : {0.0, 0.5}) {
    Matrix p(2, 2);
    p << t, 0.5 - t, 0.5 - t, t;
    double cost = (p.array() * c.array()).sum();
    if (cost < best_cost) {
      best_cost = cost;
      best = p;
    }
  }
  return best;
}

}  // namespace

TEST(sinkhorn, constant_cost_gives_independent_coupling) {
  auto u = QuasiDistribution::uniform(2);
  auto p = sinkhorn(u, u, CostMatrix(Matrix::Ones(2, 2)), {0.01});
  ASSERT_LT((p.entries() - Matrix::Constant(2, 2, 0.25)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(sinkhorn, small_gamma_matches_lp_vertex) {
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  auto u = QuasiDistribution::uniform(2);
  auto p = sinkhorn(u, u, CostMatrix(c), {0.01});
  ASSERT_LT((p.entries() - lp_vertex_2x2(c)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(sinkhorn, large_gamma_closed_form_and_limit) {
  // For C = [[0,1],[1,0]] and uniform marginals the Gibbs plan has
  // t^2 / (1/2 - t)^2 = exp(2 / gamma), so t = r / (2 (1 + r)) with r = e^{1/gamma}.
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  auto u = QuasiDistribution::uniform(2);
  for (double gamma : {1.0, 10.0, 1e3}) {
    double r = std::exp(1.0 / gamma);
    double t = r / (2 * (1 + r));
    auto p = sinkhorn(u, u, CostMatrix(c), {gamma});
    ASSERT_NEAR(p.entries()(0, 0), t, 1e-12);
    ASSERT_NEAR(p.entries()(0, 1), 0.5 - t, 1e-12);
  }
  std::mt19937_64 rng(2);
  auto mu = random_dist(5, rng), nu = random_dist(5, rng);
  auto p = sinkhorn(mu, nu, random_cost(5, rng), {1e7});
  Matrix indep = mu.weights() * nu.weights().transpose();
  ASSERT_LT((p.entries() - indep).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(sinkhorn, tiny_gamma_marginals) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto mu = random_dist(8, rng), nu = random_dist(8, rng);
    auto p = sinkhorn(mu, nu, random_cost(8, rng), {0.001});
    ASSERT_LT((p.row_sums() - mu.weights()).cwiseAbs().maxCoeff(), 1e-9);
    ASSERT_LT((p.column_sums() - nu.weights()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(sinkhorn, transpose_symmetry) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    auto mu = random_dist(6, rng), nu = random_dist(6, rng);
    Matrix c = random_cost(6, rng).entries();
    c(0, 3) += 0.3;  // make the cost asymmetric
    auto p = sinkhorn(mu, nu, CostMatrix(c), {0.05});
    auto q = sinkhorn(nu, mu, CostMatrix(c.transpose()), {0.05});
    ASSERT_LT((p.entries().transpose() - q.entries()).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(sinkhorn, cost_below_independent_coupling) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto mu = random_dist(7, rng), nu = random_dist(7, rng);
    Matrix c = random_cost(7, rng).entries();
    for (double gamma : {0.1, 0.01, 0.001}) {
      auto p = sinkhorn(mu, nu, CostMatrix(c), {gamma});
      double ot = (p.entries().array() * c.array()).sum();
      double indep = ((mu.weights() * nu.weights().transpose()).array() * c.array()).sum();
      ASSERT_LE(ot, indep + 1e-9);
    }
  }
}

TEST(sinkhorn, errors) {
  auto u = QuasiDistribution::uniform(2);
  auto heavy = QuasiDistribution(Vector{{0.5, 0.6}});
  Matrix c(2, 2);
  c << 0, 1, 1, 0;
  ASSERT_THROW(sinkhorn(u, heavy, CostMatrix(c), {}), ValidationError);
  auto mu = QuasiDistribution(Vector{{0.3, 0.7}});
  try {
    sinkhorn(mu, u, CostMatrix(c), {0.001, 1e-9, 1});
    FAIL();
  } catch (const NumericError& e) {
    ASSERT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(cost_from_centroids, examples) {
  Matrix same = Matrix::Ones(3, 4);
  ASSERT_EQ(cost_from_centroids(same, CostMetric::Euclidean).entries(), Matrix::Zero(3, 3));
  Matrix e(2, 2);
  e << 1, 0, 0, 1;
  Matrix cos = cost_from_centroids(e, CostMetric::Cosine).entries();
  ASSERT_NEAR(cos(0, 1), 1.0, 1e-15);
  ASSERT_EQ(cos(0, 0), 0.0);
  Matrix pts(2, 2);
  pts << 0, 0, 3, 4;
  Matrix eu = cost_from_centroids(pts, CostMetric::Euclidean).entries();
  ASSERT_EQ(eu(0, 1), 5.0);
  ASSERT_EQ(eu(1, 0), 5.0);
  ASSERT_THROW(cost_from_centroids(pts, CostMetric::Cosine), ValidationError);
}

TEST(metrics, perfect_prediction) {
  Matrix t(2, 2);
  t << 0.3, 0.1, 0.1, 0.5;
  auto m = evaluate_pair(t, t);
  ASSERT_EQ(m.sae, 0.0);
  ASSERT_EQ(m.rel_frob, 0.0);
  ASSERT_EQ(m.l2, 0.0);
  ASSERT_EQ(*m.r2, 1.0);
}

TEST(metrics, hand_example) {
  Matrix pred(2, 2), truth(2, 2);
  pred << 0.3, 0.2, 0.1, 0.4;
  truth << 0.25, 0.25, 0.15, 0.35;
  auto m = evaluate_pair(pred, truth);
  ASSERT_NEAR(m.sae, 0.2, 1e-15);
  ASSERT_NEAR(m.rel_frob, 0.1 / std::sqrt(0.30), 1e-12);
  ASSERT_NEAR(m.rel_frob, 0.1826, 1e-4);
}

TEST(metrics, identity_l2_and_missing_r2) {
  Vector mu{{0.2, 0.3, 0.5}};
  Matrix truth(3, 3);
  truth << 0.1, 0.05, 0.05, 0.1, 0.1, 0.1, 0.0, 0.1, 0.4;
  auto m = evaluate_pair(Matrix(mu.asDiagonal()), truth);
  Vector nu = truth.colwise().sum().transpose();
  ASSERT_NEAR(m.l2, (mu - nu).norm(), 1e-15);

  Matrix flat = Matrix::Constant(3, 3, 1.0 / 9);
  auto f = evaluate_pair(Matrix(mu.asDiagonal()), flat);
  ASSERT_FALSE(f.r2.has_value());
}

TEST(metrics, aggregation_is_mean_and_order_invariant) {
  std::mt19937_64 rng(6);
  std::vector<Metrics> ms;
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 12; ++k) {
    Metrics m{u(rng), u(rng), u(rng), u(rng), k % 4 ? std::optional<double>(u(rng)) : std::nullopt};
    ms.push_back(m);
  }
  auto a = aggregate_metrics(ms);
  double sae = 0;
  for (const auto& m : ms) sae += m.sae;
  ASSERT_NEAR(a.mean.sae, sae / 12, 1e-15);
  ASSERT_EQ(a.r2_missing, 3);
  std::shuffle(ms.begin(), ms.end(), rng);
  auto b = aggregate_metrics(ms);
  ASSERT_NEAR(a.mean.sae, b.mean.sae, 1e-15);
  ASSERT_NEAR(a.mean.rel_frob, b.mean.rel_frob, 1e-15);
  ASSERT_NEAR(*a.mean.r2, *b.mean.r2, 1e-15);
}

TEST(metrics, pooled_r2_perfect_and_json) {
  std::vector<Vector> nu{Vector{{0.2, 0.8}}, Vector{{0.6, 0.4}}};
  ASSERT_EQ(*pooled_r2(nu, nu), 1.0);
  auto j = summary_to_json(aggregate_metrics({Metrics{0.1, 0.2, 0.3, 0.4, std::nullopt}}));
  ASSERT_TRUE(j["r2"].is_null());
  ASSERT_EQ(j["per_sample"].size(), 1u);
}
