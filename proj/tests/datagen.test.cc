#include "qontot/datagen.h"

#include <cmath>
#include <random>
#include <set>

#include "gtest/gtest.h"
#include "qontot/errors.h"

using namespace qontot;

namespace {

GenConfig small_config() {
  GenConfig c;
  c.genes = 40;
  c.base_cells = 300;
  c.batch_cells = 150;
  c.batches = 2;
  c.dosage_count = 6;
  c.clusters = 6;
  c.kmeans_restarts = 5;
  c.seed = 11;
  return c;
}

}  // namespace

TEST(expression, full_dropout_gives_zeros) {
  GenConfig c = small_config();
  c.dropout_override = 1.0;
  std::mt19937_64 rng(1);
  auto model = make_gene_model(c, rng);
  ASSERT_TRUE(sample_expression(model, 200, rng).isZero());
}

TEST(expression, no_dropout_means_match) {
  GenConfig c = small_config();
  c.dropout_override = 0.0;
  std::mt19937_64 rng(2);
  auto model = make_gene_model(c, rng);
  Matrix x = sample_expression(model, 10000, rng);
  Vector mean = x.colwise().mean().transpose();
  int checked = 0;
  for (int g = 0; g < c.genes; ++g) {
    const double mu = model.group_means(0, g);
    // Poisson standard error at 10^4 cells is below 1% once the mean is >= 1.
    if (mu < 1.0) continue;
    ++checked;
    ASSERT_NEAR(mean[g], mu, 0.05 * mu) << "gene " << g;
  }
  ASSERT_GT(checked, c.genes / 2);
}

TEST(expression, dropout_curve) {
  GeneModel m;
  ASSERT_NEAR(m.dropout(std::exp(1.0)), 0.5, 1e-15);
  ASSERT_NEAR(m.dropout(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  ASSERT_GT(m.dropout(0.5), m.dropout(5.0));
  ASSERT_EQ(m.dropout(0.0), 1.0);
}

TEST(expression, seed_determinism) {
  GenConfig c = small_config();
  std::mt19937_64 a(5), b(5);
  auto ma = make_gene_model(c, a), mb = make_gene_model(c, b);
  ASSERT_EQ(sample_expression(ma, 50, a), sample_expression(mb, 50, b));
}

TEST(expression, groups_differ_only_on_de_genes) {
  GenConfig c = small_config();
  c.groups = 4;
  c.genes = 500;
  std::mt19937_64 rng(6);
  auto m = make_gene_model(c, rng);
  ASSERT_EQ(m.group_means.rows(), 4);
  // Without DE every group equals the base; with probability 0.1 per gene a
  // fold change applies, so roughly 10% of entries move.
  int changed = 0;
  GenConfig flat = c;
  flat.group_de_prob = 0.0;
  std::mt19937_64 r2(6);
  auto base = make_gene_model(flat, r2);
  for (int k = 0; k < 4; ++k) {
    for (int g = 0; g < c.genes; ++g) changed += m.group_means(k, g) != base.group_means(k, g);
  }
  const double n = 4.0 * c.genes, p = 0.1;
  ASSERT_NEAR(changed, n * p, 4 * std::sqrt(n * p * (1 - p)));
}

TEST(perturb, linear_example) {
  PerturbationModel pm;
  pm.kind = PerturbKind::Linear;
  pm.a = 3;
  pm.b = 1;
  pm.responsive = {0};
  pm.amplitude = {1.0};
  pm.unresponsive_cell_frac = 0.0;
  Matrix x(1, 2);
  x << 2, 2;
  std::mt19937_64 rng(0);
  Matrix y = perturb(x, 1.0, pm, rng);
  ASSERT_EQ(y(0, 0), 7.0);
  ASSERT_EQ(y(0, 1), 2.0);
  ASSERT_EQ(perturb(x, 0.0, pm, rng), x);
  ASSERT_NEAR(perturb(x, 0.5, pm, rng)(0, 0), 4.5, 1e-15);
  ASSERT_THROW(perturb(x, 1.5, pm, rng), ValidationError);
}

TEST(perturb, recroot_finite_at_zero_and_nonnegative) {
  PerturbationModel pm;
  pm.kind = PerturbKind::RecRoot;
  pm.a = 100;
  pm.b = 0.2;
  ASSERT_EQ(pm.effect(0.0), 100.0);
  ASSERT_NEAR(pm.effect(32.0), 100.0 / 2.0, 1e-12);
  pm.responsive = {0, 1};
  pm.amplitude = {1.0, 0.5};
  pm.unresponsive_cell_frac = 0.0;
  Matrix x(3, 2);
  x << 0, 0, 1, 1e6, 50, 3;
  std::mt19937_64 rng(0);
  Matrix y = perturb(x, 1.0, pm, rng);
  ASSERT_TRUE(y.allFinite());
  ASSERT_GE(y.minCoeff(), 0.0);
}

TEST(perturb, unresponsive_fraction_is_exact) {
  PerturbationModel pm;
  pm.responsive = {0};
  pm.amplitude = {1.0};
  pm.unresponsive_cell_frac = 0.1;
  Matrix x = Matrix::Constant(200, 1, 2.0);
  std::mt19937_64 rng(3);
  Matrix y = perturb(x, 1.0, pm, rng);
  ASSERT_EQ((y.array() == 2.0).count(), 20);
  ASSERT_EQ((y.array() == 7.0).count(), 180);
}

TEST(kmeans, separated_blobs) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  Matrix x(400, 3);
  for (int i = 0; i < 400; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = g(rng) + (i < 200 ? 0.0 : 10.0);
  }
  auto r = kmeans(x, 2, rng, 5);
  int agree = 0;
  for (int i = 0; i < 400; ++i) agree += (r.labels[i] == r.labels[0]) == (i < 200);
  ASSERT_GE(agree, 396);
}

TEST(kmeans, single_cluster_is_mean) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  Matrix x(50, 4);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = u(rng);
  }
  auto r = kmeans(x, 1, rng, 2);
  ASSERT_LT((r.centroids.row(0) - x.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(kmeans, duplicates_share_labels_and_assign_matches) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u;
  Matrix x(60, 3);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = u(rng);
    x.row(30 + i) = x.row(i);
  }
  auto r = kmeans(x, 4, rng, 3);
  for (int i = 0; i < 30; ++i) ASSERT_EQ(r.labels[i], r.labels[30 + i]);
  ASSERT_EQ(assign_clusters(x, r.centroids), r.labels);
  ASSERT_THROW(kmeans(x.topRows(2), 3, rng), ValidationError);
}

TEST(frequencies, floor_and_renormalize) {
  Vector f = cluster_frequencies({0, 0, 1, 1}, 4);
  ASSERT_NEAR(f.sum(), 1.0, 1e-15);
  ASSERT_GT(f.minCoeff(), 0.0);
  ASSERT_NEAR(f[2], 1e-6 / (1 + 2e-6), 1e-18);
  ASSERT_NEAR(f[0], 0.5 / (1 + 2e-6), 1e-15);
}

TEST(padded_sinkhorn, padding_stays_diagonal) {
  Vector mu = cluster_frequencies({0, 1, 2, 2, 1}, 4);
  Vector nu = cluster_frequencies({0, 0, 2, 1, 1}, 4);
  Matrix c = Matrix::Ones(4, 4);
  c.diagonal().setZero();
  Matrix p = padded_sinkhorn(mu, nu, c, 3, {0.01});
  ASSERT_EQ(p(3, 3), mu[3]);
  ASSERT_EQ(p.row(3).head(3).norm(), 0.0);
  ASSERT_EQ(p.col(3).head(3).norm(), 0.0);
  ASSERT_LT((p.rowwise().sum() - mu).cwiseAbs().maxCoeff(), 1e-9);
  ASSERT_LT((p.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(dataset, default_shape_and_invariants) {
  GenConfig c = small_config();
  Dataset ds = build_dataset(c);
  ASSERT_EQ(ds.samples.size(), 12u);
  ASSERT_EQ(ds.meta.d, 8);
  ASSERT_EQ(ds.meta.k, 6);
  ASSERT_EQ(ds.meta.cost.maxCoeff(), 1.0);
  for (const auto& s : ds.samples) {
    ASSERT_TRUE(s.plan.has_value());
    ASSERT_GT(s.mu.minCoeff(), 0.0);
    ASSERT_EQ(s.mu, ds.samples[0].mu);  // one shared base population
    ASSERT_LT((s.plan->rowwise().sum() - s.mu).cwiseAbs().maxCoeff(), 1e-6);
    ASSERT_LT((s.plan->colwise().sum().transpose() - s.nu).cwiseAbs().maxCoeff(), 1e-6);
    ASSERT_NEAR(s.nu.sum(), 1.0, 1e-9);
  }
  // Dosage 0 moves nothing systematically, so mass stays mostly on the diagonal.
  for (int b = 0; b < c.batches; ++b) {
    const Matrix& p = *ds.samples[b].plan;
    ASSERT_EQ(ds.samples[b].context[0], 0.0);
    ASSERT_GT(p.trace(), 0.5);
  }
}

TEST(dataset, deterministic_and_json_roundtrip) {
  GenConfig c = small_config();
  c.dosage_count = 3;
  Dataset a = build_dataset(c), b = build_dataset(c);
  ASSERT_EQ(dataset_to_json(a).dump(), dataset_to_json(b).dump());
  Dataset r = dataset_from_json(nlohmann::json::parse(dataset_to_json(a).dump()));
  ASSERT_EQ(r.samples.size(), a.samples.size());
  ASSERT_EQ(*r.samples[2].plan, *a.samples[2].plan);
  ASSERT_EQ(r.meta.cost, a.meta.cost);
  c.seed = 12;
  ASSERT_NE(dataset_to_json(build_dataset(c)).dump(), dataset_to_json(a).dump());
}

TEST(dataset, loader_rejects_broken_samples) {
  GenConfig c = small_config();
  c.dosage_count = 2;
  auto j = dataset_to_json(build_dataset(c));
  auto bad_plan = j;
  bad_plan["samples"][0]["plan"][0][0] = 0.5;
  ASSERT_THROW(dataset_from_json(bad_plan), ValidationError);
  auto bad_mu = j;
  bad_mu["samples"][1]["mu"][0] = -0.1;
  ASSERT_THROW(dataset_from_json(bad_mu), ValidationError);
  auto bad_ctx = j;
  bad_ctx["samples"][0]["context"] = {0.1, 0.2};
  ASSERT_THROW(dataset_from_json(bad_ctx), ValidationError);
  auto missing = j;
  missing["samples"][0].erase("plan");
  ASSERT_THROW(dataset_from_json(missing), ValidationError);
}

TEST(dataset, config_validation) {
  GenConfig c = small_config();
  c.unresponsive_cell_frac = 1.5;
  ASSERT_THROW(build_dataset(c), ValidationError);
  c = small_config();
  c.dosages = {0.0, 2.0};
  ASSERT_THROW(c.validate(), ValidationError);
  auto j = gen_config_to_json(small_config());
  ASSERT_EQ(gen_config_to_json(gen_config_from_json(j)), j);
  j["perturbation"] = "cubic";
  ASSERT_THROW(gen_config_from_json(j), ValidationError);
}

namespace {

Dataset dosage_only(int contexts, int per) {
  Dataset ds;
  ds.meta.context_dim = 1;
  for (int i = 0; i < contexts; ++i) {
    for (int b = 0; b < per; ++b) {
      Sample s;
      s.context = Vector::Constant(1, static_cast<double>(i) / (contexts - 1));
      ds.samples.push_back(s);
    }
  }
  return ds;
}

std::set<double> contexts_of(const Dataset& ds, const std::vector<int>& idx) {
  std::set<double> out;
  for (int i : idx) out.insert(ds.samples[i].context[0]);
  return out;
}

}  // namespace

TEST(split, random_moves_whole_contexts) {
  Dataset ds = dosage_only(50, 4);
  std::mt19937_64 rng(1);
  auto s = split(ds, SplitKind::Random, 0.2, rng);
  auto test = contexts_of(ds, s.test), train = contexts_of(ds, s.train);
  ASSERT_EQ(test.size(), 10u);
  ASSERT_EQ(s.test.size(), 40u);
  ASSERT_EQ(s.train.size() + s.test.size(), 200u);
  for (double t : test) ASSERT_EQ(train.count(t), 0u);
  std::mt19937_64 again(1);
  auto s2 = split(ds, SplitKind::Random, 0.2, again);
  ASSERT_EQ(s.test, s2.test);
}

TEST(split, extrapolation_takes_top_contexts) {
  Dataset ds = dosage_only(50, 4);
  std::mt19937_64 rng(1);
  auto s = split(ds, SplitKind::Extrapolation, 0.2, rng);
  auto test = contexts_of(ds, s.test), train = contexts_of(ds, s.train);
  ASSERT_EQ(test.size(), 10u);
  ASSERT_LT(*train.rbegin(), *test.begin());
  ASSERT_EQ(*test.rbegin(), 1.0);
}

TEST(split, degenerate_fractions) {
  Dataset ds = dosage_only(3, 1);
  std::mt19937_64 rng(1);
  ASSERT_EQ(split(ds, SplitKind::Random, 0.01, rng).test.size(), 0u + 1);
  ASSERT_THROW(split(ds, SplitKind::Random, 0.0, rng), ValidationError);
  ASSERT_THROW(split(dosage_only(2, 1).subset({0}), SplitKind::Random, 0.5, rng), ValidationError);
}

TEST(dsm_dataset, valid_targets_and_identity_teacher) {
  auto spec = make_encoding(TargetKind::Dsm, AnsatzKind::Checkerboard, 2, 2, 1, 2);
  std::mt19937_64 rng(4);
  std::vector<double> teacher;
  Dataset ds = gen_dsm_dataset(spec, 40, -1.0, 1.0, rng, &teacher);
  ASSERT_EQ(ds.samples.size(), 40u);
  ASSERT_EQ(teacher.size(), static_cast<size_t>(param_count(spec.ansatz)));
  for (const auto& s : ds.samples) {
    ASSERT_TRUE(s.dsm.has_value());
    DoublyStochasticMatrix q(*s.dsm);
    ASSERT_EQ(q.size(), 4);
    ASSERT_GE(s.context.minCoeff(), 0.0);
    ASSERT_LE(s.context.maxCoeff(), 1.0);
  }
  Dataset id = gen_dsm_dataset(spec, 5, 0.0, 0.0, rng);
  for (const auto& s : id.samples) {
    ASSERT_LT((*s.dsm - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
  }
  auto back = dataset_from_json(dataset_to_json(ds));
  ASSERT_EQ(*back.samples[7].dsm, *ds.samples[7].dsm);
  auto transport = make_encoding(TargetKind::Transport, AnsatzKind::Checkerboard, 2, 1, 1, 1);
  ASSERT_THROW(gen_dsm_dataset(transport, 5, 0, 1, rng), ValidationError);
}
