#include "qontot/neucot.h"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "oracles.h"
#include "qontot/errors.h"

using namespace qontot;

namespace {

Vector to_vec(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), v.size()); }

// Random transport samples with valid plans: T = D_mu R for a random
// row-stochastic R.
Dataset random_transport(int count, int d, int s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Dataset ds;
  ds.meta.d = d;
  ds.meta.k = d;
  ds.meta.context_dim = s;
  ds.meta.cost = Matrix::Zero(d, d);
  for (int i = 0; i < count; ++i) {
    Sample smp;
    smp.context = to_vec(oracle::uniform_vector(s, 0.0, 1.0, rng));
    Vector mu(d);
    for (auto& v : mu) v = u(rng);
    smp.mu = mu / mu.sum();
    Matrix r(d, d);
    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) r(a, b) = u(rng);
    }
    r = r.array().colwise() / r.rowwise().sum().array();
    smp.plan = smp.mu.asDiagonal() * r;
    smp.nu = smp.plan->colwise().sum().transpose();
    ds.samples.push_back(smp);
  }
  return ds;
}

Dataset small_dsm_task(int count, std::mt19937_64& rng) {
  auto spec = make_encoding(TargetKind::Dsm, AnsatzKind::Checkerboard, 2, 2, 1, 1);
  return gen_dsm_dataset(spec, count, -0.8 * M_PI, 0.8 * M_PI, rng);
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7}); }

}  // namespace

TEST(forward, zero_weights_give_uniform_rows) {
  std::mt19937_64 rng(1);
  MlpModel m = make_mlp(2, 4, {8, 16}, 0.4, false, rng);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  Matrix s = forward(m, Vector{{0.3, 0.9}}).entries();
  ASSERT_LT((s - Matrix::Constant(4, 4, 0.25)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(forward, rows_sum_to_one_and_rescale_gives_mu) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    MlpModel m = make_mlp(3, 8, {16, 32}, 0.0, trial % 2 == 1, rng);
    for (auto& v : m.params) v *= 5.0;  // sharpen the softmax
    Vector p = to_vec(oracle::uniform_vector(3, -2.0, 2.0, rng));
    Matrix s = forward(m, p).entries();
    ASSERT_LT((s.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    ASSERT_GE(s.minCoeff(), 0.0);
    Vector w = to_vec(oracle::uniform_vector(8, 0.1, 1.0, rng));
    auto mu = QuasiDistribution::normalized(w);
    auto plan = rescale_rows(forward(m, p), mu);
    ASSERT_LT((plan.row_sums() - mu.weights()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(forward, logit_row_shift_is_local) {
  std::mt19937_64 rng(3);
  MlpModel m = make_mlp(1, 4, {8, 8}, 0.0, false, rng);
  Vector p{{0.4}};
  Matrix before = forward(m, p).entries();
  const int last = m.layer_count() - 1;
  for (int j = 0; j < 4; ++j) m.params[m.bias_offset(last) + 2 * 4 + j] += 3.7;  // row 2
  Matrix after = forward(m, p).entries();
  ASSERT_LT((after - before).cwiseAbs().maxCoeff(), 1e-14);
  m.params[m.bias_offset(last) + 2 * 4 + 1] += 1.0;  // one entry only
  after = forward(m, p).entries();
  for (int i : {0, 1, 3}) ASSERT_EQ(after.row(i), before.row(i));
  ASSERT_GT((after.row(2) - before.row(2)).norm(), 1e-3);
}

TEST(forward, dropout_only_in_train_mode) {
  std::mt19937_64 rng(4);
  MlpModel m = make_mlp(1, 4, {32, 32}, 0.4, false, rng);
  Vector p{{0.7}};
  ASSERT_EQ(forward(m, p).entries(), forward(m, p).entries());
  std::mt19937_64 a(1);
  ASSERT_NE(forward(m, p, true, &a).entries(), forward(m, p).entries());
  ASSERT_THROW(forward(m, p, true, nullptr), ValidationError);
  ASSERT_THROW(forward(m, Vector{{0.1, 0.2}}), ValidationError);
}

TEST(grad, matches_central_differences) {
  std::mt19937_64 rng(5);
  Dataset transport = random_transport(6, 4, 2, rng);
  Dataset dsm = small_dsm_task(6, rng);
  struct Case {
    const Dataset* ds;
    LossOptions opts;
    bool residual;
  };
  std::vector<Case> cases{{&transport, {NeuLoss::Transport, 0.0}, false},
                          {&transport, {NeuLoss::Marginal, 0.0}, true},
                          {&dsm, {NeuLoss::DsmFrobenius, 0.7}, true}};
  for (const auto& c : cases) {
    MlpModel m = make_mlp(c.ds->meta.context_dim, c.ds->meta.d, {8, 12}, 0.4, c.residual, rng);
    for (auto& v : m.params) v += 0.05;  // move biases off zero
    Gradient g = grad(m, *c.ds, c.opts);
    ASSERT_NEAR(g.loss, neucot_loss(m, *c.ds, c.opts), 1e-12);
    std::uniform_int_distribution<size_t> pick(0, m.param_count() - 1);
    for (int k = 0; k < 50; ++k) {
      const size_t i = pick(rng);
      MlpModel plus = m, minus = m;
      plus.params[i] += 1e-5;
      minus.params[i] -= 1e-5;
      const double fd = (neucot_loss(plus, *c.ds, c.opts) - neucot_loss(minus, *c.ds, c.opts)) / 2e-5;
      ASSERT_LE(rel_err(g.flat[i], fd), 1e-4) << "param " << i << " analytic " << g.flat[i] << " fd " << fd;
    }
  }
}

TEST(grad, zero_at_zero_loss) {
  std::mt19937_64 rng(6);
  Dataset ds = small_dsm_task(5, rng);
  MlpModel m = make_mlp(1, 4, {8, 8}, 0.0, false, rng);
  for (auto& s : ds.samples) s.dsm = forward(m, s.context).entries();
  Gradient g = grad(m, ds, {NeuLoss::DsmFrobenius, 0.0});
  ASSERT_LT(g.loss, 1e-30);
  for (double v : g.flat) ASSERT_LT(std::abs(v), 1e-12);
}

TEST(grad, eval_mode_equals_zero_dropout) {
  std::mt19937_64 rng(7);
  Dataset ds = random_transport(4, 4, 1, rng);
  MlpModel m = make_mlp(1, 4, {8, 8}, 0.4, false, rng);
  MlpModel no_drop = m;
  no_drop.dropout_rate = 0.0;
  std::mt19937_64 r(3);
  Gradient a = grad(m, ds, {}, false), b = grad(no_drop, ds, {}, true, &r);
  ASSERT_EQ(a.flat, b.flat);
}

TEST(train_neucot, zero_lr_keeps_model_and_seed_is_reproducible) {
  std::mt19937_64 rng(8);
  Dataset ds = small_dsm_task(20, rng);
  NeuConfig cfg;
  cfg.hidden = {8, 8};
  cfg.dropout_rate = 0.0;
  cfg.lr = 0.0;
  cfg.epochs = 5;
  cfg.loss.loss = NeuLoss::DsmFrobenius;
  auto r = train_neucot(ds, cfg);
  std::mt19937_64 init(cfg.seed);
  ASSERT_EQ(r.model.params, make_mlp(1, 4, {8, 8}, 0.0, false, init).params);

  cfg.lr = 1e-2;
  cfg.dropout_rate = 0.4;
  auto a = train_neucot(ds, cfg), b = train_neucot(ds, cfg);
  ASSERT_EQ(a.model.params, b.model.params);
  ASSERT_EQ(a.val_loss, b.val_loss);
  cfg.loss.loss = NeuLoss::Transport;
  ASSERT_THROW(train_neucot(ds, cfg), ValidationError);
}

TEST(train_neucot, teacher_student_loss_drops) {
  std::mt19937_64 rng(9);
  Dataset ds = small_dsm_task(40, rng);
  NeuConfig cfg;
  cfg.dropout_rate = 0.0;
  cfg.lr = 5e-3;
  cfg.epochs = 500;
  cfg.loss.loss = NeuLoss::DsmFrobenius;
  auto r = train_neucot(ds, cfg);
  ASSERT_EQ(r.train_loss.size(), 501u);
  ASSERT_LE(r.train_loss.back(), 0.1 * r.train_loss.front());
}

TEST(train_neucot, column_penalty_reduces_deviation) {
  std::mt19937_64 rng(10);
  Dataset ds = small_dsm_task(30, rng);
  auto deviation = [&](const MlpModel& m) {
    double dev = 0.0;
    for (const auto& s : ds.samples) {
      dev += (forward(m, s.context).entries().colwise().sum().array() - 1.0).square().sum();
    }
    return dev;
  };
  for (std::uint64_t seed : {1, 2, 3}) {
    NeuConfig cfg;
    cfg.hidden = {16, 32};
    cfg.dropout_rate = 0.0;
    cfg.lr = 5e-3;
    cfg.epochs = 100;
    cfg.val_frac = 0.0;
    cfg.seed = seed;
    cfg.loss.loss = NeuLoss::DsmFrobenius;
    const double off = deviation(train_neucot(ds, cfg).model);
    cfg.loss.dsm_penalty = 5.0;
    const double on = deviation(train_neucot(ds, cfg).model);
    ASSERT_LT(on, off) << "seed " << seed;
  }
}

TEST(mlp_json, roundtrip_and_sizes) {
  std::mt19937_64 rng(11);
  MlpModel m = make_mlp(2, 4, {5, 6}, 0.25, true, rng);
  MlpModel back = mlp_from_json(nlohmann::json::parse(mlp_to_json(m).dump()));
  ASSERT_EQ(back.params, m.params);
  ASSERT_EQ(back.hidden, m.hidden);
  ASSERT_TRUE(back.residual);
  ASSERT_EQ(neucot_size("M"), (std::vector<int>{64, 128}));
  ASSERT_THROW(neucot_size("XL"), ValidationError);
  // context 2 -> 5 -> 6 -> (6 + 2) -> 16
  ASSERT_EQ(m.param_count(), static_cast<size_t>(2 * 5 + 5 + 5 * 6 + 6 + 8 * 16 + 16));
  auto j = mlp_to_json(m);
  j["layers"][1]["bias"] = {1.0};
  ASSERT_THROW(mlp_from_json(j), ValidationError);
}
