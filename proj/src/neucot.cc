#include "qontot/neucot.h"

#include <cmath>
#include <numeric>
#include <sstream>

#include "qontot/errors.h"

namespace qontot {

namespace {

using ConstMap = Eigen::Map<const Matrix>;

struct Trace {
  std::vector<Vector> input;  // input to each affine map
  std::vector<Vector> pre;    // pre-activation of each hidden layer
  std::vector<Vector> mask;   // dropout scaling per hidden layer
  Matrix s;                   // row-softmax output
};

ConstMap weight(const MlpModel& m, int l) {
  return ConstMap(m.params.data() + m.weight_offset(l), m.out_dim(l), m.in_dim(l));
}

Eigen::Map<const Vector> bias(const MlpModel& m, int l) {
  return Eigen::Map<const Vector>(m.params.data() + m.bias_offset(l), m.out_dim(l));
}

Matrix row_softmax(const Vector& logits, int d) {
  Matrix s(d, d);
  for (int i = 0; i < d; ++i) {
    const Vector row = logits.segment(static_cast<Eigen::Index>(i) * d, d);
    const double mx = row.maxCoeff();
    Vector e = (row.array() - mx).exp();
    s.row(i) = (e / e.sum()).transpose();
  }
  return s;
}

Trace run(const MlpModel& m, const Vector& p, bool train_mode, std::mt19937_64* rng) {
  if (p.size() != m.context_dim) {
    std::ostringstream os;
    os << "neucot: context has " << p.size() << " entries, model expects " << m.context_dim;
    throw ValidationError(os.str());
  }
  const bool drop = train_mode && m.dropout_rate > 0.0;
  if (drop && !rng) throw ValidationError("neucot: dropout in train mode needs a random generator");
  std::bernoulli_distribution keep(1.0 - m.dropout_rate);
  Trace t;
  Vector a = p;
  const int hidden = m.layer_count() - 1;
  for (int l = 0; l < hidden; ++l) {
    t.input.push_back(a);
    Vector z = weight(m, l) * a + bias(m, l);
    Vector mask = Vector::Ones(z.size());
    if (drop) {
      for (Eigen::Index k = 0; k < z.size(); ++k) mask[k] = keep(*rng) ? 1.0 / (1.0 - m.dropout_rate) : 0.0;
    }
    a = z.cwiseMax(0.0).cwiseProduct(mask);
    t.pre.push_back(std::move(z));
    t.mask.push_back(std::move(mask));
  }
  if (m.residual) {
    Vector cat(a.size() + p.size());
    cat << a, p;
    a = std::move(cat);
  }
  t.input.push_back(a);
  Vector logits = weight(m, hidden) * a + bias(m, hidden);
  t.s = row_softmax(logits, m.d);
  return t;
}

const Matrix& target_of(const Sample& s, NeuLoss loss) {
  if (loss == NeuLoss::DsmFrobenius) {
    if (!s.dsm) throw ValidationError("neucot: dsm loss needs dsm targets");
    return *s.dsm;
  }
  if (loss == NeuLoss::Transport && !s.plan) throw ValidationError("neucot: transport loss needs plans");
  static const Matrix none;
  return s.plan ? *s.plan : none;
}

// Loss of one sample and its derivative with respect to S.
double sample_loss(const Matrix& s, const Sample& smp, const LossOptions& opts, Matrix* ds) {
  const Matrix& target = target_of(smp, opts.loss);
  switch (opts.loss) {
    case NeuLoss::Transport: {
      const Matrix diff = smp.mu.asDiagonal() * s - target;
      if (ds) *ds = 2.0 * (smp.mu.asDiagonal() * diff);
      return diff.squaredNorm();
    }
    case NeuLoss::Marginal: {
      const Vector r = s.transpose() * smp.mu - smp.nu;
      if (ds) *ds = 2.0 * smp.mu * r.transpose();
      return r.squaredNorm();
    }
    case NeuLoss::DsmFrobenius: {
      const Matrix diff = s - target;
      const Vector col = s.colwise().sum().transpose().array() - 1.0;
      if (ds) {
        *ds = 2.0 * diff;
        ds->rowwise() += 2.0 * opts.dsm_penalty * col.transpose();
      }
      return diff.squaredNorm() + opts.dsm_penalty * col.squaredNorm();
    }
  }
  return 0.0;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("neucot: non-finite ") + what);
}

}  // namespace

int MlpModel::in_dim(int layer) const {
  if (layer == 0) return hidden.empty() ? context_dim + (residual ? context_dim : 0) : context_dim;
  const int prev = hidden[layer - 1];
  return layer == layer_count() - 1 && residual ? prev + context_dim : prev;
}

int MlpModel::out_dim(int layer) const {
  return layer == layer_count() - 1 ? d * d : hidden[layer];
}

size_t MlpModel::weight_offset(int layer) const {
  size_t off = 0;
  for (int l = 0; l < layer; ++l) off += static_cast<size_t>(out_dim(l)) * (in_dim(l) + 1);
  return off;
}

MlpModel make_mlp(int context_dim, int d, std::vector<int> hidden, double dropout_rate,
                  bool residual, std::mt19937_64& rng) {
  if (context_dim < 1 || d < 1) throw ValidationError("neucot: context_dim and d must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ValidationError("neucot: dropout must be in [0, 1)");
  for (int w : hidden) {
    if (w < 1) throw ValidationError("neucot: hidden widths must be positive");
  }
  MlpModel m;
  m.context_dim = context_dim;
  m.d = d;
  m.hidden = std::move(hidden);
  m.dropout_rate = dropout_rate;
  m.residual = residual;
  m.params.assign(m.param_count(), 0.0);
  for (int l = 0; l < m.layer_count(); ++l) {
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / m.in_dim(l)));
    const size_t n = static_cast<size_t>(m.out_dim(l)) * m.in_dim(l);
    for (size_t k = 0; k < n; ++k) m.params[m.weight_offset(l) + k] = g(rng);
  }
  return m;
}

std::vector<int> neucot_size(const std::string& name) {
  if (name == "XS") return {16, 32};
  if (name == "S") return {32, 64};
  if (name == "M") return {64, 128};
  if (name == "L") return {512, 1024};
  throw ValidationError("unknown NeuCOT size '" + name + "' (expected XS, S, M or L)");
}

RowStochasticMatrix forward(const MlpModel& model, const Vector& p, bool train_mode,
                            std::mt19937_64* rng) {
  return RowStochasticMatrix(run(model, p, train_mode, rng).s);
}

std::string neu_loss_name(NeuLoss l) {
  switch (l) {
    case NeuLoss::Transport: return "transport";
    case NeuLoss::Marginal: return "marginal";
    case NeuLoss::DsmFrobenius: return "dsm";
  }
  return "";
}

NeuLoss neu_loss_from_name(const std::string& s) {
  if (s == "transport") return NeuLoss::Transport;
  if (s == "marginal") return NeuLoss::Marginal;
  if (s == "dsm") return NeuLoss::DsmFrobenius;
  throw ValidationError("unknown loss '" + s + "' (expected transport, marginal or dsm)");
}

double neucot_loss(const MlpModel& model, const Dataset& batch, const LossOptions& opts,
                   bool train_mode, std::mt19937_64* rng) {
  double total = 0.0;
  for (const auto& s : batch.samples) total += sample_loss(run(model, s.context, train_mode, rng).s, s, opts, nullptr);
  return total;
}

Gradient grad(const MlpModel& model, const Dataset& batch, const LossOptions& opts,
              bool train_mode, std::mt19937_64* rng) {
  if (batch.samples.empty()) throw ValidationError("neucot: empty batch");
  Gradient g;
  g.flat.assign(model.param_count(), 0.0);
  const int d = model.d;
  const int last = model.layer_count() - 1;
  for (const auto& smp : batch.samples) {
    Trace t = run(model, smp.context, train_mode, rng);
    Matrix ds;
    g.loss += sample_loss(t.s, smp, opts, &ds);
    // Row softmax backward: dM_ij = S_ij (dS_ij - sum_k S_ik dS_ik).
    Vector delta(static_cast<Eigen::Index>(d) * d);
    for (int i = 0; i < d; ++i) {
      const double dot = t.s.row(i).dot(ds.row(i));
      for (int j = 0; j < d; ++j) delta[i * d + j] = t.s(i, j) * (ds(i, j) - dot);
    }
    for (int l = last; l >= 0; --l) {
      const Vector& in = t.input[l];
      Eigen::Map<Matrix> dw(g.flat.data() + model.weight_offset(l), model.out_dim(l), model.in_dim(l));
      Eigen::Map<Vector> db(g.flat.data() + model.bias_offset(l), model.out_dim(l));
      dw.noalias() += delta * in.transpose();
      db += delta;
      if (l == 0) break;
      Vector up = weight(model, l).transpose() * delta;
      const Vector& z = t.pre[l - 1];
      const Vector& mask = t.mask[l - 1];
      Vector next(z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k) next[k] = z[k] > 0.0 ? up[k] * mask[k] : 0.0;
      delta = std::move(next);
    }
  }
  check_finite(g.loss, "loss");
  return g;
}

nlohmann::json neu_config_to_json(const NeuConfig& c) {
  return {{"hidden", c.hidden},     {"dropout", c.dropout_rate}, {"residual", c.residual},
          {"lr", c.lr},             {"beta1", c.beta1},          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps}, {"epochs", c.epochs},        {"loss", neu_loss_name(c.loss.loss)},
          {"dsm_penalty", c.loss.dsm_penalty}, {"val_frac", c.val_frac}, {"seed", c.seed}};
}

NeuResult train_neucot(const Dataset& train, const NeuConfig& cfg) {
  if (train.samples.empty()) throw ValidationError("neucot: empty training set");
  if (cfg.epochs < 0 || !(cfg.lr >= 0.0)) throw ValidationError("neucot: invalid epochs or learning rate");
  if (!(cfg.val_frac >= 0.0 && cfg.val_frac < 1.0)) throw ValidationError("neucot: val_frac must be in [0, 1)");
  const bool dsm_task = train.meta.task == TargetKind::Dsm;
  if (dsm_task != (cfg.loss.loss == NeuLoss::DsmFrobenius)) {
    throw ValidationError("neucot: loss '" + neu_loss_name(cfg.loss.loss) + "' does not match the " +
                          target_name(train.meta.task) + " task");
  }
  std::mt19937_64 rng(cfg.seed);
  NeuResult r;
  r.model = make_mlp(train.meta.context_dim, train.meta.d, cfg.hidden, cfg.dropout_rate, cfg.residual, rng);

  // Seeded validation split for checkpointing.
  std::vector<int> order(train.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  int n_val = static_cast<int>(std::lround(cfg.val_frac * order.size()));
  if (n_val >= static_cast<int>(order.size())) n_val = static_cast<int>(order.size()) - 1;
  Dataset val = train.subset({order.begin(), order.begin() + n_val});
  Dataset fit = train.subset({order.begin() + n_val, order.end()});

  MlpModel model = r.model;
  const size_t np = model.param_count();
  std::vector<double> m1(np, 0.0), m2(np, 0.0);
  double best = INFINITY;
  auto record = [&](int epoch) {
    r.train_loss.push_back(neucot_loss(model, fit, cfg.loss));
    double v = n_val > 0 ? neucot_loss(model, val, cfg.loss) : r.train_loss.back();
    check_finite(v, "validation loss");
    r.val_loss.push_back(v);
    if (v < best) {
      best = v;
      r.best_epoch = epoch;
      r.model = model;
    }
  };
  record(0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Gradient g = grad(model, fit, cfg.loss, true, &rng);
    const double b1t = 1.0 - std::pow(cfg.beta1, epoch);
    const double b2t = 1.0 - std::pow(cfg.beta2, epoch);
    for (size_t k = 0; k < np; ++k) {
      m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g.flat[k];
      m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g.flat[k] * g.flat[k];
      model.params[k] -= cfg.lr * (m1[k] / b1t) / (std::sqrt(m2[k] / b2t) + cfg.adam_eps);
    }
    record(epoch);
  }
  return r;
}

nlohmann::json mlp_to_json(const MlpModel& m) {
  nlohmann::json layers = nlohmann::json::array();
  for (int l = 0; l < m.layer_count(); ++l) {
    nlohmann::json w = nlohmann::json::array();
    ConstMap wm = weight(m, l);
    for (Eigen::Index i = 0; i < wm.rows(); ++i) {
      w.push_back(std::vector<double>(wm.row(i).data(), wm.row(i).data() + wm.cols()));
    }
    auto b = bias(m, l);
    layers.push_back({{"weight", w}, {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  return {{"architecture",
           {{"context_dim", m.context_dim},
            {"d", m.d},
            {"hidden", m.hidden},
            {"dropout", m.dropout_rate},
            {"residual", m.residual}}},
          {"layers", layers}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  MlpModel m;
  try {
    const auto& a = j.at("architecture");
    m.context_dim = a.at("context_dim").get<int>();
    m.d = a.at("d").get<int>();
    m.hidden = a.at("hidden").get<std::vector<int>>();
    m.dropout_rate = a.at("dropout").get<double>();
    m.residual = a.at("residual").get<bool>();
    m.params.assign(m.param_count(), 0.0);
    const auto& layers = j.at("layers");
    if (static_cast<int>(layers.size()) != m.layer_count()) throw ValidationError("neucot JSON: layer count mismatch");
    for (int l = 0; l < m.layer_count(); ++l) {
      const auto& w = layers[l].at("weight");
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (static_cast<int>(w.size()) != m.out_dim(l) || static_cast<int>(b.size()) != m.out_dim(l)) {
        throw ValidationError("neucot JSON: layer shape mismatch");
      }
      for (int i = 0; i < m.out_dim(l); ++i) {
        const auto row = w[i].get<std::vector<double>>();
        if (static_cast<int>(row.size()) != m.in_dim(l)) throw ValidationError("neucot JSON: layer shape mismatch");
        std::copy(row.begin(), row.end(), m.params.begin() + m.weight_offset(l) + static_cast<size_t>(i) * m.in_dim(l));
      }
      std::copy(b.begin(), b.end(), m.params.begin() + m.bias_offset(l));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("neucot JSON: ") + e.what());
  }
  for (double v : m.params) {
    if (!std::isfinite(v)) throw ValidationError("neucot JSON: non-finite weight");
  }
  return m;
}

}  // namespace qontot
