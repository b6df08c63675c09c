#include "qontot/train.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "qontot/errors.h"
#include "qontot/parallel.h"

namespace qontot {

std::string loss_name(LossKind l) {
  switch (l) {
    case LossKind::Transport: return "transport";
    case LossKind::Marginal: return "marginal";
    case LossKind::Dsm: return "dsm";
  }
  return "";
}

LossKind loss_from_name(const std::string& s) {
  if (s == "transport") return LossKind::Transport;
  if (s == "marginal") return LossKind::Marginal;
  if (s == "dsm") return LossKind::Dsm;
  throw ValidationError("unknown loss '" + s + "' (expected transport, marginal or dsm)");
}

std::string optimizer_name(OptimizerKind o) {
  switch (o) {
    case OptimizerKind::NelderMead: return "nelder_mead";
    case OptimizerKind::Spsa: return "spsa";
    case OptimizerKind::BfgsNumeric: return "bfgs_numeric";
  }
  return "";
}

OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "nelder_mead") return OptimizerKind::NelderMead;
  if (s == "spsa") return OptimizerKind::Spsa;
  if (s == "bfgs_numeric") return OptimizerKind::BfgsNumeric;
  throw ValidationError("unknown optimizer '" + s + "' (expected nelder_mead, spsa or bfgs_numeric)");
}

std::string init_name(InitKind i) {
  switch (i) {
    case InitKind::Default: return "default";
    case InitKind::Zeros: return "zeros";
    case InitKind::Uniform: return "uniform";
  }
  return "";
}

InitKind init_from_name(const std::string& s) {
  if (s == "default") return InitKind::Default;
  if (s == "zeros") return InitKind::Zeros;
  if (s == "uniform") return InitKind::Uniform;
  throw ValidationError("unknown init '" + s + "' (expected default, zeros or uniform)");
}

void TrainConfig::validate() const {
  if (max_evals < 1) throw ValidationError("train: max_evals must be at least 1");
  if (shots < 0) throw ValidationError("train: shots must be at least 1 when sampling");
  if (init == InitKind::Uniform && !(init_lo <= init_hi)) throw ValidationError("train: empty init range");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"loss", loss_name(c.loss)},
          {"optimizer", optimizer_name(c.optimizer)},
          {"max_evals", c.max_evals},
          {"init", init_name(c.init)},
          {"init_lo", c.init_lo},
          {"init_hi", c.init_hi},
          {"mode", c.shots > 0 ? "shots" : "exact"},
          {"shots", c.shots},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.loss = loss_from_name(j.value("loss", loss_name(c.loss)));
    c.optimizer = optimizer_from_name(j.value("optimizer", optimizer_name(c.optimizer)));
    c.max_evals = j.value("max_evals", c.max_evals);
    c.init = init_from_name(j.value("init", init_name(c.init)));
    c.init_lo = j.value("init_lo", c.init_lo);
    c.init_hi = j.value("init_hi", c.init_hi);
    c.shots = j.value("shots", c.shots);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct ContextIndex {
  std::vector<Vector> contexts;
  std::vector<int> of_sample;
};

ContextIndex index_contexts(const Dataset& batch) {
  ContextIndex ix;
  std::map<std::vector<double>, int> seen;
  for (const auto& s : batch.samples) {
    std::vector<double> key(s.context.data(), s.context.data() + s.context.size());
    auto [it, fresh] = seen.emplace(key, static_cast<int>(ix.contexts.size()));
    if (fresh) ix.contexts.push_back(s.context);
    ix.of_sample.push_back(it->second);
  }
  return ix;
}

void require_target(const EncodingSpec& spec, TargetKind t, const char* what) {
  if (spec.target != t) {
    throw ValidationError(std::string(what) + ": encoding target is " + target_name(spec.target));
  }
}

}  // namespace

std::vector<Matrix> predict_batch(const EncodingSpec& spec, std::span<const double> theta,
                                  const std::vector<Vector>& contexts, std::mt19937_64* rng) {
  const int n = static_cast<int>(contexts.size());
  std::vector<std::uint64_t> seeds(n, 0);
  if (!spec.exact()) {
    if (!rng) throw ValidationError("shots mode needs a random generator");
    for (auto& s : seeds) s = (*rng)();
  }
  std::vector<Matrix> out(n);
  parallel_for(n, [&](int i) {
    std::mt19937_64 local(seeds[i]);
    std::mt19937_64* r = spec.exact() ? nullptr : &local;
    std::span<const double> p(contexts[i].data(), contexts[i].size());
    out[i] = spec.target == TargetKind::Transport ? predict_rowstochastic(spec, theta, p, r).entries()
                                                   : predict_dsm(spec, theta, p, r).entries();
  });
  return out;
}

double loss_transport(const EncodingSpec& spec, std::span<const double> theta, const Dataset& batch,
                      std::mt19937_64* rng) {
  require_target(spec, TargetKind::Transport, "loss_transport");
  for (const auto& s : batch.samples) {
    if (!s.plan) throw ValidationError("loss_transport: sample without plan");
  }
  ContextIndex ix = index_contexts(batch);
  std::vector<Matrix> f = predict_batch(spec, theta, ix.contexts, rng);
  double total = 0.0;
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const Sample& s = batch.samples[i];
    total += (s.mu.asDiagonal() * f[ix.of_sample[i]] - *s.plan).squaredNorm();
  }
  return total;
}

double loss_marginal(const EncodingSpec& spec, std::span<const double> theta, const Dataset& batch,
                     std::mt19937_64* rng) {
  require_target(spec, TargetKind::Transport, "loss_marginal");
  ContextIndex ix = index_contexts(batch);
  std::vector<Matrix> f = predict_batch(spec, theta, ix.contexts, rng);
  double total = 0.0;
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const Sample& s = batch.samples[i];
    total += (f[ix.of_sample[i]].transpose() * s.mu - s.nu).squaredNorm();
  }
  return total;
}

double loss_dsm(const EncodingSpec& spec, std::span<const double> theta, const Dataset& batch,
                std::mt19937_64* rng) {
  require_target(spec, TargetKind::Dsm, "loss_dsm");
  if (batch.meta.task != TargetKind::Dsm) throw ValidationError("loss_dsm: dataset task is not dsm");
  ContextIndex ix = index_contexts(batch);
  std::vector<Matrix> q = predict_batch(spec, theta, ix.contexts, rng);
  double total = 0.0;
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const Sample& s = batch.samples[i];
    if (!s.dsm) throw ValidationError("loss_dsm: sample without dsm target");
    total += (q[ix.of_sample[i]] - *s.dsm).squaredNorm();
  }
  return total;
}

namespace {

struct BudgetExhausted {};

// Counts evaluations, keeps the best point and the trace.
class Tracker {
 public:
  Tracker(const Objective& f, int max_evals, std::int64_t shots)
      : f_(f), max_evals_(max_evals), shots_(shots) {}

  double operator()(std::span<const double> x) {
    if (static_cast<int>(result_.trace.size()) >= max_evals_) throw BudgetExhausted{};
    const double v = f_(x);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "objective returned " << v << " at theta = [";
      for (size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
      os << "]";
      throw NumericError(os.str());
    }
    if (result_.trace.empty() || v < result_.best) {
      result_.best = v;
      result_.theta.assign(x.begin(), x.end());
    }
    result_.trace.push_back({static_cast<int>(result_.trace.size()) + 1, v, result_.best, shots_});
    return v;
  }

  int remaining() const { return max_evals_ - static_cast<int>(result_.trace.size()); }
  OptimizeResult& result() { return result_; }

 private:
  const Objective& f_;
  int max_evals_;
  std::int64_t shots_;
  OptimizeResult result_;
};

using Point = std::vector<double>;

// Nelder-Mead with dimension-adaptive coefficients; restarts a collapsed
// simplex around the best vertex.
void nelder_mead(Tracker& f, Point x0) {
  const size_t n = x0.size();
  const double nd = static_cast<double>(std::max<size_t>(n, 1));
  const double alpha = 1.0, beta = 1.0 + 2.0 / nd, rho = 0.75 - 1.0 / (2.0 * nd),
               delta = n > 1 ? 1.0 - 1.0 / nd : 0.5;
  double step = 0.1;
  auto affine = [n](const Point& a, const Point& b, double t) {
    Point r(n);
    for (size_t k = 0; k < n; ++k) r[k] = a[k] + t * (b[k] - a[k]);
    return r;
  };
  while (true) {
    std::vector<Point> xs{x0};
    for (size_t i = 0; i < n; ++i) {
      Point x = x0;
      x[i] += step;
      xs.push_back(x);
    }
    std::vector<double> fs;
    for (const auto& x : xs) fs.push_back(f(x));
    std::vector<size_t> order(n + 1);
    while (true) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return fs[a] < fs[b]; });
      const size_t best = order[0], worst = order[n], second = order[n > 0 ? n - 1 : 0];
      double spread = 0.0;
      for (size_t i = 0; i <= n; ++i) {
        for (size_t k = 0; k < n; ++k) spread = std::max(spread, std::abs(xs[i][k] - xs[best][k]));
      }
      if (spread < 1e-11 || n == 0) break;
      Point c(n, 0.0);
      for (size_t i = 0; i <= n; ++i) {
        if (i == worst) continue;
        for (size_t k = 0; k < n; ++k) c[k] += xs[i][k] / nd;
      }
      Point xr = affine(c, xs[worst], -alpha);
      const double fr = f(xr);
      if (fr < fs[best]) {
        Point xe = affine(c, xr, beta);
        const double fe = f(xe);
        if (fe < fr) {
          xs[worst] = xe, fs[worst] = fe;
        } else {
          xs[worst] = xr, fs[worst] = fr;
        }
        continue;
      }
      if (fr < fs[second]) {
        xs[worst] = xr, fs[worst] = fr;
        continue;
      }
      const bool outside = fr < fs[worst];
      Point xc = outside ? affine(c, xr, rho) : affine(c, xs[worst], rho);
      const double fc = f(xc);
      if (outside ? fc <= fr : fc < fs[worst]) {
        xs[worst] = xc, fs[worst] = fc;
        continue;
      }
      for (size_t i = 0; i <= n; ++i) {
        if (i == best) continue;
        xs[i] = affine(xs[best], xs[i], delta);
        fs[i] = f(xs[i]);
      }
    }
    x0 = f.result().theta;
    step *= 0.5;
    if (step < 1e-9) step = 0.1;
    if (n == 0) return;
  }
}

// Simultaneous perturbation stochastic approximation with standard gain
// exponents; the step gain is calibrated from the first gradient estimates.
void spsa(Tracker& f, Point x, std::mt19937_64& rng) {
  const size_t n = x.size();
  const double c = 0.1, alpha = 0.602, gamma = 0.101;
  const double iters = std::max(1, f.remaining() / 2);
  const double A = 0.1 * iters;
  std::bernoulli_distribution coin(0.5);
  auto estimate = [&](const Point& at, double ck, Point& g) {
    Point delta(n), plus(at), minus(at);
    for (size_t k = 0; k < n; ++k) {
      delta[k] = coin(rng) ? 1.0 : -1.0;
      plus[k] += ck * delta[k];
      minus[k] -= ck * delta[k];
    }
    const double diff = f(plus) - f(minus);
    g.resize(n);
    for (size_t k = 0; k < n; ++k) g[k] = diff / (2.0 * ck * delta[k]);
  };
  Point g;
  double mag = 0.0;
  const int calib = 3;
  for (int i = 0; i < calib; ++i) {
    estimate(x, c, g);
    for (double v : g) mag += std::abs(v) / (calib * std::max<size_t>(n, 1));
  }
  const double a = mag > 0.0 ? 0.1 * std::pow(A + 1.0, alpha) / mag : 0.1;
  for (int k = 0;; ++k) {
    const double ak = a / std::pow(k + 1.0 + A, alpha);
    const double ck = c / std::pow(k + 1.0, gamma);
    estimate(x, ck, g);
    for (size_t i = 0; i < n; ++i) x[i] -= ak * g[i];
  }
}

// Quasi-Newton with central-difference gradients and Armijo backtracking.
void bfgs(Tracker& f, Point x) {
  const size_t n = x.size();
  const double h = 1e-5;
  auto gradient = [&](const Point& at) {
    Eigen::VectorXd g(n);
    Point y = at;
    for (size_t k = 0; k < n; ++k) {
      y[k] = at[k] + h;
      const double fp = f(y);
      y[k] = at[k] - h;
      const double fm = f(y);
      y[k] = at[k];
      g[k] = (fp - fm) / (2.0 * h);
    }
    return g;
  };
  double fx = f(x);
  Eigen::VectorXd g = gradient(x);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  while (true) {
    if (g.norm() < 1e-12) return;
    Eigen::VectorXd dir = -H * g;
    double slope = g.dot(dir);
    if (slope >= 0.0) {
      H.setIdentity();
      dir = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0, ft = fx;
    Point xt(n);
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      for (size_t k = 0; k < n; ++k) xt[k] = x[k] + t * dir[k];
      ft = f(xt);
      if (ft <= fx + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (H.isIdentity()) return;
      H.setIdentity();
      continue;
    }
    Eigen::VectorXd s(n);
    for (size_t k = 0; k < n; ++k) s[k] = xt[k] - x[k];
    Eigen::VectorXd gn = gradient(xt);
    Eigen::VectorXd y = gn - g;
    const double ys = y.dot(s);
    if (ys > 1e-12) {
      if (!scaled) {
        H *= ys / y.squaredNorm();
        scaled = true;
      }
      const double r = 1.0 / ys;
      Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - r * s * y.transpose()) * H * (I - r * y * s.transpose()) + r * s * s.transpose();
    }
    x = xt;
    fx = ft;
    g = gn;
  }
}

}  // namespace

OptimizeResult minimize(const Objective& f, std::vector<double> x0, OptimizerKind kind,
                        int max_evals, std::uint64_t seed, std::int64_t shots_per_eval) {
  if (max_evals < 1) throw ValidationError("minimize: max_evals must be at least 1");
  Tracker tracker(f, max_evals, shots_per_eval);
  std::mt19937_64 rng(seed);
  try {
    switch (kind) {
      case OptimizerKind::NelderMead: nelder_mead(tracker, std::move(x0)); break;
      case OptimizerKind::Spsa: spsa(tracker, std::move(x0), rng); break;
      case OptimizerKind::BfgsNumeric: bfgs(tracker, std::move(x0)); break;
    }
  } catch (const BudgetExhausted&) {
  }
  return std::move(tracker.result());
}

std::vector<double> numeric_gradient(const Objective& f, std::span<const double> x, double h) {
  std::vector<double> y(x.begin(), x.end()), g(x.size());
  for (size_t k = 0; k < x.size(); ++k) {
    y[k] = x[k] + h;
    const double fp = f(y);
    y[k] = x[k] - h;
    const double fm = f(y);
    y[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

OptimizeResult optimize(const TrainConfig& cfg, EncodingSpec spec, const Dataset& train) {
  cfg.validate();
  spec.shots = cfg.shots;
  spec.validate();
  if (train.samples.empty()) throw ValidationError("train: empty training set");
  const bool dsm_loss = cfg.loss == LossKind::Dsm;
  if (dsm_loss != (spec.target == TargetKind::Dsm) || dsm_loss != (train.meta.task == TargetKind::Dsm)) {
    throw ValidationError("train: loss '" + loss_name(cfg.loss) + "' does not match encoding target '" +
                          target_name(spec.target) + "' and dataset task '" +
                          target_name(train.meta.task) + "'");
  }
  if (train.meta.d != spec.d()) throw ValidationError("train: dataset d differs from the encoding");
  if (train.meta.context_dim != spec.ansatz.context_dim) {
    throw ValidationError("train: dataset context_dim differs from the ansatz");
  }
  std::mt19937_64 init_rng(cfg.seed);
  std::vector<double> x0;
  switch (cfg.init) {
    case InitKind::Default: x0 = default_init(spec.ansatz, init_rng); break;
    case InitKind::Zeros: x0.assign(param_count(spec.ansatz), 0.0); break;
    case InitKind::Uniform: {
      std::uniform_real_distribution<double> u(cfg.init_lo, cfg.init_hi);
      x0.resize(param_count(spec.ansatz));
      for (auto& v : x0) v = u(init_rng);
      break;
    }
  }
  std::mt19937_64 shot_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::mt19937_64* rng = spec.exact() ? nullptr : &shot_rng;
  Objective f = [&](std::span<const double> theta) {
    switch (cfg.loss) {
      case LossKind::Transport: return loss_transport(spec, theta, train, rng);
      case LossKind::Marginal: return loss_marginal(spec, theta, train, rng);
      case LossKind::Dsm: return loss_dsm(spec, theta, train, rng);
    }
    return 0.0;
  };
  const std::int64_t per_eval =
      cfg.shots * static_cast<std::int64_t>(index_contexts(train).contexts.size());
  return minimize(f, std::move(x0), cfg.optimizer, cfg.max_evals, cfg.seed, per_eval);
}

nlohmann::json trace_to_json(const std::vector<TraceEntry>& trace) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& t : trace) {
    j.push_back({{"eval", t.eval}, {"value", t.value}, {"best", t.best}, {"shots", t.shots}});
  }
  return j;
}

std::string predictor_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::Qontot: return "qontot";
    case PredictorKind::Identity: return "identity";
    case PredictorKind::Average: return "average";
    case PredictorKind::Neucot: return "neucot";
  }
  return "";
}

PredictorKind predictor_from_name(const std::string& s) {
  if (s == "qontot") return PredictorKind::Qontot;
  if (s == "identity") return PredictorKind::Identity;
  if (s == "average") return PredictorKind::Average;
  if (s == "neucot") return PredictorKind::Neucot;
  throw ValidationError("unknown predictor '" + s + "' (expected qontot, identity, average or neucot)");
}

Matrix Predictor::predict(const Vector& p, const Vector& mu, std::mt19937_64* rng) const {
  const int d = static_cast<int>(mu.size());
  const bool dsm = task == TargetKind::Dsm;
  std::span<const double> ps(p.data(), p.size());
  switch (kind) {
    case PredictorKind::Identity:
      return dsm ? Matrix(Matrix::Identity(d, d)) : Matrix(mu.asDiagonal());
    case PredictorKind::Average:
      if (pattern.rows() != d) throw ValidationError("average predictor: dimension mismatch");
      return mu.asDiagonal() * pattern;
    case PredictorKind::Qontot:
      if (dsm) return predict_dsm(spec, theta, ps, rng).entries();
      return predict_plan(spec, theta, ps, QuasiDistribution(mu), rng).entries();
    case PredictorKind::Neucot: {
      Matrix s = forward(*mlp, p).entries();
      return dsm ? s : Matrix(mu.asDiagonal() * s);
    }
  }
  return {};
}

Predictor baseline_identity(TargetKind task) {
  Predictor p;
  p.kind = PredictorKind::Identity;
  p.task = task;
  return p;
}

Predictor baseline_average(const Dataset& train, bool mean_of_plans) {
  if (train.samples.empty()) throw ValidationError("average baseline: empty training set");
  if (train.meta.task != TargetKind::Transport) throw ValidationError("average baseline: needs a transport task");
  const int d = train.meta.d;
  const double n = static_cast<double>(train.samples.size());
  Matrix plan;
  if (mean_of_plans) {
    plan = Matrix::Zero(d, d);
    for (const auto& s : train.samples) plan += *s.plan / n;
  } else {
    Vector mu = Vector::Zero(d), nu = Vector::Zero(d);
    for (const auto& s : train.samples) {
      mu += s.mu / n;
      nu += s.nu / n;
    }
    plan = padded_sinkhorn(mu, nu, train.meta.cost, train.meta.k, {train.meta.gamma});
  }
  Predictor p;
  p.kind = PredictorKind::Average;
  p.pattern = plan.array().colwise() / plan.rowwise().sum().array();
  return p;
}

Predictor qontot_predictor(const EncodingSpec& spec, std::vector<double> theta) {
  spec.validate();
  if (theta.size() != static_cast<size_t>(param_count(spec.ansatz))) {
    throw ValidationError("qontot predictor: theta length differs from the ansatz parameter count");
  }
  Predictor p;
  p.kind = PredictorKind::Qontot;
  p.task = spec.target;
  p.spec = spec;
  p.theta = std::move(theta);
  return p;
}

Predictor neucot_predictor(MlpModel model, TargetKind task) {
  Predictor p;
  p.kind = PredictorKind::Neucot;
  p.task = task;
  p.mlp = std::make_shared<MlpModel>(std::move(model));
  return p;
}

MetricsSummary evaluate(const Predictor& predictor, const Dataset& test, std::mt19937_64* rng) {
  if (predictor.task != test.meta.task) {
    throw ValidationError("evaluate: predictor task " + target_name(predictor.task) + " differs from dataset task " +
                          target_name(test.meta.task));
  }
  std::vector<Metrics> ms;
  for (const auto& s : test.samples) {
    const Matrix& truth = test.meta.task == TargetKind::Dsm ? *s.dsm : *s.plan;
    ms.push_back(evaluate_pair(predictor.predict(s.context, s.mu, rng), truth));
  }
  return aggregate_metrics(std::move(ms));
}

}  // namespace qontot
