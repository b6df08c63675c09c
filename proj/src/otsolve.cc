#include "qontot/otsolve.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qontot/errors.h"

namespace qontot {

namespace {

// Row i: f_i = gamma (log a_i - LSE_j (g_j - C_ij) / gamma).
void update_potential(const Matrix& cost, const Vector& log_a, const Vector& other, double gamma,
                      bool rows, Vector& out) {
  const Eigen::Index n = rows ? cost.rows() : cost.cols();
  const Eigen::Index k = rows ? cost.cols() : cost.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (Eigen::Index j = 0; j < k; ++j) {
      double c = rows ? cost(i, j) : cost(j, i);
      mx = std::max(mx, (other[j] - c) / gamma);
    }
    double s = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      double c = rows ? cost(i, j) : cost(j, i);
      s += std::exp((other[j] - c) / gamma - mx);
    }
    out[i] = gamma * (log_a[i] - mx - std::log(s));
  }
}

Matrix plan_of(const Matrix& cost, const Vector& f, const Vector& g, double gamma) {
  Matrix p(cost.rows(), cost.cols());
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      p(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / gamma);
    }
  }
  return p;
}

double marginal_residual(const Matrix& p, const Vector& mu, const Vector& nu) {
  double r = (p.rowwise().sum() - mu).cwiseAbs().maxCoeff();
  return std::max(r, (p.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff());
}

// Newton steps on the dual (f, g) with g_{d-1} fixed to remove the shift
// invariance. Converges quadratically where plain sweeps crawl because the
// plan's support is nearly disconnected. Underflowing plan entries make the
// Hessian singular, so the system is damped progressively until a step
// lowers the residual. Returns the final residual.
double newton_polish(const Matrix& c, const Vector& mu, const Vector& nu, double gamma, double tol,
                     int max_steps, int& iter, int max_iter, Vector& f, Vector& g) {
  const Eigen::Index d = c.rows(), n = 2 * d - 1;
  Matrix p = plan_of(c, f, g, gamma);
  double residual = marginal_residual(p, mu, nu);
  for (int step = 0; step < max_steps && residual >= tol && iter < max_iter; ++step) {
    ++iter;
    const Vector r = p.rowwise().sum(), col = p.colwise().sum().transpose();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < d; ++i) {
      h(i, i) = r[i] / gamma;
      rhs[i] = mu[i] - r[i];
      for (Eigen::Index j = 0; j + 1 < d; ++j) h(i, d + j) = h(d + j, i) = p(i, j) / gamma;
    }
    for (Eigen::Index j = 0; j + 1 < d; ++j) {
      h(d + j, d + j) = col[j] / gamma;
      rhs[d + j] = nu[j] - col[j];
    }
    const double scale = h.diagonal().maxCoeff();
    bool improved = false;
    for (double damping = 0.0; !improved && damping <= 1.0; damping = damping == 0.0 ? 1e-14 : damping * 100) {
      Eigen::MatrixXd hd = h;
      hd.diagonal().array() += damping * scale;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hd);
      if (ldlt.info() != Eigen::Success) continue;
      const Eigen::VectorXd delta = ldlt.solve(rhs);
      if (!delta.allFinite()) continue;
      for (double t = 1.0; t > 1e-6; t *= 0.5) {
        Vector f2 = f + t * delta.head(d);
        Vector g2 = g;
        g2.head(d - 1) += t * delta.tail(d - 1);
        Matrix p2 = plan_of(c, f2, g2, gamma);
        const double r2 = marginal_residual(p2, mu, nu);
        if (r2 < residual) {
          f = std::move(f2);
          g = std::move(g2);
          p = std::move(p2);
          residual = r2;
          improved = true;
          break;
        }
      }
    }
    if (!improved) break;
  }
  return residual;
}

}  // namespace

TransportPlan sinkhorn(const QuasiDistribution& mu, const QuasiDistribution& nu,
                       const CostMatrix& cost, const SinkhornConfig& cfg) {
  const int d = mu.size();
  if (nu.size() != d || cost.size() != d) {
    throw ValidationError("sinkhorn: marginal and cost dimensions differ");
  }
  if (std::abs(mu.mass() - nu.mass()) > 1e-9) {
    std::ostringstream os;
    os << "sinkhorn: mass mismatch, sum mu = " << mu.mass() << ", sum nu = " << nu.mass();
    throw ValidationError(os.str());
  }
  if (!(cfg.gamma > 0.0) || !(cfg.tol > 0.0) || cfg.max_iter < 1) {
    throw ValidationError("sinkhorn: gamma and tol must be positive, max_iter at least 1");
  }
  const Matrix& c = cost.entries();
  const Vector log_mu = mu.weights().array().log();
  const Vector log_nu = nu.weights().array().log();
  Vector f = Vector::Zero(d), g = Vector::Zero(d);

  // Annealing stages: halve the regularization from the cost scale.
  std::vector<double> stages;
  for (double eps = std::max(c.maxCoeff(), cfg.gamma); eps > cfg.gamma; eps /= 2) {
    stages.push_back(eps);
  }
  stages.push_back(cfg.gamma);

  int iter = 0;
  double residual = INFINITY;
  for (size_t s = 0; s < stages.size(); ++s) {
    const double eps = stages[s];
    const bool last = s + 1 == stages.size();
    // Intermediate stages only need a warm start.
    const double stage_tol = last ? cfg.tol : std::max(cfg.tol, 1e-4);
    int sweeps = 0;
    while (iter < cfg.max_iter) {
      ++iter;
      ++sweeps;
      update_potential(c, log_mu, g, eps, true, f);
      update_potential(c, log_nu, f, eps, false, g);
      if (iter % 5 == 0 || last) {
        residual = marginal_residual(plan_of(c, f, g, eps), mu.weights(), nu.weights());
        if (residual < stage_tol) break;
      }
      if (sweeps % 200 == 0) {
        residual = newton_polish(c, mu.weights(), nu.weights(), eps, stage_tol, 30, iter, cfg.max_iter, f, g);
        if (residual < stage_tol) break;
      }
    }
    if (iter >= cfg.max_iter) break;
  }
  Matrix p = plan_of(c, f, g, cfg.gamma);
  residual = marginal_residual(p, mu.weights(), nu.weights());
  // A closing row update makes the total mass exact when it keeps the
  // column residual within tolerance.
  if (residual < cfg.tol) {
    Vector f2 = f;
    update_potential(c, log_mu, g, cfg.gamma, true, f2);
    Matrix p2 = plan_of(c, f2, g, cfg.gamma);
    const double r2 = marginal_residual(p2, mu.weights(), nu.weights());
    if (r2 < cfg.tol) {
      p = std::move(p2);
      residual = r2;
    }
  }
  if (!(residual < cfg.tol)) {
    std::ostringstream os;
    os << "sinkhorn: no convergence after " << iter << " iterations (marginal residual "
       << residual << ", gamma " << cfg.gamma << ")";
    throw NumericError(os.str());
  }
  return TransportPlan(std::move(p), mu, nu.weights(), std::max(cfg.tol, 1e-12));
}

std::string cost_metric_name(CostMetric m) {
  return m == CostMetric::Euclidean ? "euclidean" : "cosine";
}

CostMetric cost_metric_from_name(const std::string& s) {
  if (s == "euclidean") return CostMetric::Euclidean;
  if (s == "cosine") return CostMetric::Cosine;
  throw ValidationError("unknown metric '" + s + "' (expected euclidean or cosine)");
}

CostMatrix cost_from_centroids(const Matrix& centroids, CostMetric metric) {
  const Eigen::Index k = centroids.rows();
  if (k < 1) throw ValidationError("cost_from_centroids: need at least one centroid");
  Matrix c = Matrix::Zero(k, k);
  if (metric == CostMetric::Cosine) {
    for (Eigen::Index i = 0; i < k; ++i) {
      if (centroids.row(i).norm() == 0.0) {
        std::ostringstream os;
        os << "cost_from_centroids: centroid " << i << " is the zero vector under cosine";
        throw ValidationError(os.str());
      }
    }
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      double v;
      if (metric == CostMetric::Euclidean) {
        v = (centroids.row(i) - centroids.row(j)).norm();
      } else {
        double cs = centroids.row(i).dot(centroids.row(j)) /
                    (centroids.row(i).norm() * centroids.row(j).norm());
        v = std::max(0.0, 1.0 - cs);
      }
      c(i, j) = c(j, i) = v;
    }
  }
  return CostMatrix(std::move(c));
}

Metrics evaluate_pair(const Matrix& pred, const Matrix& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ValidationError("evaluate_pair: prediction and truth differ in shape");
  }
  Metrics m;
  const Matrix diff = pred - truth;
  m.sae = diff.cwiseAbs().sum();
  m.frob = diff.norm();
  const double pn = pred.norm();
  m.rel_frob = pn > 0.0 ? m.frob / pn : INFINITY;
  const Vector nu_pred = pred.colwise().sum().transpose();
  const Vector nu = truth.colwise().sum().transpose();
  m.l2 = (nu_pred - nu).norm();
  const double var = (nu.array() - nu.mean()).square().sum();
  if (var > 0.0) m.r2 = 1.0 - (nu_pred - nu).squaredNorm() / var;
  return m;
}

MetricsSummary aggregate_metrics(std::vector<Metrics> per_sample) {
  MetricsSummary s;
  s.per_sample = std::move(per_sample);
  const double n = static_cast<double>(s.per_sample.size());
  if (n == 0) throw ValidationError("aggregate_metrics: no samples");
  double r2 = 0.0;
  int r2n = 0;
  for (const auto& m : s.per_sample) {
    s.mean.sae += m.sae / n;
    s.mean.rel_frob += m.rel_frob / n;
    s.mean.frob += m.frob / n;
    s.mean.l2 += m.l2 / n;
    if (m.r2) {
      r2 += *m.r2;
      ++r2n;
    }
  }
  s.r2_missing = static_cast<int>(n) - r2n;
  if (r2n > 0) s.mean.r2 = r2 / r2n;
  return s;
}

std::optional<double> pooled_r2(const std::vector<Vector>& pred_nu,
                                const std::vector<Vector>& truth_nu) {
  if (pred_nu.size() != truth_nu.size() || truth_nu.empty()) {
    throw ValidationError("pooled_r2: mismatched or empty inputs");
  }
  double mean = 0.0, count = 0.0;
  for (const auto& v : truth_nu) {
    mean += v.sum();
    count += static_cast<double>(v.size());
  }
  mean /= count;
  double ss_res = 0.0, ss_tot = 0.0;
  for (size_t k = 0; k < truth_nu.size(); ++k) {
    ss_res += (pred_nu[k] - truth_nu[k]).squaredNorm();
    ss_tot += (truth_nu[k].array() - mean).square().sum();
  }
  if (!(ss_tot > 0.0)) return std::nullopt;
  return 1.0 - ss_res / ss_tot;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j = {{"sae", m.sae}, {"rel_frob", m.rel_frob}, {"frob", m.frob}, {"l2", m.l2}};
  j["r2"] = m.r2 ? nlohmann::json(*m.r2) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json summary_to_json(const MetricsSummary& s) {
  nlohmann::json j = metrics_to_json(s.mean);
  j["r2_missing"] = s.r2_missing;
  j["per_sample"] = nlohmann::json::array();
  for (const auto& m : s.per_sample) j["per_sample"].push_back(metrics_to_json(m));
  return j;
}

}  // namespace qontot
