#pragma once

// Entropic OT ground truth, centroid costs and evaluation metrics.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/mathcore.h"

namespace qontot {

struct SinkhornConfig {
  double gamma = 0.001;
  double tol = 1e-9;
  int max_iter = 10000;
};

/// Log-domain Sinkhorn with geometric annealing of the regularization from
/// max(C) down to gamma. max_iter bounds the total number of sweeps.
TransportPlan sinkhorn(const QuasiDistribution& mu, const QuasiDistribution& nu,
                       const CostMatrix& cost, const SinkhornConfig& cfg = {});

enum class CostMetric { Euclidean, Cosine };
std::string cost_metric_name(CostMetric m);
CostMetric cost_metric_from_name(const std::string& s);

/// Pairwise distances between the rows of `centroids`.
CostMatrix cost_from_centroids(const Matrix& centroids, CostMetric metric);

struct Metrics {
  double sae = 0.0;
  double rel_frob = 0.0;  // ||pred - truth||_F / ||pred||_F
  double frob = 0.0;      // ||pred - truth||_F
  double l2 = 0.0;        // ||nu_pred - nu_truth||_2 on column sums
  std::optional<double> r2;
};

Metrics evaluate_pair(const Matrix& pred, const Matrix& truth);
inline Metrics evaluate_pair(const TransportPlan& pred, const TransportPlan& truth) {
  return evaluate_pair(pred.entries(), truth.entries());
}

struct MetricsSummary {
  Metrics mean;  // arithmetic mean; r2 averaged over samples where defined
  std::vector<Metrics> per_sample;
  int r2_missing = 0;
};

MetricsSummary aggregate_metrics(std::vector<Metrics> per_sample);

/// R^2 pooled over all samples' column marginals instead of averaged.
std::optional<double> pooled_r2(const std::vector<Vector>& pred_nu,
                                const std::vector<Vector>& truth_nu);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json summary_to_json(const MetricsSummary& s);

}  // namespace qontot
