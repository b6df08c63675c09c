#pragma once

// Synthetic dosage-perturbation data: Gamma-Poisson expression with logistic
// dropout, dosage-interpolated perturbations of a fixed responsive gene set,
// k-means cell typing and Sinkhorn ground-truth plans. Also the teacher
// circuit generator for the DSM prediction task.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/encoder.h"
#include "qontot/mathcore.h"
#include "qontot/otsolve.h"

namespace qontot {

enum class PerturbKind { Linear, RecRoot };
std::string perturb_name(PerturbKind k);
PerturbKind perturb_from_name(const std::string& s);

struct GenConfig {
  int genes = 300;
  int base_cells = 1000;
  int batch_cells = 500;
  int batches = 4;
  std::vector<double> dosages;  // empty: `dosage_count` points spaced evenly in [0, 1]
  int dosage_count = 50;
  double responsive_gene_frac = 0.15;
  double unresponsive_cell_frac = 0.10;
  PerturbKind perturbation = PerturbKind::Linear;
  double a = 3.0;
  double b = 1.0;
  double amp_lo = 0.3;
  double amp_hi = 1.0;
  double mean_shape = 2.0;
  double mean_rate = 0.5;
  double dropout_midpoint = 1.0;
  double dropout_slope = -1.0;
  std::optional<double> dropout_override;  // fixed dropout probability
  double library_scale = 0.2;  // log-sd of a mean-one per-cell size factor; 0 disables
  int groups = 1;                          // >1: group-specific gene means
  double group_de_prob = 0.1;
  double group_fac_loc = 0.1;
  double group_fac_scale = 0.4;
  bool resample_base = false;  // fresh base population per dosage
  int clusters = 8;
  CostMetric metric = CostMetric::Euclidean;
  double gamma = 0.001;
  int sinkhorn_max_iter = 200000;  // floored masses converge slowly at small gamma
  int kmeans_restarts = 50;
  int kmeans_max_iter = 300;
  int kmeans_fit_cap = 5000;  // pooled base cells used for fitting, at most
  std::uint64_t seed = 7;

  std::vector<double> dosage_grid() const;
  void validate() const;
};

nlohmann::json gen_config_to_json(const GenConfig& c);
GenConfig gen_config_from_json(const nlohmann::json& j);

/// Gene means per group (rows) and the dropout curve.
struct GeneModel {
  Matrix group_means;  // groups x genes
  double dropout_midpoint = 1.0;
  double dropout_slope = -1.0;
  std::optional<double> dropout_override;
  double library_scale = 0.0;

  double dropout(double mean) const;
};

GeneModel make_gene_model(const GenConfig& cfg, std::mt19937_64& rng);

/// cells x genes counts. Each cell picks a group uniformly; counts are
/// Poisson(size factor * mean) and zeroed with the dropout probability of the
/// gene mean.
Matrix sample_expression(const GeneModel& model, int cells, std::mt19937_64& rng);

/// Responsive genes and their amplitudes, fixed per dataset.
struct PerturbationModel {
  PerturbKind kind = PerturbKind::Linear;
  double a = 3.0;
  double b = 1.0;
  std::vector<int> responsive;     // gene indices
  std::vector<double> amplitude;   // per responsive gene
  double unresponsive_cell_frac = 0.10;

  double effect(double x) const;  // g(x); recroot uses max(x, 1)
};

PerturbationModel make_perturbation_model(const GenConfig& cfg, std::mt19937_64& rng);

/// y = x + dosage * amp * (g(x) - x) on responsive genes of responsive cells,
/// clamped at 0. `fresh` is a new base sample; unresponsive cells are chosen
/// per call.
Matrix perturb(const Matrix& fresh, double dosage, const PerturbationModel& pm,
               std::mt19937_64& rng);

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
};

/// Lloyd iterations from k-means++ seeds; best inertia over restarts.
KMeansResult kmeans(const Matrix& x, int k, std::mt19937_64& rng, int restarts = 50,
                    int max_iter = 300);

/// Nearest-centroid labels.
std::vector<int> assign_clusters(const Matrix& x, const Matrix& centroids);

struct Sample {
  Vector context;
  Vector mu;
  Vector nu;
  std::optional<Matrix> plan;
  std::optional<Matrix> dsm;
};

struct DatasetMeta {
  int d = 0;
  int k = 0;  // real clusters; d - k padded entries
  TargetKind task = TargetKind::Transport;
  double gamma = 0.0;
  Matrix cost;
  std::uint64_t seed = 0;
  int context_dim = 1;
  nlohmann::json generator;  // echo of the generating configuration
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Sample> samples;

  Dataset subset(const std::vector<int>& idx) const;
};

/// Cluster frequencies with the epsilon floor and renormalization.
Vector cluster_frequencies(const std::vector<int>& labels, int d, double eps = 1e-6);

/// Sinkhorn on the leading k x k block; padded entries keep their mass on
/// the diagonal. mu and nu carry the floored padded masses.
Matrix padded_sinkhorn(const Vector& mu, const Vector& nu, const Matrix& cost, int k,
                       const SinkhornConfig& cfg);

Dataset build_dataset(const GenConfig& cfg);

enum class SplitKind { Random, Extrapolation };
struct SplitResult {
  std::vector<int> train;
  std::vector<int> test;
};

/// Held-out contexts move as a whole. Random: round(frac * contexts) drawn
/// with rng. Extrapolation: the top round(frac * contexts) by first context
/// component.
SplitResult split(const Dataset& ds, SplitKind kind, double frac, std::mt19937_64& rng);

/// Teacher-student DSM task: theta ~ U(lo, hi), contexts ~ U[0,1]^s.
Dataset gen_dsm_dataset(const EncodingSpec& spec, int count, double lo, double hi,
                        std::mt19937_64& rng, std::vector<double>* teacher_theta = nullptr);

nlohmann::json dataset_to_json(const Dataset& ds);
/// Validates marginals, plan and DSM invariants.
Dataset dataset_from_json(const nlohmann::json& j);

}  // namespace qontot
