#pragma once

// Losses over circuit parameters, derivative-free optimizers, baselines and
// the evaluation harness.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/datagen.h"
#include "qontot/encoder.h"
#include "qontot/neucot.h"
#include "qontot/otsolve.h"

namespace qontot {

enum class LossKind { Transport, Marginal, Dsm };
std::string loss_name(LossKind l);
LossKind loss_from_name(const std::string& s);

enum class OptimizerKind { NelderMead, Spsa, BfgsNumeric };
std::string optimizer_name(OptimizerKind o);
OptimizerKind optimizer_from_name(const std::string& s);

enum class InitKind { Default, Zeros, Uniform };
std::string init_name(InitKind i);
InitKind init_from_name(const std::string& s);

struct TrainConfig {
  LossKind loss = LossKind::Transport;
  OptimizerKind optimizer = OptimizerKind::NelderMead;
  int max_evals = 3000;
  InitKind init = InitKind::Default;  // zeros for simple, U(-0.1, 0.1) for checkerboard
  double init_lo = -0.1;
  double init_hi = 0.1;
  std::int64_t shots = 0;  // 0: exact mode
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Predictions for every distinct context of a batch, computed once each.
/// Transport: row-stochastic patterns; dsm: DSMs. Shots mode draws one
/// sub-stream per context from rng.
std::vector<Matrix> predict_batch(const EncodingSpec& spec, std::span<const double> theta,
                                  const std::vector<Vector>& contexts, std::mt19937_64* rng);

/// sum_i ||D_mu_i f(p_i) - T_i||_F^2.
double loss_transport(const EncodingSpec& spec, std::span<const double> theta, const Dataset& batch,
                      std::mt19937_64* rng = nullptr);
/// sum_i ||(D_mu_i f(p_i))^T 1 - nu_i||_2^2.
double loss_marginal(const EncodingSpec& spec, std::span<const double> theta, const Dataset& batch,
                     std::mt19937_64* rng = nullptr);
/// sum_i ||Q(p_i) - Q_i||_F^2.
double loss_dsm(const EncodingSpec& spec, std::span<const double> theta, const Dataset& batch,
                std::mt19937_64* rng = nullptr);

struct TraceEntry {
  int eval = 0;
  double value = 0.0;
  double best = 0.0;
  std::int64_t shots = 0;  // shots spent by this evaluation
};

struct OptimizeResult {
  std::vector<double> theta;  // best seen
  double best = 0.0;
  std::vector<TraceEntry> trace;
};

using Objective = std::function<double(std::span<const double>)>;

/// Minimizes f from x0 within max_evals evaluations. Returns the best
/// evaluated point. Throws NumericError on a non-finite objective value.
OptimizeResult minimize(const Objective& f, std::vector<double> x0, OptimizerKind kind,
                        int max_evals, std::uint64_t seed, std::int64_t shots_per_eval = 0);

/// Central-difference gradient with step h.
std::vector<double> numeric_gradient(const Objective& f, std::span<const double> x, double h);

/// Trains circuit parameters on the full train set per evaluation.
OptimizeResult optimize(const TrainConfig& cfg, EncodingSpec spec, const Dataset& train);

nlohmann::json trace_to_json(const std::vector<TraceEntry>& trace);

enum class PredictorKind { Qontot, Identity, Average, Neucot };
std::string predictor_name(PredictorKind k);
PredictorKind predictor_from_name(const std::string& s);

struct Predictor {
  PredictorKind kind = PredictorKind::Identity;
  TargetKind task = TargetKind::Transport;
  EncodingSpec spec;             // qontot
  std::vector<double> theta;     // qontot
  Matrix pattern;                // average: row-normalized plan
  std::shared_ptr<MlpModel> mlp; // neucot

  /// Transport: a plan with row marginal mu. DSM task: the predicted matrix.
  Matrix predict(const Vector& p, const Vector& mu, std::mt19937_64* rng = nullptr) const;
};

Predictor baseline_identity(TargetKind task = TargetKind::Transport);
/// One Sinkhorn plan between the mean train marginals (or the mean of the
/// train plans with mean_of_plans), rescaled to each queried mu.
Predictor baseline_average(const Dataset& train, bool mean_of_plans = false);
Predictor qontot_predictor(const EncodingSpec& spec, std::vector<double> theta);
Predictor neucot_predictor(MlpModel model, TargetKind task);

/// Per-sample metrics against the stored plans (or DSMs), mean aggregated.
MetricsSummary evaluate(const Predictor& predictor, const Dataset& test, std::mt19937_64* rng = nullptr);

}  // namespace qontot
