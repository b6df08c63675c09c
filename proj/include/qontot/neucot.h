#pragma once

// Classical baseline: a feed-forward network whose logits pass through a
// row-wise softmax, so every output is row-stochastic. Gradients are derived
// by hand; training is full-batch Adam.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/datagen.h"
#include "qontot/mathcore.h"

namespace qontot {

struct MlpModel {
  int context_dim = 1;
  int d = 2;
  std::vector<int> hidden{64, 128};
  double dropout_rate = 0.4;
  bool residual = false;  // concatenate the context into the last affine map
  std::vector<double> params;  // per layer: weight (out x in, row-major), then bias

  int layer_count() const { return static_cast<int>(hidden.size()) + 1; }
  int in_dim(int layer) const;
  int out_dim(int layer) const;
  size_t weight_offset(int layer) const;
  size_t bias_offset(int layer) const { return weight_offset(layer) + static_cast<size_t>(out_dim(layer)) * in_dim(layer); }
  size_t param_count() const { return weight_offset(layer_count()); }
};

/// He-normal weights, zero biases.
MlpModel make_mlp(int context_dim, int d, std::vector<int> hidden, double dropout_rate,
                  bool residual, std::mt19937_64& rng);

/// Hidden widths of the named size (XS, S, M, L).
std::vector<int> neucot_size(const std::string& name);

/// Row-softmax of the reshaped logits. Dropout is applied only when
/// train_mode is set, which then needs rng.
RowStochasticMatrix forward(const MlpModel& model, const Vector& p, bool train_mode = false,
                            std::mt19937_64* rng = nullptr);

enum class NeuLoss { Transport, Marginal, DsmFrobenius };
std::string neu_loss_name(NeuLoss l);
NeuLoss neu_loss_from_name(const std::string& s);

struct LossOptions {
  NeuLoss loss = NeuLoss::Transport;
  double dsm_penalty = 0.0;  // weight on ||S^T 1 - 1||^2 for the dsm loss
};

/// Batch loss of the network in eval mode, or with fresh dropout masks.
double neucot_loss(const MlpModel& model, const Dataset& batch, const LossOptions& opts,
                   bool train_mode = false, std::mt19937_64* rng = nullptr);

struct Gradient {
  double loss = 0.0;
  std::vector<double> flat;  // same layout as MlpModel::params
};

/// Exact gradient of the batch loss (summed over samples).
Gradient grad(const MlpModel& model, const Dataset& batch, const LossOptions& opts,
              bool train_mode = false, std::mt19937_64* rng = nullptr);

struct NeuConfig {
  std::vector<int> hidden{64, 128};
  double dropout_rate = 0.4;
  bool residual = false;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 500;
  LossOptions loss;
  double val_frac = 0.1;
  std::uint64_t seed = 1;
};

nlohmann::json neu_config_to_json(const NeuConfig& c);

struct NeuResult {
  MlpModel model;                  // best validation checkpoint
  std::vector<double> train_loss;  // eval-mode loss on the fitting set per epoch, index 0 = before training
  std::vector<double> val_loss;
  int best_epoch = 0;
};

NeuResult train_neucot(const Dataset& train, const NeuConfig& cfg);

nlohmann::json mlp_to_json(const MlpModel& m);
MlpModel mlp_from_json(const nlohmann::json& j);

}  // namespace qontot
