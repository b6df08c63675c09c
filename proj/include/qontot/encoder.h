#pragma once

// Circuit-to-matrix semantics. The full register holds 2m + nd wires:
// aux first halves [0, m), aux second halves [m, 2m), data [2m, 2m + nd).
// Aux pairs are Bell-entangled, U_p acts on (aux second halves, data), and
// only the data wires are read out.
//
// Target kinds:
//   dsm        nd = n; output is the order-2^n DSM.
//   transport  nd = n + 1; the leading data wire is the quadrant selector,
//              fixed to input 0; the output is a row-stochastic matrix of
//              order d = 2^n (atop: selector output summed out; asis: the
//              selector-0 block renormalized per row).

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/ansatz.h"
#include "qontot/mathcore.h"

namespace qontot {

enum class TargetKind { Transport, Dsm };
enum class Aggregation { Atop, Asis };
enum class RowSampling { Stratified, Uniform };

std::string target_name(TargetKind t);
TargetKind target_from_name(const std::string& s);
std::string aggregation_name(Aggregation a);
Aggregation aggregation_from_name(const std::string& s);

struct EncodingSpec {
  int n = 1;  // d = 2^n entities
  int m = 1;  // aux Bell pairs
  TargetKind target = TargetKind::Transport;
  Aggregation aggregation = Aggregation::Atop;
  AnsatzSpec ansatz;
  std::int64_t shots = 0;  // 0 selects exact mode
  RowSampling row_sampling = RowSampling::Stratified;

  int d() const { return 1 << n; }
  int data_wires() const { return target == TargetKind::Transport ? n + 1 : n; }
  int register_size() const { return 2 * m + data_wires(); }
  bool exact() const { return shots == 0; }
  void validate() const;
};

/// Spec with an ansatz sized to match (aux_wires = m, data_wires per target).
EncodingSpec make_encoding(TargetKind target, AnsatzKind kind, int n, int m, int layers,
                           int context_dim, bool shared = false);

nlohmann::json encoding_to_json(const EncodingSpec& s);
EncodingSpec encoding_from_json(const nlohmann::json& j);

/// Full register circuit: Bell preparation followed by U_p at offset m.
ParamCircuit encoding_circuit(const EncodingSpec& spec, std::span<const double> theta,
                              std::span<const double> p);

/// Order-2^nd DSM of a U_p circuit on m aux + nd data wires (m = 0 allowed).
DoublyStochasticMatrix dsm_of_unitary_circuit(const ParamCircuit& up, int m, int nd);

/// DSM over all data wires (order 2d in transport mode, d in dsm mode).
DoublyStochasticMatrix exact_dsm(const EncodingSpec& spec, std::span<const double> theta,
                                 std::span<const double> p);

/// Output distribution for one input row. Transport mode: selector input 0
/// and the configured aggregation (length d). DSM mode: full data readout.
std::vector<double> row_conditional(const EncodingSpec& spec, std::span<const double> theta,
                                    std::span<const double> p, int row);

/// Shot counts over (row, column). Rows are stratified (ceiling split,
/// remainder to the lowest rows) or drawn uniformly per shot.
FrequencyMatrix sampled_frequency(const EncodingSpec& spec, std::span<const double> theta,
                                  std::span<const double> p, std::int64_t shots,
                                  std::mt19937_64& rng);

/// Exact rows, or KL projection of sampled frequencies in shots mode.
RowStochasticMatrix predict_rowstochastic(const EncodingSpec& spec, std::span<const double> theta,
                                          std::span<const double> p,
                                          std::mt19937_64* rng = nullptr);

/// Exact DSM, or Birkhoff projection of d F in shots mode (dsm target).
DoublyStochasticMatrix predict_dsm(const EncodingSpec& spec, std::span<const double> theta,
                                   std::span<const double> p, std::mt19937_64* rng = nullptr);

TransportPlan predict_plan(const EncodingSpec& spec, std::span<const double> theta,
                           std::span<const double> p, const QuasiDistribution& mu,
                           std::mt19937_64* rng = nullptr);

}  // namespace qontot
