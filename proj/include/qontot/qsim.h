#pragma once

// Exact statevector simulation for the gate set used by the ansatz families
// and the encoding circuits.
//
// Bit order: qubit 0 is the most significant bit of a basis index, so for a
// q-qubit register basis state |b_0 b_1 ... b_{q-1}> has index
// sum_k b_k 2^(q-1-k). Outcome indices returned by marginal_probs and sample
// use the same convention restricted to the requested qubit list.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/mathcore.h"

namespace qontot {

inline constexpr int kMaxQubits = 26;
inline constexpr int kMaxDenseQubits = 12;

enum class GateKind { H, X, CX, RZ, RY, SU2, RXX, RYY, RZZ };

std::string gate_name(GateKind kind);
GateKind gate_kind_from_name(const std::string& name);
int gate_arity(GateKind kind);
int gate_param_count(GateKind kind);

/// One gate application. CX targets are (control, target). SU2 params are
/// z-y-z Euler angles (phi, theta, lambda) giving RZ(phi) RY(theta) RZ(lambda).
/// RXX/RYY/RZZ(t) = exp(-i t/2 P(x)P).
struct GateOp {
  GateKind kind;
  std::vector<int> targets;
  std::vector<double> params;
};

/// Gate matrix in the local basis of its targets (first target = high bit).
CMatrix gate_matrix(const GateOp& op);

class ParamCircuit {
 public:
  explicit ParamCircuit(int qubit_count = 0);

  int qubit_count() const { return qubit_count_; }
  const std::vector<GateOp>& ops() const { return ops_; }
  size_t size() const { return ops_.size(); }

  ParamCircuit& add(GateKind kind, std::vector<int> targets, std::vector<double> params = {});
  ParamCircuit& h(int q) { return add(GateKind::H, {q}); }
  ParamCircuit& x(int q) { return add(GateKind::X, {q}); }
  ParamCircuit& cx(int control, int target) { return add(GateKind::CX, {control, target}); }
  ParamCircuit& rz(int q, double angle) { return add(GateKind::RZ, {q}, {angle}); }
  ParamCircuit& ry(int q, double angle) { return add(GateKind::RY, {q}, {angle}); }
  ParamCircuit& su2(int q, double phi, double theta, double lambda) {
    return add(GateKind::SU2, {q}, {phi, theta, lambda});
  }

  /// Appends another circuit with its qubit k mapped to qubit offset + k.
  ParamCircuit& append(const ParamCircuit& other, int offset = 0);

 private:
  int qubit_count_;
  std::vector<GateOp> ops_;
};

nlohmann::json circuit_to_json(const ParamCircuit& c);
/// Validates kinds, arities, parameter counts and qubit indices.
ParamCircuit circuit_from_json(const nlohmann::json& j);

class StateVector {
 public:
  /// Computational basis state |index> on `qubits` qubits.
  static StateVector basis(int qubits, std::uint64_t index);
  StateVector(int qubits, std::vector<Complex> amplitudes);

  int qubit_count() const { return qubits_; }
  size_t dimension() const { return amps_.size(); }
  std::span<const Complex> amplitudes() const { return amps_; }
  std::span<Complex> mutable_amplitudes() { return amps_; }
  Complex operator[](size_t i) const { return amps_[i]; }
  double norm_squared() const;

 private:
  int qubits_;
  std::vector<Complex> amps_;
};

/// Gate program with runs of gates on at most two qubits fused into single
/// 2x2 or 4x4 blocks. Reusable across initial states.
class CompiledCircuit {
 public:
  explicit CompiledCircuit(const ParamCircuit& circuit);

  int qubit_count() const { return qubits_; }
  size_t block_count() const { return blocks_.size(); }
  void apply(StateVector& state) const;

 private:
  struct Block {
    int high;  // qubit carrying the high local bit
    int low;   // -1 for single-qubit blocks
    std::array<Complex, 16> m;
  };
  int qubits_;
  std::vector<Block> blocks_;
};

StateVector run_circuit(const ParamCircuit& circuit, std::uint64_t init);

/// Circuit fragment on 2n qubits preparing 2^(-n/2) sum_i |i>|i> from |0...0>:
/// H on qubit k < n, then CX from k to n + k.
ParamCircuit prepare_bell_pairs(int n);

/// Outcome distribution on `qubits` (qubits[0] is the outcome's high bit).
std::vector<double> marginal_probs(const StateVector& state, std::span<const int> qubits);

/// Seeded shot sampling of the marginal on `qubits`; returns per-outcome counts.
std::vector<std::int64_t> sample(const StateVector& state, std::span<const int> qubits,
                                 std::int64_t shots, std::mt19937_64& rng);

/// Draws `shots` outcomes from a probability vector (cumulative inversion).
std::vector<std::int64_t> sample_counts(std::span<const double> probs, std::int64_t shots,
                                        std::mt19937_64& rng);

/// Full 2^q x 2^q matrix as the ordered product of gate embeddings.
CMatrix dense_unitary(const ParamCircuit& circuit);

}  // namespace qontot
