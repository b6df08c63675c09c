#pragma once

// Parameterized unitaries U_p(p, theta) acting on aux (m) plus data wires.
//
// Local wire layout of the emitted circuit: aux wires [0, m), then data wires
// [m, m + data_wires). The quadrant selector is data wire `selector`.
// Every angle slot k is bound as base_k + scale_k * p[k mod s]; theta stores
// all bases first, then all scales.

#include <array>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qontot/qsim.h"

namespace qontot {

enum class AnsatzKind { Checkerboard, Simple };

std::string ansatz_kind_name(AnsatzKind k);
AnsatzKind ansatz_kind_from_name(const std::string& name);

/// Angles of one two-qubit checkerboard block.
struct GeneratorParams {
  std::array<double, 3> c_euler{};
  double alpha = 0.0;
  std::array<double, 3> a_euler{};
};

inline constexpr int kGeneratorAngles = 7;

/// Two-qubit block commuting with X on qubit 0, so its matrix has the form
/// I(x)A' + X(x)B' with respect to qubit 0. Qubit 0 carries the Hadamards and
/// the CX controls; C, RZ(alpha) and A act on qubit 1.
ParamCircuit checkerboard_generator(const GeneratorParams& g);

struct AnsatzSpec {
  AnsatzKind kind = AnsatzKind::Checkerboard;
  int data_wires = 1;
  int aux_wires = 1;
  int layers = 1;
  bool shared = false;
  int context_dim = 1;
  int selector = 0;  // data-wire index of the quadrant selector

  int wire_count() const { return aux_wires + data_wires; }
  /// Local index of the selector wire.
  int selector_wire() const { return aux_wires + selector; }
  void validate() const;
};

nlohmann::json ansatz_to_json(const AnsatzSpec& s);
AnsatzSpec ansatz_from_json(const nlohmann::json& j);

/// Brickwork pairs of one layer: even sublayer then odd sublayer, over the
/// wire order (selector, remaining data wires, aux wires).
std::vector<std::array<int, 2>> layer_pairs(const AnsatzSpec& spec);

/// Angle slots of one layer, and over the whole circuit (after sharing).
int angles_per_layer(const AnsatzSpec& spec);
int angle_count(const AnsatzSpec& spec);

/// Learnable reals: two (base, scale) per angle slot.
int param_count(const AnsatzSpec& spec);

/// Bound angles for context p.
std::vector<double> bind_angles(const AnsatzSpec& spec, std::span<const double> theta,
                                std::span<const double> p);

ParamCircuit build_ansatz(const AnsatzSpec& spec, std::span<const double> theta,
                          std::span<const double> p);

/// Zeros for the simple ansatz, uniform(-0.1, 0.1) for the checkerboard.
std::vector<double> default_init(const AnsatzSpec& spec, std::mt19937_64& rng);

}  // namespace qontot
