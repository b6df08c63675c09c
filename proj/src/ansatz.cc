#include "qontot/ansatz.h"

#include <sstream>

#include "qontot/errors.h"

namespace qontot {

std::string ansatz_kind_name(AnsatzKind k) {
  return k == AnsatzKind::Checkerboard ? "checkerboard" : "simple";
}

AnsatzKind ansatz_kind_from_name(const std::string& name) {
  if (name == "checkerboard") return AnsatzKind::Checkerboard;
  if (name == "simple") return AnsatzKind::Simple;
  throw ValidationError("unknown ansatz '" + name + "' (expected checkerboard or simple)");
}

ParamCircuit checkerboard_generator(const GeneratorParams& g) {
  ParamCircuit c(2);
  c.su2(1, g.c_euler[0], g.c_euler[1], g.c_euler[2]).h(0);
  c.cx(0, 1).rz(1, g.alpha).cx(0, 1);
  c.su2(1, g.a_euler[0], g.a_euler[1], g.a_euler[2]).h(0);
  return c;
}

void AnsatzSpec::validate() const {
  std::ostringstream os;
  if (data_wires < 1) os << "ansatz needs at least one data wire; ";
  if (aux_wires < 0) os << "aux wire count is negative; ";
  if (layers < 1) os << "layers must be at least 1; ";
  if (context_dim < 0) os << "context_dim is negative; ";
  if (selector < 0 || selector >= data_wires) os << "selector outside the data wires; ";
  if (!os.str().empty()) throw ValidationError("AnsatzSpec: " + os.str());
  if (wire_count() > kMaxQubits) {
    throw CapacityError("AnsatzSpec: " + std::to_string(wire_count()) + " wires exceed the cap of " +
                        std::to_string(kMaxQubits));
  }
}

nlohmann::json ansatz_to_json(const AnsatzSpec& s) {
  return {{"kind", ansatz_kind_name(s.kind)}, {"data_wires", s.data_wires},
          {"aux_wires", s.aux_wires},          {"layers", s.layers},
          {"shared", s.shared},                {"context_dim", s.context_dim},
          {"selector", s.selector}};
}

AnsatzSpec ansatz_from_json(const nlohmann::json& j) {
  AnsatzSpec s;
  try {
    s.kind = ansatz_kind_from_name(j.at("kind").get<std::string>());
    s.data_wires = j.at("data_wires").get<int>();
    s.aux_wires = j.at("aux_wires").get<int>();
    s.layers = j.at("layers").get<int>();
    s.shared = j.at("shared").get<bool>();
    s.context_dim = j.at("context_dim").get<int>();
    s.selector = j.value("selector", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("ansatz JSON: ") + e.what());
  }
  s.validate();
  return s;
}

std::vector<std::array<int, 2>> layer_pairs(const AnsatzSpec& spec) {
  std::vector<int> order{spec.selector_wire()};
  for (int k = 0; k < spec.data_wires; ++k) {
    if (k != spec.selector) order.push_back(spec.aux_wires + k);
  }
  for (int k = 0; k < spec.aux_wires; ++k) order.push_back(k);
  std::vector<std::array<int, 2>> pairs;
  const int w = static_cast<int>(order.size());
  for (int start : {0, 1}) {
    for (int k = start; k + 1 < w; k += 2) pairs.push_back({order[k], order[k + 1]});
  }
  return pairs;
}

int angles_per_layer(const AnsatzSpec& spec) {
  const int pairs = static_cast<int>(layer_pairs(spec).size());
  if (spec.kind == AnsatzKind::Checkerboard) return kGeneratorAngles * pairs;
  return 2 * spec.wire_count() + 3 * pairs;
}

int angle_count(const AnsatzSpec& spec) {
  return angles_per_layer(spec) * (spec.shared ? 1 : spec.layers);
}

int param_count(const AnsatzSpec& spec) { return 2 * angle_count(spec); }

std::vector<double> bind_angles(const AnsatzSpec& spec, std::span<const double> theta,
                                std::span<const double> p) {
  const int a = angle_count(spec);
  if (static_cast<int>(theta.size()) != 2 * a) {
    std::ostringstream os;
    os << "ansatz expects " << 2 * a << " parameters, got " << theta.size();
    throw ValidationError(os.str());
  }
  if (static_cast<int>(p.size()) != spec.context_dim) {
    std::ostringstream os;
    os << "ansatz expects a context of length " << spec.context_dim << ", got " << p.size();
    throw ValidationError(os.str());
  }
  std::vector<double> angles(a);
  const size_t s = p.size();
  for (int k = 0; k < a; ++k) {
    angles[k] = theta[k] + (s ? theta[a + k] * p[k % s] : 0.0);
  }
  return angles;
}

ParamCircuit build_ansatz(const AnsatzSpec& spec, std::span<const double> theta,
                          std::span<const double> p) {
  spec.validate();
  const std::vector<double> angles = bind_angles(spec, theta, p);
  const auto pairs = layer_pairs(spec);
  const int per_layer = angles_per_layer(spec);
  ParamCircuit c(spec.wire_count());
  for (int layer = 0; layer < spec.layers; ++layer) {
    const double* a = angles.data() + (spec.shared ? 0 : layer * per_layer);
    if (spec.kind == AnsatzKind::Checkerboard) {
      for (const auto& pr : pairs) {
        GeneratorParams g{{a[0], a[1], a[2]}, a[3], {a[4], a[5], a[6]}};
        a += kGeneratorAngles;
        ParamCircuit block = checkerboard_generator(g);
        for (const auto& op : block.ops()) {
          std::vector<int> t;
          for (int q : op.targets) t.push_back(pr[q]);
          c.add(op.kind, t, op.params);
        }
      }
    } else {
      for (int w = 0; w < spec.wire_count(); ++w) {
        c.ry(w, *a++);
        c.rz(w, *a++);
      }
      for (const auto& pr : pairs) {
        c.add(GateKind::RXX, {pr[0], pr[1]}, {*a++});
        c.add(GateKind::RYY, {pr[0], pr[1]}, {*a++});
        c.add(GateKind::RZZ, {pr[0], pr[1]}, {*a++});
      }
    }
  }
  return c;
}

std::vector<double> default_init(const AnsatzSpec& spec, std::mt19937_64& rng) {
  std::vector<double> theta(param_count(spec), 0.0);
  if (spec.kind == AnsatzKind::Checkerboard) {
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& t : theta) t = u(rng);
  }
  return theta;
}

}  // namespace qontot
