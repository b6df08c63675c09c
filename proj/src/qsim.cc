#include "qontot/qsim.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

#include "qontot/errors.h"

namespace qontot {

namespace {

constexpr Complex kI{0.0, 1.0};

struct GateInfo {
  GateKind kind;
  const char* name;
  int arity;
  int params;
};

constexpr GateInfo kGates[] = {
    {GateKind::H, "H", 1, 0},     {GateKind::X, "X", 1, 0},     {GateKind::CX, "CX", 2, 0},
    {GateKind::RZ, "RZ", 1, 1},   {GateKind::RY, "RY", 1, 1},   {GateKind::SU2, "SU2", 1, 3},
    {GateKind::RXX, "RXX", 2, 1}, {GateKind::RYY, "RYY", 2, 1}, {GateKind::RZZ, "RZZ", 2, 1},
};

const GateInfo& info(GateKind kind) {
  for (const auto& g : kGates) {
    if (g.kind == kind) return g;
  }
  throw ValidationError("unknown gate kind");
}

void check_op(const GateOp& op, int qubits) {
  const GateInfo& g = info(op.kind);
  if (static_cast<int>(op.targets.size()) != g.arity) {
    std::ostringstream os;
    os << "gate " << g.name << " expects " << g.arity << " target(s), got " << op.targets.size();
    throw ValidationError(os.str());
  }
  if (static_cast<int>(op.params.size()) != g.params) {
    std::ostringstream os;
    os << "gate " << g.name << " expects " << g.params << " parameter(s), got "
       << op.params.size();
    throw ValidationError(os.str());
  }
  for (int t : op.targets) {
    if (t < 0 || t >= qubits) {
      std::ostringstream os;
      os << "gate " << g.name << ": qubit index " << t << " outside register of " << qubits;
      throw ValidationError(os.str());
    }
  }
  if (g.arity == 2 && op.targets[0] == op.targets[1]) {
    throw ValidationError(std::string("gate ") + g.name + ": targets must be distinct");
  }
  for (double a : op.params) {
    if (!std::isfinite(a)) {
      throw ValidationError(std::string("gate ") + g.name + ": non-finite angle");
    }
  }
}

using Mat2 = Eigen::Matrix<Complex, 2, 2>;
using Mat4 = Eigen::Matrix<Complex, 4, 4>;

Mat4 kron(const Mat2& a, const Mat2& b) {
  Mat4 out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  }
  return out;
}

Mat2 rz_matrix(double a) {
  Mat2 m = Mat2::Zero();
  m(0, 0) = std::polar(1.0, -a / 2);
  m(1, 1) = std::polar(1.0, a / 2);
  return m;
}

Mat2 ry_matrix(double a) {
  Mat2 m;
  double c = std::cos(a / 2), s = std::sin(a / 2);
  m << c, -s, s, c;
  return m;
}

Mat2 pauli(char axis) {
  Mat2 m;
  switch (axis) {
    case 'X': m << 0, 1, 1, 0; break;
    case 'Y': m << 0, -kI, kI, 0; break;
    default: m << 1, 0, 0, -1; break;
  }
  return m;
}

// exp(-i t/2 P(x)P) = cos(t/2) I - i sin(t/2) P(x)P, since (P(x)P)^2 = I.
Mat4 pauli_rot(char axis, double t) {
  const Mat2 p = pauli(axis);
  return std::cos(t / 2) * Mat4::Identity() - kI * std::sin(t / 2) * kron(p, p);
}

Mat2 one_qubit_gate(const GateOp& op) {
  const double r = 1.0 / std::numbers::sqrt2;
  Mat2 m;
  switch (op.kind) {
    case GateKind::H:
      m << r, r, r, -r;
      return m;
    case GateKind::X:
      return pauli('X');
    case GateKind::RZ:
      return rz_matrix(op.params[0]);
    case GateKind::RY:
      return ry_matrix(op.params[0]);
    case GateKind::SU2:
      return rz_matrix(op.params[0]) * ry_matrix(op.params[1]) * rz_matrix(op.params[2]);
    default:
      throw ValidationError("not a one-qubit gate");
  }
}

Mat4 two_qubit_gate(const GateOp& op) {
  Mat4 m;
  switch (op.kind) {
    case GateKind::CX:
      m.setZero();
      m(0, 0) = m(1, 1) = m(2, 3) = m(3, 2) = 1.0;
      return m;
    case GateKind::RXX:
      return pauli_rot('X', op.params[0]);
    case GateKind::RYY:
      return pauli_rot('Y', op.params[0]);
    case GateKind::RZZ:
      return pauli_rot('Z', op.params[0]);
    default:
      throw ValidationError("not a two-qubit gate");
  }
}

std::uint64_t bit_of(int qubits, int q) { return std::uint64_t{1} << (qubits - 1 - q); }

// Inserts a zero bit at position `pos` of k.
inline std::uint64_t insert_zero(std::uint64_t k, int pos) {
  std::uint64_t low = k & ((std::uint64_t{1} << pos) - 1);
  return ((k >> pos) << (pos + 1)) | low;
}

void check_register(int qubits) {
  if (qubits < 0) throw ValidationError("register size must be non-negative");
  if (qubits > kMaxQubits) {
    std::ostringstream os;
    os << "register of " << qubits << " qubits exceeds the statevector cap of " << kMaxQubits;
    throw CapacityError(os.str());
  }
}

}  // namespace

std::string gate_name(GateKind kind) { return info(kind).name; }

GateKind gate_kind_from_name(const std::string& name) {
  for (const auto& g : kGates) {
    if (name == g.name) return g.kind;
  }
  throw ValidationError("unknown gate kind '" + name + "'");
}

int gate_arity(GateKind kind) { return info(kind).arity; }
int gate_param_count(GateKind kind) { return info(kind).params; }

CMatrix gate_matrix(const GateOp& op) {
  if (info(op.kind).arity == 1) return one_qubit_gate(op);
  return two_qubit_gate(op);
}

ParamCircuit::ParamCircuit(int qubit_count) : qubit_count_(qubit_count) {
  check_register(qubit_count);
}

ParamCircuit& ParamCircuit::add(GateKind kind, std::vector<int> targets,
                                std::vector<double> params) {
  GateOp op{kind, std::move(targets), std::move(params)};
  check_op(op, qubit_count_);
  ops_.push_back(std::move(op));
  return *this;
}

ParamCircuit& ParamCircuit::append(const ParamCircuit& other, int offset) {
  if (offset < 0 || offset + other.qubit_count() > qubit_count_) {
    std::ostringstream os;
    os << "append: fragment of " << other.qubit_count() << " qubits at offset " << offset
       << " does not fit a register of " << qubit_count_;
    throw ValidationError(os.str());
  }
  for (const auto& op : other.ops()) {
    GateOp shifted = op;
    for (int& t : shifted.targets) t += offset;
    ops_.push_back(std::move(shifted));
  }
  return *this;
}

nlohmann::json circuit_to_json(const ParamCircuit& c) {
  nlohmann::json gates = nlohmann::json::array();
  for (const auto& op : c.ops()) {
    gates.push_back({{"kind", gate_name(op.kind)}, {"targets", op.targets}, {"params", op.params}});
  }
  return {{"qubit_count", c.qubit_count()}, {"gates", gates}};
}

ParamCircuit circuit_from_json(const nlohmann::json& j) {
  try {
    ParamCircuit c(j.at("qubit_count").get<int>());
    for (const auto& g : j.at("gates")) {
      std::vector<double> params;
      if (g.contains("params")) params = g.at("params").get<std::vector<double>>();
      c.add(gate_kind_from_name(g.at("kind").get<std::string>()),
            g.at("targets").get<std::vector<int>>(), std::move(params));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("circuit JSON: ") + e.what());
  }
}

StateVector StateVector::basis(int qubits, std::uint64_t index) {
  check_register(qubits);
  const std::uint64_t dim = std::uint64_t{1} << qubits;
  if (index >= dim) {
    std::ostringstream os;
    os << "basis index " << index << " outside a register of dimension " << dim;
    throw ValidationError(os.str());
  }
  std::vector<Complex> amps(dim, Complex{0.0, 0.0});
  amps[index] = 1.0;
  return StateVector(qubits, std::move(amps));
}

StateVector::StateVector(int qubits, std::vector<Complex> amplitudes)
    : qubits_(qubits), amps_(std::move(amplitudes)) {
  check_register(qubits);
  if (amps_.size() != (size_t{1} << qubits)) {
    throw ValidationError("StateVector: amplitude count does not match 2^qubits");
  }
}

double StateVector::norm_squared() const {
  double s = 0.0;
  for (const auto& a : amps_) s += std::norm(a);
  return s;
}

CompiledCircuit::CompiledCircuit(const ParamCircuit& circuit) : qubits_(circuit.qubit_count()) {
  // Greedy fusion: the open group absorbs gates while the union of supports
  // has at most two qubits. A single-qubit group accumulates in `one` until
  // a second wire joins it.
  int hi = -1, lo = -1;
  Mat2 one;
  Mat4 acc;
  auto flush = [&] {
    if (hi < 0) return;
    Block b{hi, lo, {}};
    if (lo < 0) {
      for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) b.m[r * 2 + c] = one(r, c);
      }
    } else {
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) b.m[r * 4 + c] = acc(r, c);
      }
    }
    blocks_.push_back(b);
    hi = lo = -1;
  };
  static const Mat4 kSwap = [] {
    Mat4 m = Mat4::Zero();
    m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1.0;
    return m;
  }();
  // A gate in the local space of the pair (hi, lo).
  auto embed = [&](const GateOp& op) -> Mat4 {
    if (op.targets.size() == 1) {
      const Mat2 g = one_qubit_gate(op);
      return op.targets[0] == hi ? kron(g, Mat2::Identity()) : kron(Mat2::Identity(), g);
    }
    const Mat4 g = two_qubit_gate(op);
    if (op.targets[0] == hi) return g;
    return kSwap * g * kSwap;
  };
  for (const auto& op : circuit.ops()) {
    int support[4], count = 0;
    if (hi >= 0) support[count++] = hi;
    if (lo >= 0) support[count++] = lo;
    for (int t : op.targets) {
      if (std::find(support, support + count, t) == support + count) support[count++] = t;
    }
    if (hi >= 0 && count > 2) flush();
    if (hi < 0) {
      hi = op.targets[0];
      if (op.targets.size() == 2) {
        lo = op.targets[1];
        acc = two_qubit_gate(op);
      } else {
        one = one_qubit_gate(op);
      }
      continue;
    }
    if (lo < 0) {
      if (count == 1) {
        one = one_qubit_gate(op) * one;
        continue;
      }
      // Lift the single-qubit accumulator onto the pair (hi, new wire).
      lo = support[1];
      acc = kron(one, Mat2::Identity());
    }
    acc = embed(op) * acc;
  }
  flush();
}

void CompiledCircuit::apply(StateVector& state) const {
  if (state.qubit_count() != qubits_) {
    throw ValidationError("CompiledCircuit::apply: register size mismatch");
  }
  auto amps = state.mutable_amplitudes();
  const int q = qubits_;
  for (const auto& b : blocks_) {
    const auto& m = b.m;
    if (b.low < 0) {
      const int p = q - 1 - b.high;
      const std::uint64_t mask = std::uint64_t{1} << p;
      const std::uint64_t half = amps.size() / 2;
      for (std::uint64_t k = 0; k < half; ++k) {
        std::uint64_t i0 = insert_zero(k, p), i1 = i0 | mask;
        Complex a0 = amps[i0], a1 = amps[i1];
        amps[i0] = m[0] * a0 + m[1] * a1;
        amps[i1] = m[2] * a0 + m[3] * a1;
      }
      continue;
    }
    const int ph = q - 1 - b.high, pl = q - 1 - b.low;
    const int p0 = std::min(ph, pl), p1 = std::max(ph, pl);
    const std::uint64_t mh = std::uint64_t{1} << ph, ml = std::uint64_t{1} << pl;
    const std::uint64_t quarter = amps.size() / 4;
    for (std::uint64_t k = 0; k < quarter; ++k) {
      std::uint64_t i00 = insert_zero(insert_zero(k, p0), p1);
      std::uint64_t idx[4] = {i00, i00 | ml, i00 | mh, i00 | mh | ml};
      Complex a[4] = {amps[idx[0]], amps[idx[1]], amps[idx[2]], amps[idx[3]]};
      for (int r = 0; r < 4; ++r) {
        amps[idx[r]] = m[4 * r] * a[0] + m[4 * r + 1] * a[1] + m[4 * r + 2] * a[2] +
                       m[4 * r + 3] * a[3];
      }
    }
  }
}

StateVector run_circuit(const ParamCircuit& circuit, std::uint64_t init) {
  StateVector state = StateVector::basis(circuit.qubit_count(), init);
  CompiledCircuit(circuit).apply(state);
  return state;
}

ParamCircuit prepare_bell_pairs(int n) {
  if (n < 0) throw ValidationError("prepare_bell_pairs: n must be non-negative");
  ParamCircuit c(2 * n);
  for (int k = 0; k < n; ++k) c.h(k);
  for (int k = 0; k < n; ++k) c.cx(k, n + k);
  return c;
}

namespace {

void check_subset(const StateVector& state, std::span<const int> qubits) {
  if (qubits.empty()) throw ValidationError("qubit subset must be non-empty");
  for (size_t a = 0; a < qubits.size(); ++a) {
    if (qubits[a] < 0 || qubits[a] >= state.qubit_count()) {
      std::ostringstream os;
      os << "qubit index " << qubits[a] << " outside register of " << state.qubit_count();
      throw ValidationError(os.str());
    }
    for (size_t b = 0; b < a; ++b) {
      if (qubits[a] == qubits[b]) throw ValidationError("qubit subset has duplicate indices");
    }
  }
}

}  // namespace

std::vector<double> marginal_probs(const StateVector& state, std::span<const int> qubits) {
  check_subset(state, qubits);
  const int q = state.qubit_count();
  const size_t k = qubits.size();
  std::vector<double> out(size_t{1} << k, 0.0);
  auto amps = state.amplitudes();
  // Fast path: a contiguous trailing block of qubits in order.
  bool trailing = true;
  for (size_t a = 0; a < k; ++a) trailing &= qubits[a] == q - static_cast<int>(k) + static_cast<int>(a);
  if (trailing) {
    const std::uint64_t mask = (std::uint64_t{1} << k) - 1;
    for (std::uint64_t i = 0; i < amps.size(); ++i) out[i & mask] += std::norm(amps[i]);
    return out;
  }
  for (std::uint64_t i = 0; i < amps.size(); ++i) {
    std::uint64_t o = 0;
    for (size_t a = 0; a < k; ++a) o = (o << 1) | ((i & bit_of(q, qubits[a])) ? 1 : 0);
    out[o] += std::norm(amps[i]);
  }
  return out;
}

std::vector<std::int64_t> sample_counts(std::span<const double> probs, std::int64_t shots,
                                        std::mt19937_64& rng) {
  if (shots < 1) throw ValidationError("sample: shots must be at least 1");
  std::vector<double> cum(probs.size());
  double s = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    s += std::max(probs[i], 0.0);
    cum[i] = s;
  }
  if (!(s > 0.0)) throw NumericError("sample: probability vector has no mass");
  std::uniform_real_distribution<double> unif(0.0, s);
  std::vector<std::int64_t> counts(probs.size(), 0);
  for (std::int64_t t = 0; t < shots; ++t) {
    double u = unif(rng);
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    size_t idx = std::min<size_t>(it - cum.begin(), cum.size() - 1);
    // Never land on a zero-probability outcome at the top boundary.
    while (idx > 0 && probs[idx] <= 0.0) --idx;
    ++counts[idx];
  }
  return counts;
}

std::vector<std::int64_t> sample(const StateVector& state, std::span<const int> qubits,
                                 std::int64_t shots, std::mt19937_64& rng) {
  std::vector<double> p = marginal_probs(state, qubits);
  return sample_counts(p, shots, rng);
}

CMatrix dense_unitary(const ParamCircuit& circuit) {
  const int q = circuit.qubit_count();
  if (q > kMaxDenseQubits) {
    std::ostringstream os;
    os << "dense_unitary: " << q << " qubits exceeds the dense cap of " << kMaxDenseQubits;
    throw CapacityError(os.str());
  }
  const std::uint64_t dim = std::uint64_t{1} << q;
  CMatrix u = CMatrix::Identity(dim, dim);
  // Each gate embedding E has E(r, c) = G(local(r), local(c)) when r and c
  // agree off the targets; U <- E U row by row.
  for (const auto& op : circuit.ops()) {
    CMatrix g = gate_matrix(op);
    const size_t a = op.targets.size();
    std::vector<std::uint64_t> masks;
    for (int t : op.targets) masks.push_back(bit_of(q, t));
    std::uint64_t all = 0;
    for (auto m : masks) all |= m;
    CMatrix next = CMatrix::Zero(dim, dim);
    for (std::uint64_t r = 0; r < dim; ++r) {
      int lr = 0;
      for (size_t k = 0; k < a; ++k) lr = (lr << 1) | ((r & masks[k]) ? 1 : 0);
      const std::uint64_t rest = r & ~all;
      for (int lc = 0; lc < (1 << a); ++lc) {
        Complex e = g(lr, lc);
        if (e == Complex{0.0, 0.0}) continue;
        std::uint64_t c = rest;
        for (size_t k = 0; k < a; ++k) {
          if (lc & (1 << (a - 1 - k))) c |= masks[k];
        }
        next.row(r) += e * u.row(c);
      }
    }
    u = std::move(next);
  }
  return u;
}

}  // namespace qontot
