#include "qontot/encoder.h"

#include <numeric>
#include <sstream>

#include "qontot/errors.h"

namespace qontot {

std::string target_name(TargetKind t) { return t == TargetKind::Transport ? "transport" : "dsm"; }

TargetKind target_from_name(const std::string& s) {
  if (s == "transport") return TargetKind::Transport;
  if (s == "dsm") return TargetKind::Dsm;
  throw ValidationError("unknown target '" + s + "' (expected transport or dsm)");
}

std::string aggregation_name(Aggregation a) { return a == Aggregation::Atop ? "atop" : "asis"; }

Aggregation aggregation_from_name(const std::string& s) {
  if (s == "atop") return Aggregation::Atop;
  if (s == "asis") return Aggregation::Asis;
  throw ValidationError("unknown aggregation '" + s + "' (expected atop or asis)");
}

void EncodingSpec::validate() const {
  std::ostringstream os;
  if (n < 1) os << "n must be at least 1; ";
  if (m < 1) os << "m must be at least 1; ";
  if (shots < 0) os << "shots must be non-negative; ";
  if (ansatz.aux_wires != m) os << "ansatz aux wires must equal m; ";
  if (ansatz.data_wires != data_wires()) {
    os << "ansatz must act on " << data_wires() << " data wires; ";
  }
  if (!os.str().empty()) throw ValidationError("EncodingSpec: " + os.str());
  ansatz.validate();
  if (register_size() > kMaxQubits) {
    std::ostringstream cap;
    cap << "EncodingSpec: register of " << register_size() << " qubits exceeds the cap of "
        << kMaxQubits;
    throw CapacityError(cap.str());
  }
}

EncodingSpec make_encoding(TargetKind target, AnsatzKind kind, int n, int m, int layers,
                           int context_dim, bool shared) {
  EncodingSpec s;
  s.n = n;
  s.m = m;
  s.target = target;
  s.ansatz.kind = kind;
  s.ansatz.data_wires = s.data_wires();
  s.ansatz.aux_wires = m;
  s.ansatz.layers = layers;
  s.ansatz.shared = shared;
  s.ansatz.context_dim = context_dim;
  s.ansatz.selector = 0;
  return s;
}

nlohmann::json encoding_to_json(const EncodingSpec& s) {
  return {{"n", s.n},
          {"m", s.m},
          {"target", target_name(s.target)},
          {"aggregation", aggregation_name(s.aggregation)},
          {"ansatz", ansatz_to_json(s.ansatz)},
          {"shots", s.shots},
          {"row_sampling", s.row_sampling == RowSampling::Stratified ? "stratified" : "uniform"}};
}

EncodingSpec encoding_from_json(const nlohmann::json& j) {
  EncodingSpec s;
  try {
    s.n = j.at("n").get<int>();
    s.m = j.at("m").get<int>();
    s.target = target_from_name(j.at("target").get<std::string>());
    s.aggregation = aggregation_from_name(j.value("aggregation", std::string("atop")));
    s.ansatz = ansatz_from_json(j.at("ansatz"));
    s.shots = j.value("shots", std::int64_t{0});
    std::string rs = j.value("row_sampling", std::string("stratified"));
    if (rs != "stratified" && rs != "uniform") throw ValidationError("unknown row_sampling " + rs);
    s.row_sampling = rs == "uniform" ? RowSampling::Uniform : RowSampling::Stratified;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("encoding JSON: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

ParamCircuit full_register(const ParamCircuit& up, int m, int nd) {
  if (up.qubit_count() != m + nd) {
    throw ValidationError("U_p circuit does not act on m + nd wires");
  }
  ParamCircuit c(2 * m + nd);
  c.append(prepare_bell_pairs(m), 0);
  c.append(up, m);
  return c;
}

// Readout distribution over all nd data wires for data input `row`.
std::vector<double> data_distribution(const CompiledCircuit& compiled, int m, int nd,
                                      std::uint64_t row) {
  StateVector state = StateVector::basis(2 * m + nd, row);
  compiled.apply(state);
  std::vector<int> data(nd);
  std::iota(data.begin(), data.end(), 2 * m);
  return marginal_probs(state, data);
}

std::vector<double> fold(const EncodingSpec& spec, const std::vector<double>& full) {
  if (spec.target == TargetKind::Dsm) return full;
  const int d = spec.d();
  std::vector<double> out(d);
  if (spec.aggregation == Aggregation::Atop) {
    for (int j = 0; j < d; ++j) out[j] = full[j] + full[d + j];
    return out;
  }
  double s = 0.0;
  for (int j = 0; j < d; ++j) s += full[j];
  if (!(s > 0.0)) throw NumericError("asis aggregation: selector-0 block has no mass");
  for (int j = 0; j < d; ++j) out[j] = full[j] / s;
  return out;
}

Matrix rows_matrix(const std::vector<std::vector<double>>& rows) {
  const int r = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows.front().size());
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = rows[i][j];
  }
  return m;
}

// The distributions are exact up to rounding; renormalize each row so the
// stochastic invariants hold at the 1e-9 level for any register size.
void renormalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  for (double& x : v) x /= s;
}

}  // namespace

ParamCircuit encoding_circuit(const EncodingSpec& spec, std::span<const double> theta,
                              std::span<const double> p) {
  spec.validate();
  return full_register(build_ansatz(spec.ansatz, theta, p), spec.m, spec.data_wires());
}

DoublyStochasticMatrix dsm_of_unitary_circuit(const ParamCircuit& up, int m, int nd) {
  if (m < 0 || nd < 1) throw ValidationError("dsm_of_unitary_circuit: invalid wire counts");
  CompiledCircuit compiled(full_register(up, m, nd));
  const int order = 1 << nd;
  std::vector<std::vector<double>> rows(order);
  for (int i = 0; i < order; ++i) rows[i] = data_distribution(compiled, m, nd, i);
  return DoublyStochasticMatrix(rows_matrix(rows));
}

DoublyStochasticMatrix exact_dsm(const EncodingSpec& spec, std::span<const double> theta,
                                 std::span<const double> p) {
  spec.validate();
  return dsm_of_unitary_circuit(build_ansatz(spec.ansatz, theta, p), spec.m, spec.data_wires());
}

std::vector<double> row_conditional(const EncodingSpec& spec, std::span<const double> theta,
                                    std::span<const double> p, int row) {
  if (row < 0 || row >= spec.d()) {
    std::ostringstream os;
    os << "row_conditional: row " << row << " outside [0, " << spec.d() << ")";
    throw ValidationError(os.str());
  }
  CompiledCircuit compiled(encoding_circuit(spec, theta, p));
  // In transport mode the selector is the data high bit, so input row i with
  // selector 0 is data index i.
  return fold(spec, data_distribution(compiled, spec.m, spec.data_wires(), row));
}

namespace {

std::vector<std::vector<double>> all_rows(const EncodingSpec& spec, std::span<const double> theta,
                                          std::span<const double> p) {
  CompiledCircuit compiled(encoding_circuit(spec, theta, p));
  std::vector<std::vector<double>> rows(spec.d());
  for (int i = 0; i < spec.d(); ++i) {
    rows[i] = data_distribution(compiled, spec.m, spec.data_wires(), i);
  }
  return rows;
}

}  // namespace

FrequencyMatrix sampled_frequency(const EncodingSpec& spec, std::span<const double> theta,
                                  std::span<const double> p, std::int64_t shots,
                                  std::mt19937_64& rng) {
  if (shots < 1) throw ValidationError("sampled_frequency: shots must be at least 1");
  const int d = spec.d();
  std::vector<std::int64_t> per_row(d, 0);
  if (spec.row_sampling == RowSampling::Stratified) {
    for (int i = 0; i < d; ++i) per_row[i] = shots / d + (i < shots % d ? 1 : 0);
  } else {
    std::uniform_int_distribution<int> pick(0, d - 1);
    for (std::int64_t s = 0; s < shots; ++s) ++per_row[pick(rng)];
  }
  const auto rows = all_rows(spec, theta, p);
  std::vector<std::int64_t> counts(static_cast<size_t>(d) * d, 0);
  for (int i = 0; i < d; ++i) {
    if (per_row[i] == 0) continue;
    auto c = sample_counts(rows[i], per_row[i], rng);
    for (size_t j = 0; j < c.size(); ++j) {
      // Transport: atop folds the selector outcome; asis discards selector-1 shots.
      size_t col = j;
      if (spec.target == TargetKind::Transport) {
        if (j >= static_cast<size_t>(d) && spec.aggregation == Aggregation::Asis) continue;
        col = j % d;
      }
      counts[static_cast<size_t>(i) * d + col] += c[j];
    }
  }
  return FrequencyMatrix(d, std::move(counts));
}

RowStochasticMatrix predict_rowstochastic(const EncodingSpec& spec, std::span<const double> theta,
                                          std::span<const double> p, std::mt19937_64* rng) {
  if (spec.exact()) {
    auto rows = all_rows(spec, theta, p);
    for (auto& r : rows) {
      r = fold(spec, r);
      renormalize(r);
    }
    return RowStochasticMatrix(rows_matrix(rows));
  }
  if (!rng) throw ValidationError("shots mode needs a random generator");
  return kl_project_rowstochastic(sampled_frequency(spec, theta, p, spec.shots, *rng));
}

DoublyStochasticMatrix predict_dsm(const EncodingSpec& spec, std::span<const double> theta,
                                   std::span<const double> p, std::mt19937_64* rng) {
  if (spec.target != TargetKind::Dsm) {
    throw ValidationError("predict_dsm requires a dsm target encoding");
  }
  if (spec.exact()) return exact_dsm(spec, theta, p);
  if (!rng) throw ValidationError("shots mode needs a random generator");
  FrequencyMatrix f = sampled_frequency(spec, theta, p, spec.shots, *rng);
  return birkhoff_project(spec.d() * f.relative());
}

TransportPlan predict_plan(const EncodingSpec& spec, std::span<const double> theta,
                           std::span<const double> p, const QuasiDistribution& mu,
                           std::mt19937_64* rng) {
  if (mu.size() != spec.d()) {
    std::ostringstream os;
    os << "predict_plan: mu has " << mu.size() << " entries, expected " << spec.d();
    throw ValidationError(os.str());
  }
  return rescale_rows(predict_rowstochastic(spec, theta, p, rng), mu);
}

}  // namespace qontot
