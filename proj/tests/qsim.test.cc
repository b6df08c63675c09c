#include "qontot/qsim.h"

#include <cmath>
#include <numbers>
#include <random>

#include "gtest/gtest.h"
#include "qontot/errors.h"

using namespace qontot;

namespace {

ParamCircuit random_circuit(int q, int gates, std::mt19937_64& rng) {
  ParamCircuit c(q);
  std::uniform_int_distribution<int> kind(0, 8), wire(0, q - 1);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  for (int g = 0; g < gates; ++g) {
    auto k = static_cast<GateKind>(kind(rng));
    if (gate_arity(k) == 2 && q < 2) k = GateKind::SU2;
    std::vector<int> t{wire(rng)};
    if (gate_arity(k) == 2) {
      int b;
      do b = wire(rng);
      while (b == t[0]);
      t.push_back(b);
    }
    std::vector<double> p;
    for (int i = 0; i < gate_param_count(k); ++i) p.push_back(angle(rng));
    c.add(k, t, p);
  }
  return c;
}

double max_diff(std::span<const Complex> a, const Eigen::Ref<const Eigen::VectorXcd>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(run_circuit, empty_circuit) {
  auto s = run_circuit(ParamCircuit(3), 0);
  ASSERT_EQ(s[0], Complex(1.0, 0.0));
  for (size_t i = 1; i < s.dimension(); ++i) ASSERT_EQ(s[i], Complex(0.0, 0.0));
}

TEST(run_circuit, hadamard) {
  ParamCircuit c(1);
  c.h(0);
  auto s = run_circuit(c, 0);
  ASSERT_NEAR(s[0].real(), 1 / std::sqrt(2.0), 1e-15);
  ASSERT_NEAR(s[1].real(), 1 / std::sqrt(2.0), 1e-15);
}

TEST(run_circuit, x_is_involution) {
  ParamCircuit c(3);
  c.x(1).x(1);
  for (std::uint64_t i = 0; i < 8; ++i) {
    auto s = run_circuit(c, i);
    ASSERT_NEAR(std::abs(s[i]), 1.0, 1e-15);
  }
}

TEST(run_circuit, index_errors) {
  ParamCircuit c(2);
  ASSERT_THROW(c.h(2), ValidationError);
  ASSERT_THROW(c.cx(1, 1), ValidationError);
  ASSERT_THROW(run_circuit(c, 4), ValidationError);
  ASSERT_THROW(ParamCircuit(27), CapacityError);
}

TEST(run_circuit, matches_dense_unitary_on_random_circuits) {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    int q = 1 + trial % 8;
    auto c = random_circuit(q, 5 + 3 * q, rng);
    CMatrix u = dense_unitary(c);
    ASSERT_LT(unitarity_residual(u), 1e-9);
    std::uint64_t init = trial % (1u << q);
    auto s = run_circuit(c, init);
    ASSERT_LT(std::abs(s.norm_squared() - 1.0), 1e-9);
    ASSERT_LT(max_diff(s.amplitudes(), u.col(init)), 1e-10) << "q=" << q;
  }
}

TEST(run_circuit, fusion_reduces_block_count) {
  ParamCircuit c(3);
  c.h(0).cx(0, 1).rz(1, 0.3).cx(0, 1).h(0).ry(2, 0.1).cx(1, 2);
  CompiledCircuit compiled(c);
  ASSERT_LT(compiled.block_count(), c.size());
}

TEST(dense_unitary, hadamard) {
  ParamCircuit c(1);
  c.h(0);
  CMatrix u = dense_unitary(c);
  double r = 1 / std::sqrt(2.0);
  ASSERT_NEAR(u(0, 0).real(), r, 1e-15);
  ASSERT_NEAR(u(0, 1).real(), r, 1e-15);
  ASSERT_NEAR(u(1, 0).real(), r, 1e-15);
  ASSERT_NEAR(u(1, 1).real(), -r, 1e-15);
}

TEST(dense_unitary, cx_big_endian) {
  // Control qubit 1 is the low index bit; it flips qubit 0, the high bit.
  ParamCircuit c(2);
  c.cx(1, 0);
  CMatrix u = dense_unitary(c);
  CMatrix expect = CMatrix::Zero(4, 4);
  expect(0, 0) = expect(2, 2) = 1.0;
  expect(1, 3) = expect(3, 1) = 1.0;
  ASSERT_EQ(u, expect);
}

TEST(dense_unitary, checkerboard_generator_at_zero_is_identity) {
  ParamCircuit c(2);
  c.su2(1, 0, 0, 0).h(0).cx(0, 1).rz(1, 0.0).cx(0, 1).su2(1, 0, 0, 0).h(0);
  ASSERT_LT((dense_unitary(c) - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(dense_unitary, capacity) {
  ASSERT_THROW(dense_unitary(ParamCircuit(13)), CapacityError);
}

TEST(gates, su2_zero_is_identity_and_pauli_rot_unitary) {
  GateOp su2{GateKind::SU2, {0}, {0.0, 0.0, 0.0}};
  ASSERT_EQ(gate_matrix(su2), CMatrix::Identity(2, 2));
  for (GateKind k : {GateKind::RXX, GateKind::RYY, GateKind::RZZ}) {
    GateOp zero{k, {0, 1}, {0.0}};
    ASSERT_EQ(gate_matrix(zero), CMatrix::Identity(4, 4));
    GateOp op{k, {0, 1}, {0.7}};
    ASSERT_LT(unitarity_residual(gate_matrix(op)), 1e-14);
  }
  // RZZ(t) is diagonal with phases exp(-i t/2 z1 z2).
  GateOp rzz{GateKind::RZZ, {0, 1}, {0.7}};
  CMatrix m = gate_matrix(rzz);
  ASSERT_LT(std::abs(m(0, 0) - std::exp(Complex(0, -0.35))), 1e-15);
  ASSERT_LT(std::abs(m(1, 1) - std::exp(Complex(0, 0.35))), 1e-15);
}

TEST(bell_pairs, states) {
  auto s1 = run_circuit(prepare_bell_pairs(1), 0);
  ASSERT_NEAR(s1[0].real(), 1 / std::sqrt(2.0), 1e-15);
  ASSERT_NEAR(s1[3].real(), 1 / std::sqrt(2.0), 1e-15);
  ASSERT_EQ(std::abs(s1[1]), 0.0);
  ASSERT_EQ(std::abs(s1[2]), 0.0);

  auto s2 = run_circuit(prepare_bell_pairs(2), 0);
  for (std::uint64_t i = 0; i < 16; ++i) {
    bool matching = (i >> 2) == (i & 3);
    ASSERT_NEAR(std::abs(s2[i]), matching ? 0.5 : 0.0, 1e-15);
  }

  std::vector<int> first{0}, second{1};
  auto m0 = marginal_probs(s1, first);
  auto m1 = marginal_probs(s1, second);
  ASSERT_NEAR(m0[0], 0.5, 1e-15);
  ASSERT_NEAR(m1[1], 0.5, 1e-15);
}

TEST(marginal_probs, examples) {
  auto s = StateVector::basis(2, 1);  // |01>
  std::vector<int> q1{1};
  auto m = marginal_probs(s, q1);
  ASSERT_EQ(m, (std::vector<double>{0.0, 1.0}));

  auto b = run_circuit(prepare_bell_pairs(1), 0);
  std::vector<int> both{0, 1};
  auto mb = marginal_probs(b, both);
  ASSERT_NEAR(mb[0], 0.5, 1e-15);
  ASSERT_NEAR(mb[1], 0.0, 1e-15);
  ASSERT_NEAR(mb[2], 0.0, 1e-15);
  ASSERT_NEAR(mb[3], 0.5, 1e-15);
  std::vector<int> bad{2};
  ASSERT_THROW(marginal_probs(b, bad), ValidationError);
  ASSERT_THROW(marginal_probs(b, std::vector<int>{}), ValidationError);
}

TEST(marginal_probs, matches_dense_partial_trace) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Complex> amps(8);
    double n = 0;
    for (auto& a : amps) {
      a = Complex(g(rng), g(rng));
      n += std::norm(a);
    }
    for (auto& a : amps) a /= std::sqrt(n);
    StateVector s(3, amps);
    Eigen::VectorXcd psi(8);
    for (int i = 0; i < 8; ++i) psi[i] = amps[i];
    // rho = psi psi^dagger, trace out qubit 2 (the low bit).
    Eigen::MatrixXcd rho = psi * psi.adjoint();
    Eigen::MatrixXcd reduced = Eigen::MatrixXcd::Zero(4, 4);
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        for (int k = 0; k < 2; ++k) reduced(a, b) += rho(2 * a + k, 2 * b + k);
      }
    }
    std::vector<int> q{0, 1};
    auto m = marginal_probs(s, q);
    for (int a = 0; a < 4; ++a) ASSERT_NEAR(m[a], reduced(a, a).real(), 1e-12);

    // Reversed order swaps the outcome bits.
    std::vector<int> rq{1, 0};
    auto mr = marginal_probs(s, rq);
    ASSERT_NEAR(mr[1], m[2], 1e-15);
    ASSERT_NEAR(mr[2], m[1], 1e-15);
  }
}

TEST(sample, deterministic_state) {
  std::mt19937_64 rng(1);
  auto s = StateVector::basis(3, 5);
  std::vector<int> q{0, 1, 2};
  auto c = sample(s, q, 1000, rng);
  ASSERT_EQ(c[5], 1000);
}

TEST(sample, bell_binomial) {
  std::mt19937_64 rng(2024);
  auto s = run_circuit(prepare_bell_pairs(1), 0);
  std::vector<int> q{0, 1};
  auto c = sample(s, q, 100000, rng);
  double sigma = std::sqrt(100000 * 0.25);
  ASSERT_EQ(c[1] + c[2], 0);
  ASSERT_LT(std::abs(c[0] - 50000.0), 3 * sigma);
  ASSERT_EQ(c[0] + c[3], 100000);
}

TEST(sample, seed_determinism) {
  ParamCircuit circ(3);
  circ.h(0).ry(1, 0.4).cx(0, 2);
  auto s = run_circuit(circ, 0);
  std::vector<int> q{0, 1, 2};
  std::mt19937_64 a(99), b(99);
  ASSERT_EQ(sample(s, q, 5000, a), sample(s, q, 5000, b));
}

TEST(bit_order, cx_round_trip_consistency) {
  // X on qubit 0 then CX(0 -> 2) gives |101> = index 5 everywhere.
  ParamCircuit c(3);
  c.x(0).cx(0, 2);
  auto s = run_circuit(c, 0);
  ASSERT_NEAR(std::abs(s[5]), 1.0, 1e-15);
  ASSERT_NEAR(std::abs(dense_unitary(c)(5, 0)), 1.0, 1e-15);
  std::vector<int> q{0, 2};
  ASSERT_NEAR(marginal_probs(s, q)[3], 1.0, 1e-15);
  std::mt19937_64 rng(0);
  ASSERT_EQ(sample(s, q, 10, rng)[3], 10);
}

TEST(circuit_json, round_trip_and_validation) {
  std::mt19937_64 rng(8);
  auto c = random_circuit(4, 20, rng);
  auto back = circuit_from_json(circuit_to_json(c));
  ASSERT_EQ(circuit_to_json(back), circuit_to_json(c));
  auto bad = circuit_to_json(c);
  bad["gates"][0]["kind"] = "T";
  ASSERT_THROW(circuit_from_json(bad), ValidationError);
  auto oob = circuit_to_json(c);
  oob["gates"][0]["targets"][0] = 9;
  ASSERT_THROW(circuit_from_json(oob), ValidationError);
}
