#pragma once

// Matrix and distribution algebra of the transportation and Birkhoff
// polytopes: validated value types, row rescaling, quadrant aggregation and
// the projections used to recover stochastic matrices from shot counts.

#include <complex>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace qontot {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kExactTol = 1e-9;
inline constexpr double kPlanTol = 1e-6;

/// Strictly positive weights over d entities.
class QuasiDistribution {
 public:
  explicit QuasiDistribution(Vector weights);
  /// Rescales to unit mass; the result additionally satisfies |sum - 1| < 1e-9.
  static QuasiDistribution normalized(Vector weights);
  static QuasiDistribution uniform(int d);

  const Vector& weights() const { return weights_; }
  int size() const { return static_cast<int>(weights_.size()); }
  double mass() const { return weights_.sum(); }
  double operator[](int i) const { return weights_[i]; }

 private:
  Vector weights_;
};

/// Non-negative displacement costs.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries);
  const Matrix& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.rows()); }

 private:
  Matrix entries_;
};

/// Non-negative square matrix whose rows sum to 1.
class RowStochasticMatrix {
 public:
  explicit RowStochasticMatrix(Matrix entries, double tol = kExactTol);
  static RowStochasticMatrix identity(int d);

  const Matrix& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.rows()); }
  /// Column sums, i.e. the image of the uniform unit vector.
  Vector column_sums() const { return entries_.colwise().sum().transpose(); }

 private:
  Matrix entries_;
};

/// Element of the Birkhoff polytope.
class DoublyStochasticMatrix {
 public:
  explicit DoublyStochasticMatrix(Matrix entries, double tol = kExactTol);
  static DoublyStochasticMatrix identity(int d);

  const Matrix& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.rows()); }
  RowStochasticMatrix as_row_stochastic() const { return RowStochasticMatrix(entries_); }

 private:
  Matrix entries_;
};

/// Element of the transportation polytope N(mu, nu). The source marginal is
/// strictly positive; a predicted target marginal may contain zeros.
class TransportPlan {
 public:
  TransportPlan(Matrix entries, QuasiDistribution mu, Vector nu, double tol = kPlanTol);
  /// Reads the marginals off the entries; row sums must be strictly positive.
  static TransportPlan from_entries(Matrix entries);

  const Matrix& entries() const { return entries_; }
  const QuasiDistribution& mu() const { return mu_; }
  const Vector& nu() const { return nu_; }
  int size() const { return static_cast<int>(entries_.rows()); }
  Vector row_sums() const { return entries_.rowwise().sum(); }
  Vector column_sums() const { return entries_.colwise().sum().transpose(); }

 private:
  Matrix entries_;
  QuasiDistribution mu_;
  Vector nu_;
};

/// Shot counts of (row, column) pairs.
class FrequencyMatrix {
 public:
  FrequencyMatrix(int d, std::vector<std::int64_t> counts);

  int size() const { return d_; }
  std::int64_t total_shots() const { return total_; }
  std::int64_t operator()(int i, int j) const { return counts_[static_cast<size_t>(i) * d_ + j]; }
  std::int64_t row_total(int i) const;
  const std::vector<std::int64_t>& counts() const { return counts_; }
  /// Relative frequencies F with total mass 1.
  Matrix relative() const;

 private:
  int d_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_;
};

/// Entry-wise squared magnitude of a unitary.
DoublyStochasticMatrix unistochastic(const CMatrix& unitary);

/// Largest entry of |U^dagger U - I|.
double unitarity_residual(const CMatrix& unitary);

/// Divides row i of the plan by mu_i, giving the margin-free transport pattern.
RowStochasticMatrix normalize_rows(const TransportPlan& plan);

/// Scales row i by mu_i. The row marginal of the result is mu; the column
/// marginal is the predicted target distribution.
TransportPlan rescale_rows(const RowStochasticMatrix& pattern, const QuasiDistribution& mu);

/// Sum of the two top quadrants of an order-2d DSM.
RowStochasticMatrix atop_aggregate(const DoublyStochasticMatrix& q);

/// Sum of the two bottom quadrants of an order-2d DSM.
RowStochasticMatrix bottom_aggregate(const DoublyStochasticMatrix& q);

/// KL projection of sampled frequencies onto row-stochastic matrices:
/// each row divided by its count. Throws on an empty row.
RowStochasticMatrix kl_project_rowstochastic(const FrequencyMatrix& f);

struct BirkhoffOptions {
  double tol = 1e-10;
  int max_sweeps = 10000;
};

/// Frobenius-nearest DSM, via Dykstra's alternating projections between the
/// affine set {rows and columns sum to 1} and the non-negative orthant.
DoublyStochasticMatrix birkhoff_project(const Matrix& m, const BirkhoffOptions& opts = {});

/// Coupon-collector shot budget: ceil(d * ln(d / (1 - p))).
std::int64_t min_shots(std::int64_t d, double p);

}  // namespace qontot
