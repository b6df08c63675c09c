#include "qontot/mathcore.h"

#include <cmath>
#include <sstream>
#include <string>
#include <utility>

#include "qontot/errors.h"

namespace qontot {

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows() << "x" << m.cols();
    throw ValidationError(os.str());
  }
}

void require_finite_nonnegative(const Matrix& m, const char* what, double slack = 0.0) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      if (!std::isfinite(v) || v < -slack) {
        std::ostringstream os;
        os << what << ": entry (" << i << "," << j << ") = " << v << " is negative or non-finite";
        throw ValidationError(os.str());
      }
    }
  }
}

void require_unit_sums(const Vector& sums, double tol, const char* what, const char* axis) {
  for (Eigen::Index i = 0; i < sums.size(); ++i) {
    if (std::abs(sums[i] - 1.0) > tol) {
      std::ostringstream os;
      os << what << ": " << axis << " " << i << " sums to " << sums[i];
      throw ValidationError(os.str());
    }
  }
}

}  // namespace

QuasiDistribution::QuasiDistribution(Vector weights) : weights_(std::move(weights)) {
  if (weights_.size() == 0) {
    throw ValidationError("QuasiDistribution: empty weight vector");
  }
  for (Eigen::Index i = 0; i < weights_.size(); ++i) {
    if (!std::isfinite(weights_[i]) || weights_[i] <= 0.0) {
      std::ostringstream os;
      os << "QuasiDistribution: weight " << i << " = " << weights_[i] << " is not strictly positive";
      throw ValidationError(os.str());
    }
  }
}

QuasiDistribution QuasiDistribution::normalized(Vector weights) {
  QuasiDistribution q(std::move(weights));
  q.weights_ /= q.weights_.sum();
  return q;
}

QuasiDistribution QuasiDistribution::uniform(int d) {
  return QuasiDistribution(Vector::Constant(d, 1.0 / d));
}

CostMatrix::CostMatrix(Matrix entries) : entries_(std::move(entries)) {
  require_square(entries_, "CostMatrix");
  require_finite_nonnegative(entries_, "CostMatrix");
}

RowStochasticMatrix::RowStochasticMatrix(Matrix entries, double tol) : entries_(std::move(entries)) {
  require_square(entries_, "RowStochasticMatrix");
  require_finite_nonnegative(entries_, "RowStochasticMatrix");
  require_unit_sums(entries_.rowwise().sum(), tol, "RowStochasticMatrix", "row");
}

RowStochasticMatrix RowStochasticMatrix::identity(int d) {
  return RowStochasticMatrix(Matrix::Identity(d, d));
}

DoublyStochasticMatrix::DoublyStochasticMatrix(Matrix entries, double tol)
    : entries_(std::move(entries)) {
  require_square(entries_, "DoublyStochasticMatrix");
  require_finite_nonnegative(entries_, "DoublyStochasticMatrix");
  require_unit_sums(entries_.rowwise().sum(), tol, "DoublyStochasticMatrix", "row");
  require_unit_sums(entries_.colwise().sum().transpose(), tol, "DoublyStochasticMatrix", "column");
}

DoublyStochasticMatrix DoublyStochasticMatrix::identity(int d) {
  return DoublyStochasticMatrix(Matrix::Identity(d, d));
}

TransportPlan::TransportPlan(Matrix entries, QuasiDistribution mu, Vector nu, double tol)
    : entries_(std::move(entries)), mu_(std::move(mu)), nu_(std::move(nu)) {
  require_square(entries_, "TransportPlan");
  require_finite_nonnegative(entries_, "TransportPlan");
  if (mu_.size() != entries_.rows() || nu_.size() != entries_.cols()) {
    throw ValidationError("TransportPlan: marginal dimension does not match the plan");
  }
  double row_err = (entries_.rowwise().sum() - mu_.weights()).cwiseAbs().maxCoeff();
  double col_err = (entries_.colwise().sum().transpose() - nu_).cwiseAbs().maxCoeff();
  if (row_err > tol || col_err > tol) {
    std::ostringstream os;
    os << "TransportPlan: marginal residual " << std::max(row_err, col_err) << " exceeds " << tol;
    throw ValidationError(os.str());
  }
}

TransportPlan TransportPlan::from_entries(Matrix entries) {
  require_square(entries, "TransportPlan");
  Vector rows = entries.rowwise().sum();
  Vector cols = entries.colwise().sum().transpose();
  return TransportPlan(std::move(entries), QuasiDistribution(rows), cols);
}

FrequencyMatrix::FrequencyMatrix(int d, std::vector<std::int64_t> counts)
    : d_(d), counts_(std::move(counts)), total_(0) {
  if (d_ < 1 || counts_.size() != static_cast<size_t>(d_) * d_) {
    throw ValidationError("FrequencyMatrix: counts must hold d*d entries");
  }
  for (auto c : counts_) {
    if (c < 0) throw ValidationError("FrequencyMatrix: negative count");
    total_ += c;
  }
  if (total_ < 1) throw ValidationError("FrequencyMatrix: total_shots must be at least 1");
}

std::int64_t FrequencyMatrix::row_total(int i) const {
  std::int64_t s = 0;
  for (int j = 0; j < d_; ++j) s += (*this)(i, j);
  return s;
}

Matrix FrequencyMatrix::relative() const {
  Matrix f(d_, d_);
  for (int i = 0; i < d_; ++i) {
    for (int j = 0; j < d_; ++j) f(i, j) = static_cast<double>((*this)(i, j)) / total_;
  }
  return f;
}

double unitarity_residual(const CMatrix& unitary) {
  CMatrix g = unitary.adjoint() * unitary;
  g -= CMatrix::Identity(unitary.rows(), unitary.cols());
  return g.cwiseAbs().maxCoeff();
}

DoublyStochasticMatrix unistochastic(const CMatrix& unitary) {
  if (unitary.rows() != unitary.cols() || unitary.rows() == 0) {
    throw ValidationError("unistochastic: expected a non-empty square matrix");
  }
  double residual = unitarity_residual(unitary);
  if (residual > 1e-6) {
    std::ostringstream os;
    os << "unistochastic: input is not unitary (max |U^dagger U - I| = " << residual << ")";
    throw ValidationError(os.str());
  }
  Matrix q = unitary.cwiseAbs2();
  return DoublyStochasticMatrix(std::move(q));
}

RowStochasticMatrix normalize_rows(const TransportPlan& plan) {
  Vector rows = plan.row_sums();
  Matrix out = plan.entries();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (!(rows[i] > 0.0)) {
      std::ostringstream os;
      os << "normalize_rows: row " << i << " has zero mass";
      throw ValidationError(os.str());
    }
    out.row(i) /= rows[i];
  }
  return RowStochasticMatrix(std::move(out));
}

TransportPlan rescale_rows(const RowStochasticMatrix& pattern, const QuasiDistribution& mu) {
  if (pattern.size() != mu.size()) {
    std::ostringstream os;
    os << "rescale_rows: pattern has order " << pattern.size() << " but mu has " << mu.size()
       << " entries";
    throw ValidationError(os.str());
  }
  Matrix out = mu.weights().asDiagonal() * pattern.entries();
  Vector nu = out.colwise().sum().transpose();
  // Row sums differ from mu only by the rounding of the pattern's row sums.
  return TransportPlan(std::move(out), mu, std::move(nu), 1e-9 * std::max(1.0, mu.mass()));
}

namespace {

Matrix half_aggregate(const DoublyStochasticMatrix& q, bool top, const char* what) {
  const int order = q.size();
  if (order % 2 != 0) {
    std::ostringstream os;
    os << what << ": order " << order << " is odd";
    throw ValidationError(os.str());
  }
  const int d = order / 2;
  const int r0 = top ? 0 : d;
  return q.entries().block(r0, 0, d, d) + q.entries().block(r0, d, d, d);
}

}  // namespace

RowStochasticMatrix atop_aggregate(const DoublyStochasticMatrix& q) {
  return RowStochasticMatrix(half_aggregate(q, true, "atop_aggregate"));
}

RowStochasticMatrix bottom_aggregate(const DoublyStochasticMatrix& q) {
  return RowStochasticMatrix(half_aggregate(q, false, "bottom_aggregate"));
}

RowStochasticMatrix kl_project_rowstochastic(const FrequencyMatrix& f) {
  const int d = f.size();
  Matrix out(d, d);
  for (int i = 0; i < d; ++i) {
    std::int64_t row = f.row_total(i);
    if (row == 0) {
      std::ostringstream os;
      os << "kl_project_rowstochastic: row " << i << " received no shots; use at least "
         << "min_shots(d, p) = ceil(d ln(d/(1-p))) shots (d = " << d
         << ", p = 0.99 gives " << min_shots(d, 0.99) << ")";
      throw NumericError(os.str());
    }
    for (int j = 0; j < d; ++j) out(i, j) = static_cast<double>(f(i, j)) / row;
  }
  return RowStochasticMatrix(std::move(out));
}

namespace {

// Orthogonal projection onto {X : X1 = 1, X^T 1 = 1}.
Matrix project_affine(const Matrix& m) {
  const double d = static_cast<double>(m.rows());
  Vector r = m.rowwise().sum().array() - 1.0;
  Vector c = m.colwise().sum().transpose().array() - 1.0;
  double t = m.sum() - d;
  Matrix out = m;
  out.colwise() -= r / d;
  out.rowwise() -= c.transpose() / d;
  out.array() += t / (d * d);
  return out;
}

}  // namespace

DoublyStochasticMatrix birkhoff_project(const Matrix& m, const BirkhoffOptions& opts) {
  require_square(m, "birkhoff_project");
  require_finite_nonnegative(m, "birkhoff_project");
  const Eigen::Index d = m.rows();

  // Dykstra with increments for both sets; the affine increment is harmless
  // and keeps the recursion symmetric.
  Matrix x = m;
  Matrix p = Matrix::Zero(d, d);
  Matrix q = Matrix::Zero(d, d);
  double change = 0.0;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    Matrix y = project_affine(x + p);
    p = x + p - y;
    Matrix x_next = (y + q).cwiseMax(0.0);
    q = y + q - x_next;
    change = (x_next - x).cwiseAbs().maxCoeff();
    x = std::move(x_next);
    if (change < opts.tol) {
      double residual = std::max((x.rowwise().sum().array() - 1.0).abs().maxCoeff(),
                                 (x.colwise().sum().array() - 1.0).abs().maxCoeff());
      if (residual < opts.tol) return DoublyStochasticMatrix(std::move(x));
    }
  }
  std::ostringstream os;
  os << "birkhoff_project: no convergence after " << opts.max_sweeps
     << " sweeps (last change " << change << ")";
  throw NumericError(os.str());
}

std::int64_t min_shots(std::int64_t d, double p) {
  if (d < 1) throw ValidationError("min_shots: d must be at least 1");
  if (!(p > 0.0 && p < 1.0)) {
    std::ostringstream os;
    os << "min_shots: probability " << p << " outside (0, 1)";
    throw ValidationError(os.str());
  }
  double dd = static_cast<double>(d);
  return static_cast<std::int64_t>(std::ceil(dd * std::log(dd / (1.0 - p))));
}

}  // namespace qontot
