#pragma once

#include <algorithm>
#include <memory>

#include "saddle_td/core_model.hpp"

namespace saddle_td {

/// Smallest admissible lambda_min(C) / lambda_max(C).
inline constexpr double kPositiveDefiniteRatio = 1e-10;

/// Sample means of A_t, b_t and C_t together with a cached factorization of C.
///
/// C is symmetrized on construction. Its Cholesky factor and extremal
/// eigenvalues are computed once; every C^{-1} product goes through the
/// factor, never an explicit inverse.
class EmpiricalStatistics {
 public:
  struct CFactor {
    Eigen::LLT<Matrix> llt;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    bool positive_definite = false;
  };

  /// Builds statistics from given matrices (C is symmetrized).
  static EmpiricalStatistics from_matrices(Matrix A, Vector b, Matrix C, std::size_t n) {
    const Index d = A.rows();
    if (A.cols() != d || b.size() != d || C.rows() != d || C.cols() != d) {
      throw Error(ErrorKind::DimensionMismatch, "statistics blocks have inconsistent shapes");
    }
    EmpiricalStatistics out;
    out.A_ = std::move(A);
    out.b_ = std::move(b);
    out.C_ = 0.5 * (C + C.transpose());
    out.n_ = n;
    out.factor_ = std::make_shared<CFactor>(factorize(out.C_));
    return out;
  }

  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  const Matrix& C() const { return C_; }
  std::size_t n() const { return n_; }
  Index d() const { return A_.rows(); }

  const CFactor& c_factor() const { return *factor_; }
  bool c_positive_definite() const { return factor_->positive_definite; }

  /// Throws SingularC unless lambda_min(C) > 1e-10 * lambda_max(C).
  void require_positive_definite() const {
    if (!factor_->positive_definite) {
      throw Error(ErrorKind::SingularC, "C is not positive definite (lambda_min = " +
                                            std::to_string(factor_->lambda_min) +
                                            ", lambda_max = " + std::to_string(factor_->lambda_max) + ")");
    }
  }

  /// C^{-1} x through the Cholesky factor.
  template <typename Derived>
  Matrix solve_C(const Eigen::MatrixBase<Derived>& x) const {
    require_positive_definite();
    return factor_->llt.solve(x);
  }

 private:
  static CFactor factorize(const Matrix& C) {
    CFactor f;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(C, Eigen::EigenvaluesOnly);
    f.lambda_min = eig.eigenvalues().minCoeff();
    f.lambda_max = eig.eigenvalues().maxCoeff();
    f.llt.compute(C);
    f.positive_definite = f.llt.info() == Eigen::Success && f.lambda_max > 0.0 &&
                          f.lambda_min > kPositiveDefiniteRatio * f.lambda_max;
    return f;
  }

  Matrix A_;
  Vector b_;
  Matrix C_;
  std::size_t n_ = 0;
  std::shared_ptr<const CFactor> factor_;
};

struct SpectralQuantities {
  double L_rho = 0.0;
  double mu_rho = 0.0;
  double lambda_min_C = 0.0;
  double lambda_max_C = 0.0;
  double kappa_C = 0.0;
  double rho = 0.0;

  /// lambda_max(A^T C^{-1} A), i.e. L_rho without the regularizer.
  double L() const { return L_rho - rho; }
};

namespace detail {

/// Left factor k_t of A_t = k_t (phi_t - gamma phi'_t)^T and b_t = r_t k_t.
inline Vector left_factor(const TransitionSample& s, TableRow mode) {
  switch (mode) {
    case TableRow::OnPolicy: return s.phi;
    case TableRow::OffPolicy: return s.importance * s.phi;
    case TableRow::Trace:
      if (!s.trace) throw Error(ErrorKind::MissingTrace, "trace row requested but sample has no trace");
      return *s.trace;
  }
  return s.phi;
}

}  // namespace detail

/// Sample means of the (A_t, b_t, C_t) row selected by `mode`.
inline EmpiricalStatistics assemble_statistics(const PolicyEvalDataset& data, TableRow mode) {
  const std::size_t n = data.size();
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "dataset has no transitions");
  const Index d = data.samples.front().phi.size();

  Matrix A = Matrix::Zero(d, d);
  Matrix C = Matrix::Zero(d, d);
  Vector b = Vector::Zero(d);

  // Rank-one sums accumulated as blocked products K^T D and F^T F.
  constexpr std::size_t kBlock = 256;
  Matrix K(kBlock, d), D(kBlock, d), F(kBlock, d);
  for (std::size_t start = 0; start < n; start += kBlock) {
    const std::size_t rows = std::min(kBlock, n - start);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto& s = data.samples[start + i];
      if (s.phi.size() != d || s.phi_next.size() != d) {
        throw Error(ErrorKind::DimensionMismatch, "ragged feature lengths");
      }
      const Vector k = detail::left_factor(s, mode);
      if (k.size() != d) throw Error(ErrorKind::DimensionMismatch, "trace length differs from d");
      const auto r = static_cast<Index>(i);
      K.row(r) = k.transpose();
      D.row(r) = (s.phi - data.gamma * s.phi_next).transpose();
      F.row(r) = s.phi.transpose();
      b.noalias() += s.reward * k;
    }
    const auto rows_i = static_cast<Index>(rows);
    A.noalias() += K.topRows(rows_i).transpose() * D.topRows(rows_i);
    C.noalias() += F.topRows(rows_i).transpose() * F.topRows(rows_i);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return EmpiricalStatistics::from_matrices(A * inv_n, b * inv_n, C * inv_n, n);
}

inline EmpiricalStatistics assemble_statistics(const PolicyEvalDataset& data) {
  return assemble_statistics(data, table_row(data));
}

/// 1/2 ||A theta - b||^2_{C^{-1}} + rho/2 ||theta||^2.
inline double em_mspbe(const EmpiricalStatistics& stats, const Vector& theta, double rho) {
  if (theta.size() != stats.d()) throw Error(ErrorKind::DimensionMismatch, "theta length differs from d");
  const Vector residual = stats.A() * theta - stats.b();
  const Vector weighted = stats.solve_C(residual);
  return 0.5 * residual.dot(weighted) + 0.5 * rho * theta.squaredNorm();
}

/// Gradient of em_mspbe: rho theta + A^T C^{-1} (A theta - b).
inline Vector em_mspbe_gradient(const EmpiricalStatistics& stats, const Vector& theta, double rho) {
  const Vector residual = stats.A() * theta - stats.b();
  return rho * theta + stats.A().transpose() * stats.solve_C(residual);
}

/// rho I + A^T C^{-1} A, symmetrized.
inline Matrix normal_matrix(const EmpiricalStatistics& stats, double rho) {
  const Matrix CinvA = stats.solve_C(stats.A());
  Matrix M = stats.A().transpose() * CinvA;
  M = 0.5 * (M + M.transpose());
  M.diagonal().array() += rho;
  return M;
}

struct LstdSolution {
  Vector theta;
  Vector w;
};

/// Closed-form saddle point: theta* = (A^T C^{-1} A + rho I)^{-1} A^T C^{-1} b,
/// w* = C^{-1}(b - A theta*).
inline LstdSolution lstd_solve(const EmpiricalStatistics& stats, double rho) {
  if (rho < 0.0) throw Error(ErrorKind::InvalidArgument, "rho must be non-negative");
  const Matrix M = normal_matrix(stats, rho);
  const Vector rhs = stats.A().transpose() * stats.solve_C(stats.b());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(M, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo <= 1e-14 * hi) {
    throw Error(ErrorKind::SingularSystem, "A^T C^{-1} A + rho I is singular (rank-deficient A with rho = 0?)");
  }
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "normal matrix factorization failed");

  LstdSolution out;
  out.theta = llt.solve(rhs);
  out.w = stats.solve_C(stats.b() - stats.A() * out.theta);
  return out;
}

inline SpectralQuantities spectral_quantities(const EmpiricalStatistics& stats, double rho) {
  stats.require_positive_definite();
  SpectralQuantities sq;
  sq.rho = rho;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(normal_matrix(stats, rho), Eigen::EigenvaluesOnly);
  sq.L_rho = eig.eigenvalues().maxCoeff();
  sq.mu_rho = eig.eigenvalues().minCoeff();
  sq.lambda_min_C = stats.c_factor().lambda_min;
  sq.lambda_max_C = stats.c_factor().lambda_max;
  sq.kappa_C = sq.lambda_max_C / sq.lambda_min_C;
  return sq;
}

/// True when the smallest singular value of A is at most 1e-10 of the largest.
inline bool a_rank_deficient(const EmpiricalStatistics& stats) {
  Eigen::JacobiSVD<Matrix> svd(stats.A());
  const auto& sv = svd.singularValues();
  return sv.size() == 0 || !(sv(0) > 0.0) || sv(sv.size() - 1) <= 1e-10 * sv(0);
}

/// Rejects instances outside the linear-convergence regime: full-rank A
/// (unless rho > 0 makes the normal matrix positive anyway) and positive
/// definite C, in that order.
inline void require_assumptions(const EmpiricalStatistics& stats, double rho) {
  if (rho == 0.0 && a_rank_deficient(stats)) {
    throw Error(ErrorKind::NonPositiveSpectrum, "A is rank deficient and rho = 0, so mu_rho = 0");
  }
  stats.require_positive_definite();
}

}  // namespace saddle_td
