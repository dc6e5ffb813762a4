#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <vector>

#include "saddle_td/core_model.hpp"
#include "saddle_td/empirical_stats.hpp"

namespace saddle_td {

/// G = [[rho I, -sqrt(beta) A^T], [sqrt(beta) A, beta C]], the operator
/// driving the scaled primal-dual error dynamics.
struct SaddleMatrix {
  Matrix G;
  double beta = 0.0;
  double rho = 0.0;
};

struct SpectralReport {
  bool eigs_real = false;
  bool eigs_positive = false;
  bool h_positive_definite = false;
  bool hg_symmetric = false;
  bool beta_margin_ok = false;
  double lambda_min_G = 0.0;
  double lambda_max_G = 0.0;
  double max_imag_G = 0.0;
  double kappa_Q_sq = 0.0;
  double kappa_Q_bound = 0.0;
  bool kappa_Q_ok = false;
  double lambda_min_G_bound = 0.0;
  double lambda_max_G_bound = 0.0;
  bool lower_bound_ok = false;
  bool upper_bound_ok = false;
  double L_G = std::numeric_limits<double>::quiet_NaN();
  double beta = 0.0;
  double beta_threshold = 0.0;
  double delta = 0.0;
  double rho = 0.0;

  bool all_ok() const {
    return eigs_real && eigs_positive && h_positive_definite && hg_symmetric && kappa_Q_ok && lower_bound_ok &&
           upper_bound_ok;
  }
};

/// Eigenvalues within |imag| <= 1e-8 (1 + |real|) count as real.
inline constexpr double kRealnessTolerance = 1e-8;
/// Relative slack for every spectral bound check.
inline constexpr double kBoundSlack = 1e-8;
/// Required relative margin of beta above the diagonalizability threshold.
inline constexpr double kBetaMargin = 1e-6;

/// beta = 8 (rho + L) / lambda_min(C) = 8 L_rho / lambda_min(C).
inline double choose_beta(const SpectralQuantities& sq) {
  if (!(sq.lambda_min_C > 0.0)) throw Error(ErrorKind::SingularC, "lambda_min(C) must be positive");
  return 8.0 * sq.L_rho / sq.lambda_min_C;
}

/// ((sqrt(L) + sqrt(rho + L)) / sqrt(lambda_min(C)))^2: beta must exceed this
/// for G to be diagonalizable with a real positive spectrum.
inline double diagonalizability_threshold(const SpectralQuantities& sq) {
  if (!(sq.lambda_min_C > 0.0)) throw Error(ErrorKind::SingularC, "lambda_min(C) must be positive");
  const double L = std::max(sq.L(), 0.0);
  const double root = (std::sqrt(L) + std::sqrt(sq.L_rho)) / std::sqrt(sq.lambda_min_C);
  return root * root;
}

inline SaddleMatrix assemble_G(const EmpiricalStatistics& stats, double rho, double beta) {
  const Index d = stats.d();
  if (stats.A().cols() != d || stats.C().rows() != d) {
    throw Error(ErrorKind::DimensionMismatch, "statistics blocks have inconsistent shapes");
  }
  const double root_beta = std::sqrt(beta);
  SaddleMatrix out;
  out.beta = beta;
  out.rho = rho;
  out.G.resize(2 * d, 2 * d);
  out.G.topLeftCorner(d, d) = rho * Matrix::Identity(d, d);
  out.G.topRightCorner(d, d) = -root_beta * stats.A().transpose();
  out.G.bottomLeftCorner(d, d) = root_beta * stats.A();
  out.G.bottomRightCorner(d, d) = beta * stats.C();
  return out;
}

/// H = [[(delta - rho) I, sqrt(beta) A^T], [sqrt(beta) A, beta C - delta I]],
/// the symmetric matrix for which HG is symmetric.
inline Matrix assemble_H(const EmpiricalStatistics& stats, double rho, double beta, double delta) {
  const Index d = stats.d();
  const double root_beta = std::sqrt(beta);
  Matrix H(2 * d, 2 * d);
  H.topLeftCorner(d, d) = (delta - rho) * Matrix::Identity(d, d);
  H.topRightCorner(d, d) = root_beta * stats.A().transpose();
  H.bottomLeftCorner(d, d) = root_beta * stats.A();
  H.bottomRightCorner(d, d) = beta * stats.C() - delta * Matrix::Identity(d, d);
  return H;
}

/// Eigenvalues of G sorted ascending by real part (index tie-break), with
/// unit-norm eigenvectors in matching column order.
struct GEigen {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;
};

inline GEigen sorted_eigen(const Matrix& G) {
  Eigen::EigenSolver<Matrix> es(G, true);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::NotDiagonalizable, "eigendecomposition of G failed");
  const Eigen::VectorXcd vals = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  std::vector<Index> order(static_cast<std::size_t>(vals.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return vals(a).real() < vals(b).real(); });
  GEigen out;
  out.values.resize(vals.size());
  out.vectors.resize(vecs.rows(), vecs.cols());
  for (Index i = 0; i < vals.size(); ++i) {
    out.values(i) = vals(order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = vecs.col(order[static_cast<std::size_t>(i)]).normalized();
  }
  return out;
}

/// Evaluates every spectral certificate without throwing; L_G is left NaN.
inline SpectralReport analyze_spectrum(const EmpiricalStatistics& stats, double rho) {
  const SpectralQuantities sq = spectral_quantities(stats, rho);
  SpectralReport rep;
  rep.rho = rho;
  rep.beta = choose_beta(sq);
  rep.beta_threshold = diagonalizability_threshold(sq);
  rep.beta_margin_ok = rep.beta > rep.beta_threshold * (1.0 + kBetaMargin);
  rep.delta = 4.0 * sq.L_rho;

  const SaddleMatrix G = assemble_G(stats, rho, rep.beta);
  Eigen::EigenSolver<Matrix> es(G.G, false);
  const Eigen::VectorXcd vals = es.eigenvalues();
  rep.eigs_real = es.info() == Eigen::Success;
  rep.lambda_min_G = std::numeric_limits<double>::infinity();
  rep.lambda_max_G = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < vals.size(); ++i) {
    const double re = vals(i).real();
    const double im = std::abs(vals(i).imag());
    rep.max_imag_G = std::max(rep.max_imag_G, im);
    if (im > kRealnessTolerance * (1.0 + std::abs(re))) rep.eigs_real = false;
    rep.lambda_min_G = std::min(rep.lambda_min_G, re);
    rep.lambda_max_G = std::max(rep.lambda_max_G, re);
  }
  rep.eigs_positive = rep.eigs_real && rep.lambda_min_G > 0.0;

  const Matrix H = assemble_H(stats, rho, rep.beta, rep.delta);
  Eigen::SelfAdjointEigenSolver<Matrix> eh(H, Eigen::EigenvaluesOnly);
  const double h_min = eh.eigenvalues().minCoeff();
  const double h_max = eh.eigenvalues().maxCoeff();
  rep.h_positive_definite = h_min > 0.0;
  rep.kappa_Q_sq = rep.h_positive_definite ? h_max / h_min : std::numeric_limits<double>::infinity();

  const Matrix HG = H * G.G;
  const double hg_norm = HG.norm();
  rep.hg_symmetric = (HG - HG.transpose()).norm() <= kBoundSlack * hg_norm;

  rep.kappa_Q_bound = 8.0 * sq.kappa_C;
  rep.kappa_Q_ok = rep.kappa_Q_sq <= rep.kappa_Q_bound * (1.0 + kBoundSlack);
  rep.lambda_max_G_bound = 9.0 * sq.kappa_C * sq.L_rho;
  rep.lambda_min_G_bound = 8.0 / 9.0 * sq.mu_rho;
  rep.upper_bound_ok = rep.lambda_max_G <= rep.lambda_max_G_bound * (1.0 + kBoundSlack);
  rep.lower_bound_ok = rep.lambda_min_G >= rep.lambda_min_G_bound * (1.0 - kBoundSlack);
  return rep;
}

/// analyze_spectrum, but NotDiagonalizable / HNotPositiveDefinite are errors.
inline SpectralReport verify_spectrum(const EmpiricalStatistics& stats, double rho) {
  SpectralReport rep = analyze_spectrum(stats, rho);
  if (!rep.eigs_real) {
    throw Error(ErrorKind::NotDiagonalizable,
                "G has eigenvalues with imaginary part up to " + std::to_string(rep.max_imag_G));
  }
  if (!rep.h_positive_definite) throw Error(ErrorKind::HNotPositiveDefinite, "H is not positive definite");
  return rep;
}

/// L_G = ||(1/n) sum_t G_t^T G_t||^{1/2} with
/// G_t = [[rho I, -sqrt(beta) A_t^T], [sqrt(beta) A_t, beta C_t]].
///
/// With A_t = k d^T (d = phi - gamma phi') and C_t = phi phi^T the blocks of
/// G_t^T G_t are
///   top-left     rho^2 I + beta |k|^2 d d^T
///   top-right    d (beta^{3/2} (k.phi) phi - rho sqrt(beta) k)^T
///   bottom-right beta |d|^2 k k^T + beta^2 |phi|^2 phi phi^T
/// so each sample costs O(d^2) and G_t is never formed.
inline double compute_LG(const PolicyEvalDataset& data, double rho, double beta, TableRow mode) {
  const std::size_t n = data.size();
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "dataset has no transitions");
  const Index d = data.samples.front().phi.size();
  const double root_beta = std::sqrt(beta);

  Matrix tl = Matrix::Zero(d, d);
  Matrix tr = Matrix::Zero(d, d);
  Matrix br = Matrix::Zero(d, d);
  for (const auto& s : data.samples) {
    if (s.phi.size() != d || s.phi_next.size() != d) throw Error(ErrorKind::DimensionMismatch, "ragged features");
    const Vector k = detail::left_factor(s, mode);
    const Vector diff = s.phi - data.gamma * s.phi_next;
    tl.noalias() += (beta * k.squaredNorm()) * diff * diff.transpose();
    const Vector right = (beta * root_beta * k.dot(s.phi)) * s.phi - (rho * root_beta) * k;
    tr.noalias() += diff * right.transpose();
    br.noalias() += (beta * diff.squaredNorm()) * k * k.transpose();
    br.noalias() += (beta * beta * s.phi.squaredNorm()) * s.phi * s.phi.transpose();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix S(2 * d, 2 * d);
  S.topLeftCorner(d, d) = inv_n * tl;
  S.topLeftCorner(d, d).diagonal().array() += rho * rho;
  S.topRightCorner(d, d) = inv_n * tr;
  S.bottomLeftCorner(d, d) = inv_n * tr.transpose();
  S.bottomRightCorner(d, d) = inv_n * br;
  S = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

inline double compute_LG(const PolicyEvalDataset& data, double rho, double beta) {
  return compute_LG(data, rho, beta, table_row(data));
}

/// Full report including L_G evaluated at the chosen beta.
inline SpectralReport verify_spectrum(const PolicyEvalDataset& data, const EmpiricalStatistics& stats, double rho,
                                      TableRow mode) {
  SpectralReport rep = verify_spectrum(stats, rho);
  rep.L_G = compute_LG(data, rho, rep.beta, mode);
  return rep;
}

/// Potential P = ||Q^{-1} Delta||^2 where Delta = [theta - theta*; (w - w*)/sqrt(beta)]
/// and Q holds the unit-norm eigenvectors of G (ascending eigenvalue order).
class PotentialFunction {
 public:
  PotentialFunction(const EmpiricalStatistics& stats, double rho, double beta, Vector theta_star, Vector w_star)
      : beta_(beta), theta_star_(std::move(theta_star)), w_star_(std::move(w_star)) {
    const SaddleMatrix G = assemble_G(stats, rho, beta);
    GEigen eig = sorted_eigen(G.G);
    for (Index i = 0; i < eig.values.size(); ++i) {
      if (std::abs(eig.values(i).imag()) > kRealnessTolerance * (1.0 + std::abs(eig.values(i).real()))) {
        throw Error(ErrorKind::NotDiagonalizable, "G has complex eigenvalues");
      }
    }
    eigenvalues_ = eig.values.real();
    Q_ = eig.vectors.real();
    Q_lu_.compute(Q_);
    const Vector sv = Eigen::JacobiSVD<Matrix>(Q_).singularValues();
    kappa_Q_ = sv.maxCoeff() / sv.minCoeff();
  }

  Vector delta(const SaddleState& state) const {
    const Index d = theta_star_.size();
    Vector out(2 * d);
    out.head(d) = state.theta - theta_star_;
    out.tail(d) = (state.w - w_star_) / std::sqrt(beta_);
    return out;
  }

  double operator()(const SaddleState& state) const { return of_delta(delta(state)); }
  double of_delta(const Vector& delta) const { return Q_lu_.solve(delta).squaredNorm(); }

  /// ||I - sigma Lambda||^2 = max_i (1 - sigma lambda_i)^2.
  double contraction_bound(double sigma_theta) const {
    return (1.0 - sigma_theta * eigenvalues_.array()).square().maxCoeff();
  }

  const Vector& eigenvalues() const { return eigenvalues_; }
  const Matrix& Q() const { return Q_; }
  double kappa_Q() const { return kappa_Q_; }
  double beta() const { return beta_; }

 private:
  double beta_;
  Vector theta_star_;
  Vector w_star_;
  Vector eigenvalues_;
  Matrix Q_;
  Eigen::PartialPivLU<Matrix> Q_lu_;
  double kappa_Q_ = 0.0;
};

}  // namespace saddle_td
