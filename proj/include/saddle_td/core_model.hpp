#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saddle_td/errors.hpp"

namespace saddle_td {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Which row of the (A_t, b_t, C_t) table a dataset is evaluated under.
/// The left factor k_t of A_t and b_t is phi_t (on-policy), rho_t * phi_t
/// (off-policy) or the eligibility trace z_t.
enum class TableRow { OnPolicy, OffPolicy, Trace };

inline const char* table_row_name(TableRow mode) {
  switch (mode) {
    case TableRow::OnPolicy: return "on-policy";
    case TableRow::OffPolicy: return "off-policy";
    case TableRow::Trace: return "trace";
  }
  return "unknown";
}

struct TransitionSample {
  Vector phi;
  Vector phi_next;
  double reward = 0.0;
  double importance = 1.0;
  std::optional<Vector> trace;
};

struct PolicyEvalDataset {
  std::vector<TransitionSample> samples;
  double gamma = 0.0;
  double lambda = 0.0;
  Index d = 0;
  std::map<std::string, std::string> provenance;

  std::size_t size() const { return samples.size(); }
  bool has_traces() const { return !samples.empty() && samples.front().trace.has_value(); }
};

/// Trace row if traces are present, off-policy row if any ratio differs
/// from one, on-policy row otherwise.
inline TableRow table_row(const PolicyEvalDataset& data) {
  if (data.has_traces()) return TableRow::Trace;
  for (const auto& s : data.samples) {
    if (s.importance != 1.0) return TableRow::OffPolicy;
  }
  return TableRow::OnPolicy;
}

struct SaddleState {
  Vector theta;
  Vector w;

  static SaddleState zero(Index d) { return {Vector::Zero(d), Vector::Zero(d)}; }
  Index dim() const { return theta.size(); }
};

/// Primal and dual step sizes; beta is fixed at construction as sigma_w / sigma_theta.
class StepSizes {
 public:
  StepSizes(double sigma_theta, double sigma_w)
      : sigma_theta_(sigma_theta), sigma_w_(sigma_w), beta_(sigma_w / sigma_theta) {
    if (!(sigma_theta > 0.0) || !(sigma_w > 0.0) || !std::isfinite(sigma_theta) ||
        !std::isfinite(sigma_w)) {
      throw Error(ErrorKind::InvalidArgument, "step sizes must be positive and finite");
    }
  }

  double sigma_theta() const { return sigma_theta_; }
  double sigma_w() const { return sigma_w_; }
  double beta() const { return beta_; }

 private:
  double sigma_theta_;
  double sigma_w_;
  double beta_;
};

namespace detail {

inline void require_finite(const Vector& v, const char* what, std::size_t t) {
  if (!v.allFinite()) {
    throw Error(ErrorKind::NonFiniteValue, std::string(what) + " of sample " + std::to_string(t));
  }
}

}  // namespace detail

/// Checks every dataset invariant and stamps the inferred dimension.
inline PolicyEvalDataset validate_dataset(PolicyEvalDataset raw) {
  if (raw.samples.empty()) throw Error(ErrorKind::EmptyDataset, "dataset has no transitions");
  if (!(raw.gamma >= 0.0 && raw.gamma < 1.0)) {
    throw Error(ErrorKind::BadGamma, "gamma must lie in [0, 1), got " + std::to_string(raw.gamma));
  }
  if (!std::isfinite(raw.lambda) || raw.lambda < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "lambda must be finite and non-negative");
  }

  const Index d = raw.samples.front().phi.size();
  if (d <= 0) throw Error(ErrorKind::DimensionMismatch, "feature dimension must be positive");
  if (raw.d != 0 && raw.d != d) {
    throw Error(ErrorKind::DimensionMismatch, "declared d = " + std::to_string(raw.d) +
                                                  " but features have length " + std::to_string(d));
  }
  const bool traced = raw.samples.front().trace.has_value();

  for (std::size_t t = 0; t < raw.samples.size(); ++t) {
    const auto& s = raw.samples[t];
    if (s.phi.size() != d || s.phi_next.size() != d) {
      throw Error(ErrorKind::DimensionMismatch, "ragged feature lengths at sample " + std::to_string(t));
    }
    if (s.trace.has_value() != traced) {
      throw Error(ErrorKind::DimensionMismatch, "traces present on some samples only");
    }
    if (traced && s.trace->size() != d) {
      throw Error(ErrorKind::DimensionMismatch, "trace length differs from d at sample " + std::to_string(t));
    }
    detail::require_finite(s.phi, "phi", t);
    detail::require_finite(s.phi_next, "phi_next", t);
    if (traced) detail::require_finite(*s.trace, "trace", t);
    if (!std::isfinite(s.reward) || !std::isfinite(s.importance)) {
      throw Error(ErrorKind::NonFiniteValue, "reward or importance of sample " + std::to_string(t));
    }
    if (s.importance < 0.0) {
      throw Error(ErrorKind::InvalidArgument, "negative importance ratio at sample " + std::to_string(t));
    }
  }
  raw.d = d;
  return raw;
}

}  // namespace saddle_td
