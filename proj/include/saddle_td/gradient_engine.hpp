#pragma once

#include <cstdint>
#include <vector>

#include "saddle_td/core_model.hpp"
#include "saddle_td/empirical_stats.hpp"

namespace saddle_td {

/// Primal gradient and negated dual gradient of the Lagrangian.
struct GradientPair {
  Vector g_theta;
  Vector g_w_neg;

  static GradientPair zero(Index d) { return {Vector::Zero(d), Vector::Zero(d)}; }
  double squared_norm() const { return g_theta.squaredNorm() + g_w_neg.squaredNorm(); }
};

/// B(theta, w) from precomputed statistics: O(d^2).
inline GradientPair full_gradient(const EmpiricalStatistics& stats, const SaddleState& state, double rho) {
  if (state.theta.size() != stats.d() || state.w.size() != stats.d()) {
    throw Error(ErrorKind::DimensionMismatch, "state dimension differs from statistics");
  }
  GradientPair g;
  g.g_theta = rho * state.theta - stats.A().transpose() * state.w;
  g.g_w_neg = stats.A() * state.theta - stats.b() + stats.C() * state.w;
  return g;
}

/// The three inner products that determine the data part of B_t:
/// s = k_t^T w, u = (phi_t - gamma phi'_t)^T theta, v = phi_t^T w.
struct SampleScalars {
  double s = 0.0;
  double u = 0.0;
  double v = 0.0;
};

namespace detail {

inline void check_sample(const TransitionSample& sample, const SaddleState& state, TableRow mode) {
  const Index d = sample.phi.size();
  if (sample.phi_next.size() != d || state.theta.size() != d || state.w.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "sample and state dimensions differ");
  }
  if (mode == TableRow::Trace) {
    if (!sample.trace) throw Error(ErrorKind::MissingTrace, "trace row requested but sample has no trace");
    if (sample.trace->size() != d) throw Error(ErrorKind::DimensionMismatch, "trace length differs from d");
  }
}

}  // namespace detail

/// At most four O(d) inner products (three outside the trace row).
inline SampleScalars sample_scalars(const TransitionSample& sample, const Vector& theta, const Vector& w,
                                    double gamma, TableRow mode) {
  SampleScalars sc;
  sc.v = sample.phi.dot(w);
  sc.u = sample.phi.dot(theta) - gamma * sample.phi_next.dot(theta);
  switch (mode) {
    case TableRow::OnPolicy: sc.s = sc.v; break;
    case TableRow::OffPolicy: sc.s = sample.importance * sc.v; break;
    case TableRow::Trace: sc.s = sample.trace->dot(w); break;
  }
  return sc;
}

/// Adds `scale` times the data part of B_t (everything except rho*theta),
/// reconstructed from its scalars:
///   g_theta += scale * (-s (phi - gamma phi'))
///   g_w_neg += scale * (k (u - r) + phi v)
///
/// With `with_reward` false the reward drops out, which turns the term into
/// the exact difference of two data parts when given scalar differences.
inline void add_data_term(const TransitionSample& sample, const SampleScalars& sc, double gamma, TableRow mode,
                          double scale, GradientPair& out, bool with_reward = true) {
  const double s = scale * sc.s;
  out.g_theta.noalias() -= s * sample.phi;
  out.g_theta.noalias() += (gamma * s) * sample.phi_next;
  const double residual = scale * (with_reward ? sc.u - sample.reward : sc.u);
  switch (mode) {
    case TableRow::OnPolicy: out.g_w_neg.noalias() += residual * sample.phi; break;
    case TableRow::OffPolicy: out.g_w_neg.noalias() += (sample.importance * residual) * sample.phi; break;
    case TableRow::Trace: out.g_w_neg.noalias() += residual * (*sample.trace); break;
  }
  out.g_w_neg.noalias() += (scale * sc.v) * sample.phi;
}

/// Writes B_t(theta, w) into `out` without allocating (out must be sized d).
inline void sample_gradient_into(const TransitionSample& sample, const SaddleState& state, double rho, double gamma,
                                 TableRow mode, GradientPair& out) {
  const SampleScalars sc = sample_scalars(sample, state.theta, state.w, gamma, mode);
  out.g_theta.noalias() = rho * state.theta;
  out.g_w_neg.setZero();
  add_data_term(sample, sc, gamma, mode, 1.0, out);
}

/// B_t(theta, w) = [rho theta - A_t^T w; A_t theta - b_t + C_t w] in O(d).
inline GradientPair sample_gradient(const TransitionSample& sample, const SaddleState& state, double rho,
                                    double gamma, TableRow mode) {
  detail::check_sample(sample, state, mode);
  GradientPair out = GradientPair::zero(sample.phi.size());
  sample_gradient_into(sample, state, rho, gamma, mode, out);
  return out;
}

/// B(theta, w) as the on-the-fly average of all B_t: O(nd).
inline GradientPair batch_average_gradient(const PolicyEvalDataset& data, TableRow mode, const SaddleState& state,
                                           double rho) {
  const Index d = state.theta.size();
  GradientPair sum = GradientPair::zero(d);
  for (const auto& sample : data.samples) {
    const SampleScalars sc = sample_scalars(sample, state.theta, state.w, data.gamma, mode);
    add_data_term(sample, sc, data.gamma, mode, 1.0, sum);
  }
  const double inv_n = 1.0 / static_cast<double>(data.size());
  GradientPair out;
  out.g_theta = rho * state.theta + inv_n * sum.g_theta;
  out.g_w_neg = inv_n * sum.g_w_neg;
  return out;
}

/// Variance-reduced gradient B_t(x) + B(snapshot) - B_t(snapshot), written
/// as B(snapshot) + (B_t(x) - B_t(snapshot)) so that x == snapshot
/// returns `snapshot_full` exactly.
inline void svrg_gradient_into(const TransitionSample& sample, const SaddleState& state,
                               const SaddleState& snapshot, const GradientPair& snapshot_full, double rho,
                               double gamma, TableRow mode, GradientPair& out, GradientPair& scratch) {
  sample_gradient_into(sample, state, rho, gamma, mode, out);
  sample_gradient_into(sample, snapshot, rho, gamma, mode, scratch);
  out.g_theta -= scratch.g_theta;
  out.g_w_neg -= scratch.g_w_neg;
  out.g_theta += snapshot_full.g_theta;
  out.g_w_neg += snapshot_full.g_w_neg;
}

inline GradientPair svrg_gradient(const TransitionSample& sample, const SaddleState& state,
                                  const SaddleState& snapshot, const GradientPair& snapshot_full, double rho,
                                  double gamma, TableRow mode) {
  detail::check_sample(sample, state, mode);
  detail::check_sample(sample, snapshot, mode);
  const Index d = sample.phi.size();
  if (snapshot_full.g_theta.size() != d || snapshot_full.g_w_neg.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "snapshot gradient dimension differs");
  }
  GradientPair out = GradientPair::zero(d);
  GradientPair scratch = GradientPair::zero(d);
  svrg_gradient_into(sample, state, snapshot, snapshot_full, rho, gamma, mode, out, scratch);
  return out;
}

/// SAGA gradient table in O(n) scalar memory.
///
/// B_t splits into rho*[theta; 0], shared by every sample, plus a data part
/// that depends on the state only through the three scalars of
/// SampleScalars. The table stores those scalars for each sample at its last
/// touch and the running mean of the data parts; the rho term is always
/// evaluated at the current theta.
class SagaTable {
 public:
  SagaTable(const PolicyEvalDataset& data, TableRow mode, const SaddleState& state)
      : data_(&data), mode_(mode), scalars_(data.size()), touches_(data.size(), 0) {
    if (data.size() == 0) throw Error(ErrorKind::EmptyDataset, "dataset has no transitions");
    const Index d = state.theta.size();
    GradientPair sum = GradientPair::zero(d);
    for (std::size_t t = 0; t < data.size(); ++t) {
      const auto& sample = data.samples[t];
      detail::check_sample(sample, state, mode);
      scalars_[t] = sample_scalars(sample, state.theta, state.w, data.gamma, mode);
      add_data_term(sample, scalars_[t], data.gamma, mode, 1.0, sum);
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    mean_.g_theta = inv_n * sum.g_theta;
    mean_.g_w_neg = inv_n * sum.g_w_neg;
    fresh_ = GradientPair::zero(d);
  }

  std::size_t size() const { return scalars_.size(); }
  TableRow mode() const { return mode_; }
  const SampleScalars& scalars(std::size_t t) const { return scalars_.at(t); }
  std::uint64_t touch_count(std::size_t t) const { return touches_.at(t); }

  /// Running mean of the stored data parts.
  const GradientPair& data_mean() const { return mean_; }

  /// Maintained batch gradient B = rho*[theta; 0] + data_mean.
  GradientPair batch_gradient(const Vector& theta, double rho) const {
    GradientPair out;
    out.g_theta = rho * theta + mean_.g_theta;
    out.g_w_neg = mean_.g_w_neg;
    return out;
  }

  /// Stored data part of g_t, rebuilt from its scalars and the sample features.
  GradientPair reconstruct(std::size_t t) const {
    check_index(t);
    GradientPair out = GradientPair::zero(mean_.g_theta.size());
    add_data_term(data_->samples[t], scalars_[t], data_->gamma, mode_, 1.0, out);
    return out;
  }

  /// Mean of all reconstructed entries, computed from scratch.
  GradientPair recompute_mean() const {
    GradientPair sum = GradientPair::zero(mean_.g_theta.size());
    for (std::size_t t = 0; t < size(); ++t) {
      add_data_term(data_->samples[t], scalars_[t], data_->gamma, mode_, 1.0, sum);
    }
    const double inv_n = 1.0 / static_cast<double>(size());
    sum.g_theta *= inv_n;
    sum.g_w_neg *= inv_n;
    return sum;
  }

  /// Writes B + h_t - g_t into `out`, then folds (h_t - g_t)/n into the
  /// mean and replaces the stored scalars of sample t. O(d).
  void step_into(std::size_t t, const SaddleState& state, double rho, GradientPair& out) {
    check_index(t);
    const auto& sample = data_->samples[t];
    const double gamma = data_->gamma;
    const SampleScalars fresh = sample_scalars(sample, state.theta, state.w, gamma, mode_);

    // fresh_ holds h_t - g_t; the rho terms and rewards cancel, leaving a
    // term linear in the scalar differences (exactly zero if nothing moved).
    const SampleScalars& stale = scalars_[t];
    const SampleScalars delta{fresh.s - stale.s, fresh.u - stale.u, fresh.v - stale.v};
    fresh_.g_theta.setZero();
    fresh_.g_w_neg.setZero();
    add_data_term(sample, delta, gamma, mode_, 1.0, fresh_, /*with_reward=*/false);

    out.g_theta.noalias() = rho * state.theta + mean_.g_theta;
    out.g_w_neg.noalias() = mean_.g_w_neg;
    out.g_theta += fresh_.g_theta;
    out.g_w_neg += fresh_.g_w_neg;

    const double inv_n = 1.0 / static_cast<double>(size());
    mean_.g_theta.noalias() += inv_n * fresh_.g_theta;
    mean_.g_w_neg.noalias() += inv_n * fresh_.g_w_neg;
    scalars_[t] = fresh;
    ++touches_[t];
  }

  GradientPair step(std::size_t t, const SaddleState& state, double rho) {
    check_index(t);
    detail::check_sample(data_->samples[t], state, mode_);
    GradientPair out = GradientPair::zero(mean_.g_theta.size());
    step_into(t, state, rho, out);
    return out;
  }

 private:
  void check_index(std::size_t t) const {
    if (t >= scalars_.size()) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "sample index " + std::to_string(t) + " outside [0, " + std::to_string(scalars_.size()) + ")");
    }
  }

  const PolicyEvalDataset* data_;
  TableRow mode_;
  std::vector<SampleScalars> scalars_;
  std::vector<std::uint64_t> touches_;
  GradientPair mean_;
  GradientPair fresh_;
};

/// Builds the table at `state`. The rho argument only validates; the
/// regularizer is applied at lookup time.
inline SagaTable saga_init(const PolicyEvalDataset& data, const SaddleState& state, double rho) {
  if (rho < 0.0) throw Error(ErrorKind::InvalidArgument, "rho must be non-negative");
  return SagaTable(data, table_row(data), state);
}

inline SagaTable saga_init(const PolicyEvalDataset& data, TableRow mode, const SaddleState& state) {
  return SagaTable(data, mode, state);
}

/// Returns B + h_t - g_t and updates the table in place.
inline GradientPair saga_step_gradient(SagaTable& table, std::size_t t, const SaddleState& state, double rho) {
  return table.step(t, state, rho);
}

}  // namespace saddle_td
