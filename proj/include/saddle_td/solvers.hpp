#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "saddle_td/core_model.hpp"
#include "saddle_td/empirical_stats.hpp"
#include "saddle_td/gradient_engine.hpp"
#include "saddle_td/rng.hpp"
#include "saddle_td/spectral_analysis.hpp"

namespace saddle_td {

enum class Algorithm { PDBG_I, PDBG_II, SVRG, SAGA, GTD2, TD };

inline std::string_view algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::PDBG_I: return "pdbg-i";
    case Algorithm::PDBG_II: return "pdbg-ii";
    case Algorithm::SVRG: return "svrg";
    case Algorithm::SAGA: return "saga";
    case Algorithm::GTD2: return "gtd2";
    case Algorithm::TD: return "td";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (Algorithm a : {Algorithm::PDBG_I, Algorithm::PDBG_II, Algorithm::SVRG, Algorithm::SAGA, Algorithm::GTD2,
                      Algorithm::TD}) {
    if (algorithm_name(a) == name) return a;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown algorithm '" + std::string(name) + "'");
}

struct SolverConfig {
  Algorithm algorithm = Algorithm::PDBG_II;
  double rho = 0.0;
  std::optional<StepSizes> steps;                   // nullopt: theorem defaults
  std::optional<std::uint64_t> inner_iterations;    // SVRG only; nullopt: theorem N
  std::uint64_t epochs = 1;
  std::uint64_t seed = 0;
  std::uint64_t eval_every = 1;
  std::optional<SaddleState> init;                  // nullopt: (0, 0)
  std::uint64_t max_grad_evals = 0;                 // 0: unlimited
  std::optional<TableRow> mode;                     // nullopt: inferred from the dataset
  std::optional<double> stop_below;                 // stop at the first recorded em_mspbe <= value
};

struct TraceRow {
  std::uint64_t epoch = 0;
  std::uint64_t grad_evals = 0;
  std::int64_t wall_ns = 0;
  double em_mspbe = 0.0;
  double dist_theta = 0.0;
  double dist_w = 0.0;
  double omega_sq = 0.0;
};

struct ConvergenceTrace {
  Algorithm algorithm = Algorithm::PDBG_II;
  std::vector<TraceRow> rows;
  std::optional<StepSizes> steps;
  std::uint64_t inner_iterations = 0;
  SaddleState final_state;
  bool diverged = false;
  bool budget_exhausted = false;
  bool target_reached = false;
};

struct StepDefaults {
  StepSizes steps;
  std::uint64_t inner_iterations = 0;
};

namespace detail {

inline std::uint64_t saturating_ceil(double x) {
  if (!(x < 1.8e19)) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::ceil(std::max(x, 1.0)));
}

}  // namespace detail

/// Theorem step sizes.
///   PDBG: sigma_theta = 1/(9 L_rho kappa(C)), sigma_w = 8/(9 lambda_max(C)).
///   SVRG: sigma_theta = mu_rho/(48 kappa(C) L_G^2), sigma_w = 8 L_rho/lambda_min(C) sigma_theta,
///         N = ceil(51 kappa(C)^2 L_G^2 / mu_rho^2).
///   SAGA: sigma_theta = mu_rho/(3(8 kappa(C)^2 L_G^2 + n mu_rho^2)), sigma_w as SVRG.
/// GTD2 and TD have no theorem values and fall back to the PDBG pair.
inline StepDefaults default_step_sizes(const SpectralQuantities& sq, double L_G, std::size_t n, Algorithm algorithm) {
  if (!(sq.mu_rho > 1e-12 * sq.L_rho) || !(sq.L_rho > 0.0)) {
    throw Error(ErrorKind::NonPositiveSpectrum, "mu_rho = " + std::to_string(sq.mu_rho) +
                                                    " is not positive (rank-deficient A with rho = 0?)");
  }
  const double ratio = 8.0 * sq.L_rho / sq.lambda_min_C;
  switch (algorithm) {
    case Algorithm::PDBG_I:
    case Algorithm::PDBG_II:
    case Algorithm::GTD2:
    case Algorithm::TD:
      return {StepSizes(1.0 / (9.0 * sq.L_rho * sq.kappa_C), 8.0 / (9.0 * sq.lambda_max_C)), 0};
    case Algorithm::SVRG: {
      if (!(L_G > 0.0)) throw Error(ErrorKind::InvalidArgument, "L_G must be positive");
      const double LG2 = L_G * L_G;
      const double sigma = sq.mu_rho / (48.0 * sq.kappa_C * LG2);
      const double N = 51.0 * sq.kappa_C * sq.kappa_C * LG2 / (sq.mu_rho * sq.mu_rho);
      return {StepSizes(sigma, ratio * sigma), detail::saturating_ceil(N)};
    }
    case Algorithm::SAGA: {
      if (!(L_G > 0.0)) throw Error(ErrorKind::InvalidArgument, "L_G must be positive");
      const double LG2 = L_G * L_G;
      const double sigma = sq.mu_rho / (3.0 * (8.0 * sq.kappa_C * sq.kappa_C * LG2 +
                                               static_cast<double>(n) * sq.mu_rho * sq.mu_rho));
      return {StepSizes(sigma, ratio * sigma), 0};
    }
  }
  throw Error(ErrorKind::InvalidArgument, "unknown algorithm");
}

/// Immutable bundle shared by solver runs on one (dataset, rho, table row):
/// statistics, the closed-form optimum used for trace metrics, and the
/// spectral constants behind the default step sizes.
class Problem {
 public:
  Problem(const PolicyEvalDataset& data, double rho, std::optional<TableRow> mode = std::nullopt)
      : data_(&data),
        mode_(mode.value_or(table_row(data))),
        rho_(rho),
        stats_(assemble_statistics(data, mode_)) {
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw Error(ErrorKind::InvalidArgument, "rho must be non-negative");
    stats_.require_positive_definite();
    optimum_ = lstd_solve(stats_, rho_);
    optimal_value_ = em_mspbe(stats_, optimum_.theta, rho_);
    spectral_ = spectral_quantities(stats_, rho_);
  }

  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  const PolicyEvalDataset& data() const { return *data_; }
  TableRow mode() const { return mode_; }
  double rho() const { return rho_; }
  const EmpiricalStatistics& stats() const { return stats_; }
  const LstdSolution& optimum() const { return optimum_; }
  double optimal_value() const { return optimal_value_; }
  const SpectralQuantities& spectral() const { return spectral_; }
  Index d() const { return stats_.d(); }
  std::size_t n() const { return data_->size(); }

  /// L_G at beta = 8 L_rho / lambda_min(C); computed once on first use.
  double L_G() const {
    std::call_once(lg_once_, [this] { L_G_ = compute_LG(*data_, rho_, choose_beta(spectral_), mode_); });
    return L_G_;
  }

 private:
  const PolicyEvalDataset* data_;
  TableRow mode_;
  double rho_;
  EmpiricalStatistics stats_;
  LstdSolution optimum_;
  double optimal_value_ = 0.0;
  SpectralQuantities spectral_;
  mutable std::once_flag lg_once_;
  mutable double L_G_ = 0.0;
};

/// Optional per-iteration callback: (iteration, sampled index or npos, state after the update).
struct RunHooks {
  static constexpr std::size_t kBatch = static_cast<std::size_t>(-1);
  std::function<void(std::uint64_t, std::size_t, const SaddleState&)> on_iterate;
};

namespace detail {

class TraceRecorder {
 public:
  using Clock = std::chrono::steady_clock;

  TraceRecorder(const Problem& problem, std::optional<double> beta, std::optional<double> stop_below,
                ConvergenceTrace& trace)
      : problem_(problem), beta_(beta), stop_below_(stop_below), trace_(trace), start_(Clock::now()) {}

  /// Appends a row; returns false when the run should stop (non-finite
  /// state or stop_below reached).
  bool record(std::uint64_t epoch, std::uint64_t evals, const SaddleState& state) {
    const auto now = Clock::now();
    solver_ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(now - start_).count();

    TraceRow row;
    row.epoch = epoch;
    row.grad_evals = evals;
    row.wall_ns = solver_ns_;
    const bool finite = state.theta.allFinite() && state.w.allFinite();
    const double dt = (state.theta - problem_.optimum().theta).squaredNorm();
    const double dw = (state.w - problem_.optimum().w).squaredNorm();
    row.em_mspbe = finite ? em_mspbe(problem_.stats(), state.theta, problem_.rho())
                          : std::numeric_limits<double>::quiet_NaN();
    row.dist_theta = std::sqrt(dt);
    row.dist_w = std::sqrt(dw);
    row.omega_sq = beta_ ? dt + dw / *beta_ : dt;
    trace_.rows.push_back(row);
    if (!finite) trace_.diverged = true;
    if (finite && stop_below_ && row.em_mspbe <= *stop_below_) trace_.target_reached = true;

    start_ = Clock::now();
    return finite && !trace_.target_reached;
  }

  std::uint64_t last_evals() const { return trace_.rows.empty() ? 0 : trace_.rows.back().grad_evals; }

 private:
  const Problem& problem_;
  std::optional<double> beta_;
  std::optional<double> stop_below_;
  ConvergenceTrace& trace_;
  Clock::time_point start_;
  std::int64_t solver_ns_ = 0;
};

class Budget {
 public:
  explicit Budget(std::uint64_t max_evals) : max_(max_evals) {}
  bool allows(std::uint64_t spent, std::uint64_t cost) const { return max_ == 0 || spent + cost <= max_; }

 private:
  std::uint64_t max_;
};

inline void axpy_update(SaddleState& state, const GradientPair& g, const StepSizes& steps) {
  state.theta.noalias() -= steps.sigma_theta() * g.g_theta;
  state.w.noalias() -= steps.sigma_w() * g.g_w_neg;
}

inline SaddleState initial_state(const Problem& problem, const SolverConfig& cfg) {
  if (!cfg.init) return SaddleState::zero(problem.d());
  if (cfg.init->theta.size() != problem.d() || cfg.init->w.size() != problem.d()) {
    throw Error(ErrorKind::DimensionMismatch, "initial state dimension differs from d");
  }
  return *cfg.init;
}

inline void check_config(const Problem& problem, const SolverConfig& cfg) {
  if (cfg.rho != problem.rho()) throw Error(ErrorKind::InvalidArgument, "config rho differs from problem rho");
  if (cfg.epochs == 0) throw Error(ErrorKind::InvalidArgument, "epochs must be positive");
  if (cfg.eval_every == 0) throw Error(ErrorKind::InvalidArgument, "eval_every must be positive");
  if (cfg.mode && *cfg.mode != problem.mode()) {
    throw Error(ErrorKind::InvalidArgument, "config table row differs from problem table row");
  }
}

inline StepDefaults resolve_steps(const Problem& problem, const SolverConfig& cfg) {
  const bool stochastic_vr = cfg.algorithm == Algorithm::SVRG || cfg.algorithm == Algorithm::SAGA;
  if (cfg.steps && (cfg.algorithm != Algorithm::SVRG || cfg.inner_iterations)) {
    return {*cfg.steps, cfg.inner_iterations.value_or(0)};
  }
  const double lg = stochastic_vr ? problem.L_G() : 0.0;
  StepDefaults def = default_step_sizes(problem.spectral(), lg, problem.n(), cfg.algorithm);
  if (cfg.steps) def.steps = *cfg.steps;
  if (cfg.inner_iterations) def.inner_iterations = *cfg.inner_iterations;
  if (cfg.algorithm == Algorithm::SVRG && def.inner_iterations == 0) {
    throw Error(ErrorKind::InvalidArgument, "SVRG needs at least one inner iteration");
  }
  return def;
}

inline bool on_boundary(std::uint64_t epoch, const SolverConfig& cfg) {
  return epoch % cfg.eval_every == 0 || epoch == cfg.epochs;
}

}  // namespace detail

/// Deterministic primal-dual batch gradient. PDBG_I averages the n sample
/// gradients on the fly (O(nd) per iteration); PDBG_II uses the precomputed
/// statistics (O(d^2)). One iteration is one epoch and costs n evaluations.
inline ConvergenceTrace run_pdbg(const Problem& problem, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  detail::check_config(problem, cfg);
  if (cfg.algorithm != Algorithm::PDBG_I && cfg.algorithm != Algorithm::PDBG_II) {
    throw Error(ErrorKind::InvalidArgument, "run_pdbg needs a PDBG algorithm");
  }
  const StepDefaults def = detail::resolve_steps(problem, cfg);
  ConvergenceTrace trace;
  trace.algorithm = cfg.algorithm;
  trace.steps = def.steps;
  SaddleState state = detail::initial_state(problem, cfg);
  detail::TraceRecorder rec(problem, def.steps.beta(), cfg.stop_below, trace);
  detail::Budget budget(cfg.max_grad_evals);
  const std::uint64_t n = problem.n();
  std::uint64_t evals = 0;

  std::uint64_t done = 0;
  bool ok = rec.record(0, 0, state);
  for (std::uint64_t it = 1; ok && it <= cfg.epochs; ++it) {
    if (!budget.allows(evals, n)) {
      trace.budget_exhausted = true;
      break;
    }
    const GradientPair g = cfg.algorithm == Algorithm::PDBG_I
                               ? batch_average_gradient(problem.data(), problem.mode(), state, problem.rho())
                               : full_gradient(problem.stats(), state, problem.rho());
    detail::axpy_update(state, g, def.steps);
    evals += n;
    if (hooks.on_iterate) hooks.on_iterate(it, RunHooks::kBatch, state);
    if (detail::on_boundary(it, cfg)) ok = rec.record(it, evals, state);
    done = it;
  }
  if (ok && rec.last_evals() < evals) rec.record(done, evals, state);
  trace.final_state = std::move(state);
  return trace;
}

/// SVRG: each outer epoch snapshots the state, takes one full pass for
/// B(snapshot), and runs N variance-reduced steps on uniformly sampled
/// indices. Cost per outer epoch: n + 2N evaluations.
inline ConvergenceTrace run_svrg(const Problem& problem, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  detail::check_config(problem, cfg);
  const StepDefaults def = detail::resolve_steps(problem, cfg);
  ConvergenceTrace trace;
  trace.algorithm = Algorithm::SVRG;
  trace.steps = def.steps;
  trace.inner_iterations = def.inner_iterations;

  const auto& data = problem.data();
  const TableRow mode = problem.mode();
  const double rho = problem.rho();
  const std::uint64_t n = problem.n();
  const Index d = problem.d();

  SaddleState state = detail::initial_state(problem, cfg);
  detail::TraceRecorder rec(problem, def.steps.beta(), cfg.stop_below, trace);
  detail::Budget budget(cfg.max_grad_evals);
  Rng rng(cfg.seed);
  GradientPair g = GradientPair::zero(d);
  GradientPair scratch = GradientPair::zero(d);
  std::uint64_t evals = 0;
  std::uint64_t iteration = 0;

  std::uint64_t done = 0;
  bool ok = rec.record(0, 0, state);
  for (std::uint64_t m = 1; ok && m <= cfg.epochs && !trace.budget_exhausted; ++m) {
    if (!budget.allows(evals, n)) {
      trace.budget_exhausted = true;
      break;
    }
    const SaddleState snapshot = state;
    const GradientPair snapshot_full = batch_average_gradient(data, mode, snapshot, rho);
    evals += n;
    for (std::uint64_t j = 0; j < def.inner_iterations; ++j) {
      if (!budget.allows(evals, 2)) {
        trace.budget_exhausted = true;
        break;
      }
      const auto t = static_cast<std::size_t>(rng.index(n));
      svrg_gradient_into(data.samples[t], state, snapshot, snapshot_full, rho, data.gamma, mode, g, scratch);
      detail::axpy_update(state, g, def.steps);
      evals += 2;
      ++iteration;
      if (hooks.on_iterate) hooks.on_iterate(iteration, t, state);
    }
    if (trace.budget_exhausted || detail::on_boundary(m, cfg)) ok = rec.record(m, evals, state);
    done = m;
  }
  if (ok && rec.last_evals() < evals) rec.record(done, evals, state);
  trace.final_state = std::move(state);
  return trace;
}

/// SAGA with a three-scalar gradient table. One epoch is n single-sample
/// iterations; the initial table costs n evaluations (recorded in row 0).
inline ConvergenceTrace run_saga(const Problem& problem, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  detail::check_config(problem, cfg);
  const StepDefaults def = detail::resolve_steps(problem, cfg);
  ConvergenceTrace trace;
  trace.algorithm = Algorithm::SAGA;
  trace.steps = def.steps;

  const auto& data = problem.data();
  const double rho = problem.rho();
  const std::uint64_t n = problem.n();

  SaddleState state = detail::initial_state(problem, cfg);
  detail::TraceRecorder rec(problem, def.steps.beta(), cfg.stop_below, trace);
  detail::Budget budget(cfg.max_grad_evals);
  Rng rng(cfg.seed);
  SagaTable table(data, problem.mode(), state);
  GradientPair g = GradientPair::zero(problem.d());
  std::uint64_t evals = n;
  std::uint64_t iteration = 0;

  bool ok = rec.record(0, evals, state);
  for (std::uint64_t m = 1; ok && m <= cfg.epochs; ++m) {
    for (std::uint64_t j = 0; j < n; ++j) {
      if (!budget.allows(evals, 1)) {
        trace.budget_exhausted = true;
        break;
      }
      const auto t = static_cast<std::size_t>(rng.index(n));
      table.step_into(t, state, rho, g);
      detail::axpy_update(state, g, def.steps);
      ++evals;
      ++iteration;
      if (hooks.on_iterate) hooks.on_iterate(iteration, t, state);
    }
    if (trace.budget_exhausted) {
      if (rec.last_evals() < evals) rec.record(m, evals, state);
      break;
    }
    if (detail::on_boundary(m, cfg)) ok = rec.record(m, evals, state);
  }
  trace.final_state = std::move(state);
  return trace;
}

/// GTD2: plain stochastic primal-dual steps with B_t.
inline ConvergenceTrace run_gtd2(const Problem& problem, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  detail::check_config(problem, cfg);
  const StepDefaults def = detail::resolve_steps(problem, cfg);
  ConvergenceTrace trace;
  trace.algorithm = Algorithm::GTD2;
  trace.steps = def.steps;

  const auto& data = problem.data();
  const TableRow mode = problem.mode();
  const double rho = problem.rho();
  const std::uint64_t n = problem.n();

  SaddleState state = detail::initial_state(problem, cfg);
  detail::TraceRecorder rec(problem, def.steps.beta(), cfg.stop_below, trace);
  detail::Budget budget(cfg.max_grad_evals);
  Rng rng(cfg.seed);
  GradientPair g = GradientPair::zero(problem.d());
  std::uint64_t evals = 0;
  std::uint64_t iteration = 0;

  bool ok = rec.record(0, 0, state);
  for (std::uint64_t m = 1; ok && m <= cfg.epochs; ++m) {
    for (std::uint64_t j = 0; j < n; ++j) {
      if (!budget.allows(evals, 1)) {
        trace.budget_exhausted = true;
        break;
      }
      const auto t = static_cast<std::size_t>(rng.index(n));
      sample_gradient_into(data.samples[t], state, rho, data.gamma, mode, g);
      detail::axpy_update(state, g, def.steps);
      ++evals;
      ++iteration;
      if (hooks.on_iterate) hooks.on_iterate(iteration, t, state);
    }
    if (trace.budget_exhausted) {
      if (rec.last_evals() < evals) rec.record(m, evals, state);
      break;
    }
    if (detail::on_boundary(m, cfg)) ok = rec.record(m, evals, state);
  }
  trace.final_state = std::move(state);
  return trace;
}

/// TD(0) on the fixed dataset: theta += sigma (r + gamma phi'^T theta - phi^T theta) phi.
/// Only the unregularized fixed point is meaningful, so rho must be zero.
/// w is unused and stays at zero.
inline ConvergenceTrace run_td(const Problem& problem, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  if (cfg.rho > 0.0 || problem.rho() > 0.0) {
    throw Error(ErrorKind::RhoUnsupported, "TD targets the unregularized fixed point; rho must be 0");
  }
  detail::check_config(problem, cfg);
  const StepDefaults def = detail::resolve_steps(problem, cfg);
  ConvergenceTrace trace;
  trace.algorithm = Algorithm::TD;
  trace.steps = def.steps;

  const auto& data = problem.data();
  const std::uint64_t n = problem.n();
  const double sigma = def.steps.sigma_theta();

  SaddleState state = detail::initial_state(problem, cfg);
  state.w.setZero();
  detail::TraceRecorder rec(problem, std::nullopt, cfg.stop_below, trace);
  detail::Budget budget(cfg.max_grad_evals);
  Rng rng(cfg.seed);
  std::uint64_t evals = 0;
  std::uint64_t iteration = 0;

  bool ok = rec.record(0, 0, state);
  for (std::uint64_t m = 1; ok && m <= cfg.epochs; ++m) {
    for (std::uint64_t j = 0; j < n; ++j) {
      if (!budget.allows(evals, 1)) {
        trace.budget_exhausted = true;
        break;
      }
      const auto t = static_cast<std::size_t>(rng.index(n));
      const auto& s = data.samples[t];
      const double td_error = s.reward + data.gamma * s.phi_next.dot(state.theta) - s.phi.dot(state.theta);
      state.theta.noalias() += (sigma * td_error) * s.phi;
      ++evals;
      ++iteration;
      if (hooks.on_iterate) hooks.on_iterate(iteration, t, state);
    }
    if (trace.budget_exhausted) {
      if (rec.last_evals() < evals) rec.record(m, evals, state);
      break;
    }
    if (detail::on_boundary(m, cfg)) ok = rec.record(m, evals, state);
  }
  trace.final_state = std::move(state);
  return trace;
}

inline ConvergenceTrace run(const Problem& problem, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  switch (cfg.algorithm) {
    case Algorithm::PDBG_I:
    case Algorithm::PDBG_II: return run_pdbg(problem, cfg, hooks);
    case Algorithm::SVRG: return run_svrg(problem, cfg, hooks);
    case Algorithm::SAGA: return run_saga(problem, cfg, hooks);
    case Algorithm::GTD2: return run_gtd2(problem, cfg, hooks);
    case Algorithm::TD: return run_td(problem, cfg, hooks);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown algorithm");
}

/// Convenience overload that builds the Problem for a single run.
inline ConvergenceTrace run(const PolicyEvalDataset& data, const SolverConfig& cfg, const RunHooks& hooks = {}) {
  if (cfg.algorithm == Algorithm::TD && cfg.rho > 0.0) {
    throw Error(ErrorKind::RhoUnsupported, "TD targets the unregularized fixed point; rho must be 0");
  }
  const Problem problem(data, cfg.rho, cfg.mode);
  return run(problem, cfg, hooks);
}

/// Normalized epochs (grad_evals / n) at the first row whose relative
/// objective gap (f - f*) / (f_0 - f*) is at most `tol`; nullopt if never.
inline std::optional<double> epochs_to_gap(const ConvergenceTrace& trace, double optimal_value, std::size_t n,
                                           double tol) {
  if (trace.rows.empty()) return std::nullopt;
  const double initial_gap = trace.rows.front().em_mspbe - optimal_value;
  for (const auto& row : trace.rows) {
    const double gap = row.em_mspbe - optimal_value;
    if (std::isfinite(gap) && gap <= tol * initial_gap) {
      return static_cast<double>(row.grad_evals) / static_cast<double>(n);
    }
  }
  return std::nullopt;
}

}  // namespace saddle_td
