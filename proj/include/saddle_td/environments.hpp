#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "saddle_td/core_model.hpp"
#include "saddle_td/empirical_stats.hpp"
#include "saddle_td/rng.hpp"

namespace saddle_td {

/// Finite MDP with linear features. transition[a](s, s') = P(s' | s, a).
struct MDPModel {
  Index n_states = 0;
  Index n_actions = 0;
  std::vector<Matrix> transition;
  Matrix reward;    // |S| x |A|
  Matrix features;  // |S| x d
  Vector start;     // start-state distribution
  double gamma = 0.95;

  Index d() const { return features.cols(); }
};

/// Row-stochastic pi(a | s), |S| x |A|.
struct Policy {
  Matrix probs;
};

enum class FeatureKind { Uniform, Tabular };

struct RandomMdp {
  MDPModel mdp;
  Policy behavior;
  Policy target;
};

namespace detail {

inline void require_count(Index value, const char* what) {
  if (value < 1) throw Error(ErrorKind::InvalidArgument, std::string(what) + " must be at least 1");
}

inline Vector normalized_draw(Rng& rng, Index size, double floor) {
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = rng.uniform() + floor;
  return v / v.sum();
}

}  // namespace detail

/// Random MDP: P(s'|s,a) proportional to U[0,1] + 1e-5; policies and start
/// distribution are normalized uniform draws; R[s][a] ~ U[0,1]. Uniform
/// features have n_features - 1 U[0,1] coordinates and a trailing constant 1.
/// Tabular features are the identity and need n_features == n_states.
inline RandomMdp random_mdp(Index n_states, Index n_actions, Index n_features, std::uint64_t seed,
                            double gamma = 0.95, FeatureKind kind = FeatureKind::Uniform) {
  detail::require_count(n_states, "n_states");
  detail::require_count(n_actions, "n_actions");
  detail::require_count(n_features, "n_features");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorKind::BadGamma, "gamma must lie in [0, 1)");
  if (kind == FeatureKind::Tabular && n_features != n_states) {
    throw Error(ErrorKind::InvalidArgument, "tabular features need n_features == n_states");
  }

  Rng rng(seed);
  RandomMdp out;
  MDPModel& m = out.mdp;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.transition.assign(static_cast<std::size_t>(n_actions), Matrix(n_states, n_states));
  for (Index a = 0; a < n_actions; ++a) {
    for (Index s = 0; s < n_states; ++s) {
      m.transition[static_cast<std::size_t>(a)].row(s) = detail::normalized_draw(rng, n_states, 1e-5).transpose();
    }
  }
  m.reward.resize(n_states, n_actions);
  for (Index s = 0; s < n_states; ++s) {
    for (Index a = 0; a < n_actions; ++a) m.reward(s, a) = rng.uniform();
  }
  out.behavior.probs.resize(n_states, n_actions);
  out.target.probs.resize(n_states, n_actions);
  for (Index s = 0; s < n_states; ++s) out.behavior.probs.row(s) = detail::normalized_draw(rng, n_actions, 0.0);
  for (Index s = 0; s < n_states; ++s) out.target.probs.row(s) = detail::normalized_draw(rng, n_actions, 0.0);
  m.start = detail::normalized_draw(rng, n_states, 0.0);

  if (kind == FeatureKind::Tabular) {
    m.features = Matrix::Identity(n_states, n_states);
  } else {
    m.features.resize(n_states, n_features);
    for (Index s = 0; s < n_states; ++s) {
      for (Index j = 0; j + 1 < n_features; ++j) m.features(s, j) = rng.uniform();
      m.features(s, n_features - 1) = 1.0;
    }
  }
  return out;
}

inline void validate_model(const MDPModel& m) {
  if (m.n_states < 1 || m.n_actions < 1) throw Error(ErrorKind::InvalidArgument, "empty MDP");
  if (static_cast<Index>(m.transition.size()) != m.n_actions) {
    throw Error(ErrorKind::DimensionMismatch, "one transition matrix per action expected");
  }
  for (const auto& P : m.transition) {
    if (P.rows() != m.n_states || P.cols() != m.n_states) {
      throw Error(ErrorKind::DimensionMismatch, "transition matrix must be |S| x |S|");
    }
    if ((P.array() < 0.0).any() || ((P.rowwise().sum().array() - 1.0).abs() > 1e-12).any()) {
      throw Error(ErrorKind::InvalidArgument, "transition rows must be probability vectors");
    }
  }
  if (m.reward.rows() != m.n_states || m.reward.cols() != m.n_actions) {
    throw Error(ErrorKind::DimensionMismatch, "reward must be |S| x |A|");
  }
  if (m.features.rows() != m.n_states || m.features.cols() < 1 || !m.features.allFinite()) {
    throw Error(ErrorKind::DimensionMismatch, "features must be a finite |S| x d matrix");
  }
  if (m.start.size() != m.n_states) throw Error(ErrorKind::DimensionMismatch, "start distribution length");
}

inline void validate_policy(const MDPModel& m, const Policy& pi) {
  if (pi.probs.rows() != m.n_states || pi.probs.cols() != m.n_actions) {
    throw Error(ErrorKind::DimensionMismatch, "policy must be |S| x |A|");
  }
  if ((pi.probs.array() < 0.0).any() || ((pi.probs.rowwise().sum().array() - 1.0).abs() > 1e-12).any()) {
    throw Error(ErrorKind::InvalidArgument, "policy rows must be probability vectors");
  }
}

/// P^pi(s, s') = sum_a pi(a|s) P(s'|s,a).
inline Matrix policy_transition(const MDPModel& m, const Policy& pi) {
  Matrix P = Matrix::Zero(m.n_states, m.n_states);
  for (Index a = 0; a < m.n_actions; ++a) {
    P.noalias() += pi.probs.col(a).asDiagonal() * m.transition[static_cast<std::size_t>(a)];
  }
  return P;
}

/// r^pi(s) = sum_a pi(a|s) R(s,a).
inline Vector policy_reward(const MDPModel& m, const Policy& pi) {
  return (pi.probs.array() * m.reward.array()).rowwise().sum();
}

/// Left fixed point of P^pi by power iteration on the lazy chain (P + I)/2,
/// which has the same stationary vector and cannot oscillate on periodic
/// chains. Stops when successive iterates differ by at most 1e-13 in the max norm.
inline Vector stationary_distribution(const MDPModel& m, const Policy& pi, std::uint64_t max_iterations = 1000000) {
  validate_model(m);
  validate_policy(m, pi);
  const Matrix P = policy_transition(m, pi);
  Vector xi = Vector::Constant(m.n_states, 1.0 / static_cast<double>(m.n_states));
  Vector next(m.n_states);
  for (std::uint64_t it = 0; it < max_iterations; ++it) {
    next.noalias() = 0.5 * (P.transpose() * xi + xi);
    next /= next.sum();
    const double change = (next - xi).cwiseAbs().maxCoeff();
    xi.swap(next);
    if (change <= 1e-13) {
      const double residual = (P.transpose() * xi - xi).cwiseAbs().maxCoeff();
      if (residual <= 1e-12) return xi;
    }
  }
  throw Error(ErrorKind::NotConverged, "power iteration did not reach 1e-13 within " +
                                           std::to_string(max_iterations) + " iterations");
}

/// One trajectory of n transitions under `behavior` after a burn-in, with
/// importance ratios pi(a|s) / pi_b(a|s) against `target`.
inline PolicyEvalDataset sample_trajectory(const MDPModel& m, const Policy& behavior, const Policy& target,
                                           std::size_t n, std::uint64_t seed, std::size_t burn_in = 1000) {
  validate_model(m);
  validate_policy(m, behavior);
  validate_policy(m, target);
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "trajectory length must be positive");
  for (Index s = 0; s < m.n_states; ++s) {
    for (Index a = 0; a < m.n_actions; ++a) {
      if (target.probs(s, a) > 0.0 && behavior.probs(s, a) == 0.0) {
        throw Error(ErrorKind::AbsoluteContinuityViolated,
                    "target acts where behavior does not (state " + std::to_string(s) + ", action " +
                        std::to_string(a) + ")");
      }
    }
  }

  Rng rng(seed);
  Index s = rng.categorical(m.start);
  auto step = [&](Index state, Index& action) {
    action = rng.categorical(behavior.probs.row(state));
    return rng.categorical(m.transition[static_cast<std::size_t>(action)].row(state));
  };
  Index a = 0;
  for (std::size_t i = 0; i < burn_in; ++i) s = step(s, a);

  PolicyEvalDataset data;
  data.gamma = m.gamma;
  data.lambda = 0.0;
  data.d = m.d();
  data.samples.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Index s_next = step(s, a);
    TransitionSample sample;
    sample.phi = m.features.row(s).transpose();
    sample.phi_next = m.features.row(s_next).transpose();
    sample.reward = m.reward(s, a);
    sample.importance = target.probs(s, a) / behavior.probs(s, a);
    data.samples.push_back(std::move(sample));
    s = s_next;
  }
  data.provenance["generator"] = "sample_trajectory";
  data.provenance["seed"] = std::to_string(seed);
  data.provenance["burn_in"] = std::to_string(burn_in);
  return data;
}

/// Copy of `data` with z_t = lambda gamma z_{t-1} + phi_t, z_0 = 0.
inline PolicyEvalDataset apply_eligibility_traces(const PolicyEvalDataset& data, double lambda, double gamma) {
  if (!std::isfinite(lambda) || lambda < 0.0) throw Error(ErrorKind::InvalidArgument, "lambda must be >= 0");
  PolicyEvalDataset out = data;
  out.lambda = lambda;
  if (out.samples.empty()) return out;
  const double decay = lambda * gamma;
  Vector z = Vector::Zero(out.samples.front().phi.size());
  for (auto& s : out.samples) {
    z = decay * z + s.phi;
    s.trace = z;
  }
  out.provenance["lambda"] = std::to_string(lambda);
  return out;
}

/// Grid tilings of a box with per-tiling offsets (i / n_tilings) * tile width.
struct TileConfig {
  int tiles_per_dim = 10;
  int n_tilings = 3;
  int expected_dim = 0;  // 0: no check

  Index dim() const { return static_cast<Index>(tiles_per_dim) * tiles_per_dim * n_tilings; }
};

class TileCoder {
 public:
  TileCoder(TileConfig cfg, double x_min, double x_max, double v_min, double v_max)
      : cfg_(cfg), x_min_(x_min), v_min_(v_min) {
    if (cfg.tiles_per_dim < 1 || cfg.n_tilings < 1) {
      throw Error(ErrorKind::BadTileConfig, "tiles_per_dim and n_tilings must be positive");
    }
    if (cfg.expected_dim != 0 && cfg.expected_dim != cfg.dim()) {
      throw Error(ErrorKind::BadTileConfig, "tiling yields d = " + std::to_string(cfg.dim()) + ", requested " +
                                                std::to_string(cfg.expected_dim));
    }
    x_width_ = (x_max - x_min) / cfg.tiles_per_dim;
    v_width_ = (v_max - v_min) / cfg.tiles_per_dim;
  }

  Index dim() const { return cfg_.dim(); }

  std::vector<Index> active(double x, double v) const {
    const int k = cfg_.tiles_per_dim;
    std::vector<Index> idx(static_cast<std::size_t>(cfg_.n_tilings));
    for (int i = 0; i < cfg_.n_tilings; ++i) {
      const double frac = static_cast<double>(i) / cfg_.n_tilings;
      const int ix = std::clamp(static_cast<int>(std::floor((x - x_min_) / x_width_ + frac)), 0, k - 1);
      const int iv = std::clamp(static_cast<int>(std::floor((v - v_min_) / v_width_ + frac)), 0, k - 1);
      idx[static_cast<std::size_t>(i)] = static_cast<Index>(i) * k * k + static_cast<Index>(ix) * k + iv;
    }
    return idx;
  }

  Vector encode(double x, double v) const {
    Vector phi = Vector::Zero(dim());
    for (Index j : active(x, v)) phi(j) = 1.0;
    return phi;
  }

 private:
  TileConfig cfg_;
  double x_min_, v_min_;
  double x_width_ = 1.0, v_width_ = 1.0;
};

/// Classic Mountain Car dynamics.
struct MountainCar {
  static constexpr double kXMin = -1.2, kXMax = 0.6, kVMin = -0.07, kVMax = 0.07, kGoal = 0.5;

  double x = -0.5;
  double v = 0.0;

  /// Applies throttle a in {-1, 0, 1}; returns true when the goal was reached.
  bool step(int a) {
    v = std::clamp(v + 0.001 * a - 0.0025 * std::cos(3.0 * x), kVMin, kVMax);
    x = std::clamp(x + v, kXMin, kXMax);
    if (x == kXMin && v < 0.0) v = 0.0;
    return x >= kGoal;
  }

  /// Energy pumping: push in the direction of motion.
  int scripted_action() const { return v < 0.0 ? -1 : 1; }
};

/// n transitions of the scripted policy, episodes concatenated; terminal
/// steps carry phi' = 0. `explore` is the probability of a uniformly random
/// throttle instead of the scripted one.
inline PolicyEvalDataset mountain_car_dataset(std::size_t n, std::uint64_t seed, const TileConfig& tiling,
                                              double gamma = 0.95, double explore = 0.0) {
  if (n == 0) throw Error(ErrorKind::EmptyDataset, "n must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorKind::BadGamma, "gamma must lie in [0, 1)");
  if (!(explore >= 0.0 && explore <= 1.0)) throw Error(ErrorKind::InvalidArgument, "explore must lie in [0, 1]");
  const TileCoder coder(tiling, MountainCar::kXMin, MountainCar::kXMax, MountainCar::kVMin, MountainCar::kVMax);
  Rng rng(seed);
  auto restart = [&] {
    MountainCar car;
    car.x = -0.6 + 0.2 * rng.uniform();
    car.v = 0.0;
    return car;
  };

  PolicyEvalDataset data;
  data.gamma = gamma;
  data.d = coder.dim();
  data.samples.reserve(n);
  MountainCar car = restart();
  std::size_t episodes = 1;
  for (std::size_t t = 0; t < n; ++t) {
    TransitionSample s;
    s.phi = coder.encode(car.x, car.v);
    int a = car.scripted_action();
    if (explore > 0.0 && rng.uniform() < explore) a = static_cast<int>(rng.index(3)) - 1;
    const bool done = car.step(a);
    s.reward = -1.0;
    if (done) {
      s.phi_next = Vector::Zero(coder.dim());
      car = restart();
      ++episodes;
    } else {
      s.phi_next = coder.encode(car.x, car.v);
    }
    data.samples.push_back(std::move(s));
  }
  data.provenance["generator"] = "mountain_car";
  data.provenance["policy"] = "scripted energy pumping";
  data.provenance["explore"] = std::to_string(explore);
  data.provenance["seed"] = std::to_string(seed);
  data.provenance["tiling"] = std::to_string(tiling.tiles_per_dim) + "x" + std::to_string(tiling.tiles_per_dim) +
                              "x" + std::to_string(tiling.n_tilings) + " uniform offsets";
  data.provenance["episodes_started"] = std::to_string(episodes);
  return data;
}

/// Population statistics under state weighting xi (stationary distribution of
/// `pi` when omitted): A = Phi^T Xi (I - gamma P^pi) Phi, b = Phi^T Xi r^pi,
/// C = Phi^T Xi Phi.
inline EmpiricalStatistics exact_statistics(const MDPModel& m, const Policy& pi,
                                            const std::optional<Vector>& weighting = std::nullopt) {
  const Vector xi = weighting ? *weighting : stationary_distribution(m, pi);
  const Matrix& Phi = m.features;
  const Matrix XiPhi = xi.asDiagonal() * Phi;
  const Matrix D = Phi - m.gamma * policy_transition(m, pi) * Phi;
  return EmpiricalStatistics::from_matrices(XiPhi.transpose() * D, XiPhi.transpose() * policy_reward(m, pi),
                                            XiPhi.transpose() * Phi, 0);
}

/// 1/2 || V - Pi T V ||_Xi^2 with V = Phi theta and Pi = Phi (Phi^T Xi Phi)^{-1} Phi^T Xi.
inline double exact_mspbe(const MDPModel& m, const Policy& pi, const Vector& theta) {
  if (theta.size() != m.d()) throw Error(ErrorKind::DimensionMismatch, "theta length differs from d");
  const Vector xi = stationary_distribution(m, pi);
  const Matrix& Phi = m.features;
  const Matrix gram = Phi.transpose() * xi.asDiagonal() * Phi;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  Eigen::LLT<Matrix> llt(gram);
  if (!(hi > 0.0) || lo <= 1e-12 * hi || llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularProjection, "Phi^T Xi Phi is singular");
  }
  const Vector V = Phi * theta;
  const Vector TV = policy_reward(m, pi) + m.gamma * policy_transition(m, pi) * V;
  const Vector projected = Phi * llt.solve(Phi.transpose() * xi.asDiagonal() * TV);
  const Vector diff = V - projected;
  return 0.5 * diff.dot(xi.asDiagonal() * diff);
}

/// V^pi = (I - gamma P^pi)^{-1} r^pi.
inline Vector true_values(const MDPModel& m, const Policy& pi) {
  const Matrix I = Matrix::Identity(m.n_states, m.n_states);
  return (I - m.gamma * policy_transition(m, pi)).partialPivLu().solve(policy_reward(m, pi));
}

}  // namespace saddle_td
