#include <gtest/gtest.h>

#include "oracles.hpp"
#include "saddle_td/solvers.hpp"
#include "saddle_td/spectral_analysis.hpp"

using namespace saddle_td;

namespace {

SpectralQuantities unit_quantities() {
  SpectralQuantities sq;
  sq.L_rho = 1.0;
  sq.mu_rho = 1.0;
  sq.lambda_min_C = 1.0;
  sq.lambda_max_C = 1.0;
  sq.kappa_C = 1.0;
  return sq;
}

PolicyEvalDataset scalar_dataset(double phi, double next, double reward, double gamma) {
  PolicyEvalDataset data;
  data.gamma = gamma;
  TransitionSample s;
  s.phi = Vector::Constant(1, phi);
  s.phi_next = Vector::Constant(1, next);
  s.reward = reward;
  data.samples.push_back(s);
  return validate_dataset(std::move(data));
}

SolverConfig config(Algorithm a, std::uint64_t epochs, std::optional<StepSizes> steps = std::nullopt,
                    double rho = 0.0) {
  SolverConfig c;
  c.algorithm = a;
  c.rho = rho;
  c.epochs = epochs;
  c.steps = steps;
  return c;
}

double state_gap(const SaddleState& a, const SaddleState& b) {
  return std::sqrt((a.theta - b.theta).squaredNorm() + (a.w - b.w).squaredNorm());
}

void expect_same_rows(const ConvergenceTrace& a, const ConvergenceTrace& b) {
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].epoch, b.rows[i].epoch);
    EXPECT_EQ(a.rows[i].grad_evals, b.rows[i].grad_evals);
    EXPECT_EQ(a.rows[i].em_mspbe, b.rows[i].em_mspbe);
    EXPECT_EQ(a.rows[i].dist_theta, b.rows[i].dist_theta);
    EXPECT_EQ(a.rows[i].dist_w, b.rows[i].dist_w);
    EXPECT_EQ(a.rows[i].omega_sq, b.rows[i].omega_sq);
  }
}

}  // namespace

TEST(Algorithms, NamesRoundTrip) {
  for (Algorithm a : {Algorithm::PDBG_I, Algorithm::PDBG_II, Algorithm::SVRG, Algorithm::SAGA, Algorithm::GTD2,
                      Algorithm::TD}) {
    EXPECT_EQ(parse_algorithm(algorithm_name(a)), a);
  }
  EXPECT_THROW(parse_algorithm("adam"), Error);
}

TEST(DefaultStepSizes, TheoremExamples) {
  const auto sq = unit_quantities();
  const auto pdbg = default_step_sizes(sq, 1.0, 10, Algorithm::PDBG_II);
  EXPECT_DOUBLE_EQ(pdbg.steps.sigma_theta(), 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(pdbg.steps.sigma_w(), 8.0 / 9.0);

  const auto svrg = default_step_sizes(sq, 1.0, 10, Algorithm::SVRG);
  EXPECT_DOUBLE_EQ(svrg.steps.sigma_theta(), 1.0 / 48.0);
  EXPECT_DOUBLE_EQ(svrg.steps.sigma_w(), 8.0 / 48.0);
  EXPECT_EQ(svrg.inner_iterations, 51u);

  const auto saga = default_step_sizes(sq, 1.0, 10, Algorithm::SAGA);
  EXPECT_DOUBLE_EQ(saga.steps.sigma_theta(), 1.0 / 54.0);
  EXPECT_DOUBLE_EQ(saga.steps.sigma_w(), 8.0 / 54.0);
}

TEST(DefaultStepSizes, RejectsDegenerateSpectrum) {
  auto sq = unit_quantities();
  sq.mu_rho = 0.0;
  try {
    default_step_sizes(sq, 1.0, 10, Algorithm::SVRG);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPositiveSpectrum);
  }
  EXPECT_THROW(default_step_sizes(unit_quantities(), 0.0, 10, Algorithm::SAGA), Error);
}

TEST(DefaultStepSizes, InnerCountSaturates) {
  auto sq = unit_quantities();
  sq.mu_rho = 1e-9;
  const auto svrg = default_step_sizes(sq, 1e3, 10, Algorithm::SVRG);
  EXPECT_EQ(svrg.inner_iterations, std::numeric_limits<std::uint64_t>::max());
}

TEST(Pdbg, OneStepHandArithmetic) {
  const auto data = scalar_dataset(1.0, 0.0, 1.0, 0.5);
  const Problem problem(data, 0.0);
  for (Algorithm a : {Algorithm::PDBG_I, Algorithm::PDBG_II}) {
    const auto tr = run(problem, config(a, 1, StepSizes(0.1, 0.1)));
    EXPECT_DOUBLE_EQ(tr.final_state.theta(0), 0.0);
    EXPECT_DOUBLE_EQ(tr.final_state.w(0), 0.1);
  }
}

TEST(Pdbg, FixedPoint) {
  const auto data = oracle::random_dataset(5, 200, 3);
  const Problem problem(data, 0.0);
  const SaddleState opt{problem.optimum().theta, problem.optimum().w};
  for (Algorithm a : {Algorithm::PDBG_I, Algorithm::PDBG_II, Algorithm::SVRG, Algorithm::GTD2}) {
    auto cfg = config(a, 3, StepSizes(0.05, 0.05));
    cfg.inner_iterations = 100;
    cfg.init = opt;
    const auto tr = run(problem, cfg);
    if (a == Algorithm::GTD2) continue;  // single-sample gradients do not vanish at the optimum
    EXPECT_LE(state_gap(tr.final_state, opt), 1e-8) << algorithm_name(a);
  }
}

TEST(Pdbg, ModesGiveIdenticalIterates) {
  const auto data = oracle::random_dataset(6, 150, 4, 0.9, true);
  const Problem problem(data, 0.05);
  std::vector<SaddleState> one, two;
  RunHooks h1{[&](std::uint64_t, std::size_t, const SaddleState& s) { one.push_back(s); }};
  RunHooks h2{[&](std::uint64_t, std::size_t, const SaddleState& s) { two.push_back(s); }};
  run(problem, config(Algorithm::PDBG_I, 200, std::nullopt, 0.05), h1);
  run(problem, config(Algorithm::PDBG_II, 200, std::nullopt, 0.05), h2);
  ASSERT_EQ(one.size(), two.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    const double scale = 1.0 + std::sqrt(one[i].theta.squaredNorm() + one[i].w.squaredNorm());
    EXPECT_LE(state_gap(one[i], two[i]), 1e-12 * scale);
  }
}

TEST(Pdbg, ConvergesToTheLstdOracle) {
  const auto data = oracle::random_dataset(10, 2000, 3);
  const Problem problem(data, 0.0);
  const auto [theta_star, w_star] = oracle::lstd(oracle::means(data, TableRow::OnPolicy), 0.0);
  auto cfg = config(Algorithm::PDBG_II, 500);
  const auto tr = run(problem, cfg);
  ASSERT_EQ(tr.rows.size(), 501u);
  const double floor = 1e-12 * tr.rows.front().dist_theta;
  for (std::size_t i = 51; i < tr.rows.size() && tr.rows[i].dist_theta > floor; ++i) {
    EXPECT_LT(tr.rows[i].dist_theta, tr.rows[i - 1].dist_theta) << "iteration " << i;
  }
  EXPECT_LE(tr.rows.back().dist_theta, 1e-4 * tr.rows.front().dist_theta);
  EXPECT_LE((tr.final_state.theta - theta_star).norm(), 1e-4 * theta_star.norm());

  // log(dist_theta) against the iteration count has a negative least-squares slope.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const std::size_t m = 200;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = static_cast<double>(i), y = std::log(tr.rows[i].dist_theta);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  EXPECT_LT(slope, 0.0);
}

TEST(Pdbg, PotentialContractsWithinTheBound) {
  for (int inst = 0; inst < 5; ++inst) {
    const auto data = oracle::random_dataset(4, 100, 70 + inst);
    const Problem problem(data, 0.1);
    const auto def = default_step_sizes(problem.spectral(), 1.0, problem.n(), Algorithm::PDBG_II);
    const PotentialFunction P(problem.stats(), 0.1, def.steps.beta(), problem.optimum().theta,
                              problem.optimum().w);
    const double bound = P.contraction_bound(def.steps.sigma_theta());
    const double p0 = P(SaddleState::zero(4));
    double prev = p0;
    RunHooks hooks{[&](std::uint64_t, std::size_t, const SaddleState& s) {
      const double next = P(s);
      if (prev > 1e-16 * p0) {
        EXPECT_LE(next / prev, bound + 1e-6);
      }
      prev = next;
    }};
    run(problem, config(Algorithm::PDBG_II, 100, std::nullopt, 0.1), hooks);
  }
}

TEST(Svrg, SingleSampleReducesToPdbg) {
  const auto data = scalar_dataset(1.0, 0.4, 2.0, 0.9);
  const Problem problem(data, 0.1);
  auto cfg = config(Algorithm::SVRG, 20, StepSizes(0.3, 0.2), 0.1);
  cfg.inner_iterations = 1;
  const auto svrg = run(problem, cfg);
  const auto pdbg = run(problem, config(Algorithm::PDBG_I, 20, StepSizes(0.3, 0.2), 0.1));
  EXPECT_EQ(svrg.final_state.theta, pdbg.final_state.theta);
  EXPECT_EQ(svrg.final_state.w, pdbg.final_state.w);
}

TEST(Svrg, CostPerOuterEpoch) {
  const auto data = oracle::random_dataset(3, 40, 8);
  const Problem problem(data, 0.0);
  auto cfg = config(Algorithm::SVRG, 4, StepSizes(0.01, 0.01));
  cfg.inner_iterations = 25;
  const auto tr = run(problem, cfg);
  ASSERT_EQ(tr.rows.size(), 5u);
  for (std::size_t i = 1; i < tr.rows.size(); ++i) {
    EXPECT_EQ(tr.rows[i].grad_evals - tr.rows[i - 1].grad_evals, 40u + 2u * 25u);
    EXPECT_EQ(tr.rows[i].epoch, i);
  }
}

TEST(Svrg, ContractionOnASmallInstance) {
  // Two-state tabular chain where the theorem inner count stays moderate.
  const auto mdp = random_mdp(2, 2, 2, 108, 0.5, FeatureKind::Tabular);
  const auto data = validate_dataset(sample_trajectory(mdp.mdp, mdp.behavior, mdp.behavior, 50, 15));
  const Problem problem(data, 0.0);
  const auto def = default_step_sizes(problem.spectral(), problem.L_G(), problem.n(), Algorithm::SVRG);
  ASSERT_LT(def.inner_iterations, 200000u);
  double ratio = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = config(Algorithm::SVRG, 1);
    cfg.seed = seed;
    const auto tr = run(problem, cfg);
    ratio += tr.rows[1].omega_sq / tr.rows[0].omega_sq;
  }
  EXPECT_LE(ratio / 20.0, 0.9);
}

TEST(Saga, FixedPoint) {
  const auto data = oracle::random_dataset(4, 60, 13);
  const Problem problem(data, 0.0);
  const SaddleState opt{problem.optimum().theta, problem.optimum().w};
  auto cfg = config(Algorithm::SAGA, 1, StepSizes(0.01, 0.01));
  cfg.init = opt;
  EXPECT_LE(state_gap(run(problem, cfg).final_state, opt), 1e-6);
}

TEST(Saga, SingleSampleMatchesPdbg) {
  const auto data = scalar_dataset(1.0, 0.4, 2.0, 0.9);
  const Problem problem(data, 0.1);
  const auto saga = run(problem, config(Algorithm::SAGA, 30, StepSizes(0.3, 0.2), 0.1));
  const auto pdbg = run(problem, config(Algorithm::PDBG_II, 30, StepSizes(0.3, 0.2), 0.1));
  EXPECT_LE(state_gap(saga.final_state, pdbg.final_state), 1e-13);
}

TEST(Saga, CostAccounting) {
  const auto data = oracle::random_dataset(3, 40, 8);
  const Problem problem(data, 0.0);
  for (Algorithm a : {Algorithm::SAGA, Algorithm::GTD2, Algorithm::TD}) {
    const auto tr = run(problem, config(a, 3, StepSizes(0.001, 0.001)));
    ASSERT_EQ(tr.rows.size(), 4u);
    for (std::size_t i = 1; i < tr.rows.size(); ++i) {
      EXPECT_EQ(tr.rows[i].grad_evals - tr.rows[i - 1].grad_evals, 40u) << algorithm_name(a);
    }
  }
}

TEST(Saga, ConvergesWithTheoremSteps) {
  const auto data = oracle::random_dataset(10, 50000, 3);
  const Problem problem(data, 0.0);
  auto cfg = config(Algorithm::SAGA, 50);
  cfg.eval_every = 10;
  const auto tr = run(problem, cfg);
  EXPECT_LE(tr.rows.back().omega_sq, 1e-6 * tr.rows.front().omega_sq);
}

TEST(Saga, LyapunovMeanIsNonIncreasing) {
  const auto data = oracle::random_dataset(3, 30, 19);
  const double rho = 0.05;
  const Problem problem(data, rho);
  const Index d = problem.d();
  const auto def = default_step_sizes(problem.spectral(), problem.L_G(), problem.n(), Algorithm::SAGA);
  const double beta = def.steps.beta();
  const PotentialFunction P(problem.stats(), rho, beta, problem.optimum().theta, problem.optimum().w);
  const double lmin = P.eigenvalues().minCoeff();
  const double sigma = def.steps.sigma_theta();
  const double n = static_cast<double>(problem.n());
  const double weight = n * sigma * lmin * (1.0 - sigma * lmin) / (P.kappa_Q() * P.kappa_Q() * std::pow(problem.L_G(), 2));

  std::vector<Matrix> Gt;
  for (const auto& s : data.samples) {
    const auto t = oracle::sample_terms(s, data.gamma, TableRow::OnPolicy);
    Matrix G(2 * d, 2 * d);
    G << rho * Matrix::Identity(d, d), -std::sqrt(beta) * t.A.transpose(), std::sqrt(beta) * t.A, beta * t.C;
    Gt.push_back(G);
  }

  const std::uint64_t epochs = 8;
  std::vector<double> mean_T(epochs + 1, 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SaddleState prev = SaddleState::zero(d);
    std::vector<SaddleState> touched(data.size(), prev);
    auto lyapunov = [&](const SaddleState& x) {
      double q = 0.0;
      for (std::size_t t = 0; t < data.size(); ++t) q += P.of_delta(Gt[t] * P.delta(touched[t]));
      return P(x) + weight * q / n;
    };
    mean_T[0] += lyapunov(prev);
    RunHooks hooks{[&](std::uint64_t it, std::size_t t, const SaddleState& x) {
      touched[t] = prev;
      prev = x;
      if (it % data.size() == 0) mean_T[it / data.size()] += lyapunov(x);
    }};
    auto cfg = config(Algorithm::SAGA, epochs);
    cfg.rho = rho;
    cfg.seed = seed;
    run(problem, cfg, hooks);
  }
  for (std::uint64_t m = 3; m <= epochs; ++m) EXPECT_LE(mean_T[m], mean_T[m - 1]) << "epoch " << m;
}

TEST(Gtd2, ZeroFeaturesHaveNoStatistics) {
  PolicyEvalDataset data;
  data.gamma = 0.9;
  TransitionSample s;
  s.phi = Vector::Zero(2);
  s.phi_next = Vector::Zero(2);
  s.reward = 1.0;
  data.samples.assign(5, s);
  data = validate_dataset(data);
  // Every B_t is zero, so a step would leave the state unchanged; the
  // solver refuses earlier because C is singular.
  const SaddleState x{Vector::Ones(2), Vector::Ones(2)};
  EXPECT_EQ(sample_gradient(data.samples[0], x, 0.0, data.gamma, TableRow::OnPolicy).squared_norm(), 0.0);
  try {
    run(data, config(Algorithm::GTD2, 1, StepSizes(0.1, 0.1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingularC);
  }
}

TEST(Gtd2, ExpectedStepIsThePdbgStep) {
  const auto data = oracle::random_dataset(4, 25, 31);
  const Problem problem(data, 0.1);
  const StepSizes steps(0.05, 0.02);
  SaddleState x0{Vector::LinSpaced(4, -1.0, 1.0), Vector::Ones(4)};
  SaddleState mean = SaddleState::zero(4);
  for (const auto& s : data.samples) {
    const auto g = sample_gradient(s, x0, 0.1, data.gamma, TableRow::OnPolicy);
    mean.theta += x0.theta - steps.sigma_theta() * g.g_theta;
    mean.w += x0.w - steps.sigma_w() * g.g_w_neg;
  }
  mean.theta /= 25.0;
  mean.w /= 25.0;
  auto cfg = config(Algorithm::PDBG_II, 1, steps);
  cfg.rho = 0.1;
  cfg.init = x0;
  const auto pdbg = run(problem, cfg);
  EXPECT_LE(state_gap(mean, pdbg.final_state), 1e-12);

  // And the solver's first step uses exactly B_t at the sampled index.
  cfg.algorithm = Algorithm::GTD2;
  bool checked = false;
  RunHooks hooks{[&](std::uint64_t it, std::size_t t, const SaddleState& x) {
    if (it != 1) return;
    const auto g = sample_gradient(data.samples[t], x0, 0.1, data.gamma, TableRow::OnPolicy);
    EXPECT_LE((x.theta - (x0.theta - steps.sigma_theta() * g.g_theta)).norm(), 1e-15);
    EXPECT_LE((x.w - (x0.w - steps.sigma_w() * g.g_w_neg)).norm(), 1e-15);
    checked = true;
  }};
  run(problem, cfg, hooks);
  EXPECT_TRUE(checked);
}

TEST(Gtd2, SlowerThanSvrgAtEqualCost) {
  const auto data = oracle::random_dataset(5, 500, 42);
  const Problem problem(data, 0.0);
  const std::uint64_t budget = 50 * problem.n();
  double best_gtd2 = std::numeric_limits<double>::infinity();
  double best_svrg = std::numeric_limits<double>::infinity();
  for (double st : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
    for (double ratio : {1.0, 3.0}) {
      const StepSizes steps(st, st * ratio);
      auto g = config(Algorithm::GTD2, 50, steps);
      const auto tg = run(problem, g);
      if (!tg.diverged) best_gtd2 = std::min(best_gtd2, tg.rows.back().dist_theta);
      auto s = config(Algorithm::SVRG, 50, steps);
      s.inner_iterations = 2 * problem.n();
      s.max_grad_evals = budget;
      const auto ts = run(problem, s);
      if (!ts.diverged && !tg.diverged) {
        EXPECT_EQ(ts.rows.back().grad_evals, tg.rows.back().grad_evals);
      }
      if (!ts.diverged) best_svrg = std::min(best_svrg, ts.rows.back().dist_theta);
    }
  }
  EXPECT_GT(best_gtd2, best_svrg);
}

TEST(Td, OneStepHandArithmetic) {
  const auto data = scalar_dataset(1.0, 0.0, 1.0, 0.0);
  const auto tr = run(data, config(Algorithm::TD, 1, StepSizes(1.0, 1.0)));
  EXPECT_EQ(tr.final_state.theta, Vector::Ones(1));
  EXPECT_EQ(tr.final_state.w, Vector::Zero(1));
}

TEST(Td, ExpectedUpdateVanishesAtTheFixedPoint) {
  const auto data = oracle::random_dataset(4, 60, 22);
  const Problem problem(data, 0.0);
  const Vector& theta = problem.optimum().theta;
  Vector mean = Vector::Zero(4);
  for (const auto& s : data.samples) {
    mean += (s.reward + data.gamma * s.phi_next.dot(theta) - s.phi.dot(theta)) * s.phi;
  }
  EXPECT_LE(mean.norm() / 60.0, 1e-10);

  auto cfg = config(Algorithm::TD, 1, StepSizes(0.01, 0.01));
  cfg.init = SaddleState{theta, Vector::Zero(4)};
  RunHooks hooks{[&](std::uint64_t it, std::size_t t, const SaddleState& x) {
    if (it != 1) return;
    const auto& s = data.samples[t];
    const Vector expected =
        theta + 0.01 * (s.reward + data.gamma * s.phi_next.dot(theta) - s.phi.dot(theta)) * s.phi;
    EXPECT_LE((x.theta - expected).norm(), 1e-15);
  }};
  run(problem, cfg, hooks);
}

TEST(Td, RegularizationUnsupported) {
  const auto data = oracle::random_dataset(3, 20, 1);
  auto cfg = config(Algorithm::TD, 1, StepSizes(0.1, 0.1));
  cfg.rho = 0.1;
  try {
    run(data, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RhoUnsupported);
  }
}

TEST(Traces, DeterministicAndWellFormed) {
  const auto data = oracle::random_dataset(4, 80, 6, 0.9, true);
  const Problem problem(data, 0.02);
  for (Algorithm a : {Algorithm::PDBG_I, Algorithm::SVRG, Algorithm::SAGA, Algorithm::GTD2}) {
    auto cfg = config(a, 6, StepSizes(0.01, 0.02));
    cfg.rho = 0.02;
    cfg.seed = 99;
    cfg.inner_iterations = 50;
    cfg.eval_every = 2;
    const auto one = run(problem, cfg);
    const auto two = run(problem, cfg);
    expect_same_rows(one, two);
    EXPECT_EQ(one.final_state.theta, two.final_state.theta);
    EXPECT_EQ(one.rows.front().epoch, 0u);
    for (std::size_t i = 1; i < one.rows.size(); ++i) {
      EXPECT_GT(one.rows[i].grad_evals, one.rows[i - 1].grad_evals);
    }
    EXPECT_EQ(one.rows.size(), 4u) << algorithm_name(a);
  }
}

TEST(Traces, MetricsMatchTheirDefinitions) {
  const auto data = oracle::random_dataset(3, 50, 2);
  const Problem problem(data, 0.0);
  const auto tr = run(problem, config(Algorithm::PDBG_II, 3, StepSizes(0.1, 0.3)));
  const auto& row = tr.rows.back();
  const Vector dt = tr.final_state.theta - problem.optimum().theta;
  const Vector dw = tr.final_state.w - problem.optimum().w;
  EXPECT_NEAR(row.dist_theta, dt.norm(), 1e-14);
  EXPECT_NEAR(row.dist_w, dw.norm(), 1e-14);
  EXPECT_NEAR(row.omega_sq, dt.squaredNorm() + dw.squaredNorm() / 3.0, 1e-13);
  EXPECT_NEAR(row.em_mspbe, em_mspbe(problem.stats(), tr.final_state.theta, 0.0), 1e-14);
}

TEST(Traces, BudgetAndDivergence) {
  const auto data = oracle::random_dataset(3, 50, 2);
  const Problem problem(data, 0.0);
  auto cfg = config(Algorithm::GTD2, 10, StepSizes(0.01, 0.01));
  cfg.max_grad_evals = 120;
  const auto tr = run(problem, cfg);
  EXPECT_TRUE(tr.budget_exhausted);
  EXPECT_EQ(tr.rows.back().grad_evals, 120u);

  const auto wild = run(problem, config(Algorithm::PDBG_II, 2000, StepSizes(50.0, 50.0)));
  EXPECT_TRUE(wild.diverged);

  auto mismatched = config(Algorithm::PDBG_II, 1);
  mismatched.rho = 0.5;
  EXPECT_THROW(run(problem, mismatched), Error);
  auto bad_init = config(Algorithm::PDBG_II, 1);
  bad_init.init = SaddleState::zero(4);
  EXPECT_THROW(run(problem, bad_init), Error);
}

TEST(Traces, EpochsToGap) {
  ConvergenceTrace tr;
  tr.rows = {{0, 0, 0, 11.0, 0, 0, 0}, {1, 10, 0, 2.0, 0, 0, 0}, {2, 20, 0, 1.0005, 0, 0, 0}};
  EXPECT_EQ(epochs_to_gap(tr, 1.0, 10, 0.1), 1.0);
  EXPECT_EQ(epochs_to_gap(tr, 1.0, 10, 1e-4), 2.0);
  EXPECT_FALSE(epochs_to_gap(tr, 1.0, 10, 1e-5).has_value());
}
