// saddle_td: dataset generation, solver runs, step-size sweeps, spectral
// analysis and trace merging for saddle-point policy evaluation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <nlohmann/json.hpp>

#include "saddle_td/saddle_td.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace saddle_td;

namespace {

/// Replaces "--config FILE" with the flags of a flat JSON object
/// ({"flag": value}); flags already on the command line take precedence.
/// Arrays expand to one occurrence per element and "traces" supplies
/// positional arguments.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find_if(args.begin(), args.end(),
                         [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
  if (it == args.end()) return args;
  std::string file;
  if (*it == "--config") {
    if (it + 1 == args.end()) throw CLI::ArgumentMismatch("--config needs a file");
    file = *(it + 1);
    it = args.erase(it, it + 2);
  } else {
    file = it->substr(9);
    it = args.erase(it);
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(file));
  } catch (const nlohmann::json::exception& e) {
    throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto scalar = [](const nlohmann::json& v, const std::string& key) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("unsupported value for '" + key + "'");
  };
  std::vector<std::string> flags, positional;
  for (const auto& [key, value] : j.items()) {
    if (key == "traces") {
      for (const auto& v : value.is_array() ? value : nlohmann::json::array({value})) {
        positional.push_back(scalar(v, key));
      }
      continue;
    }
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) flags.push_back(flag);
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + scalar(v, key);
      if (key == "label") {
        for (const auto& v : value) {
          flags.push_back(flag);
          flags.push_back(scalar(v, key));
        }
      } else {
        flags.push_back(flag);
        flags.push_back(joined);
      }
    } else {
      flags.push_back(flag);
      flags.push_back(scalar(value, key));
    }
  }
  it = args.insert(it, flags.begin(), flags.end());
  args.insert(args.end(), positional.begin(), positional.end());
  return args;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

json error_json(const std::string& kind, const std::string& message, int code) {
  return json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}};
}

json row_json(const TraceRow& r) {
  return json{{"epoch", r.epoch},         {"grad_evals", r.grad_evals}, {"em_mspbe", r.em_mspbe},
              {"dist_theta", r.dist_theta}, {"dist_w", r.dist_w},       {"omega_sq", r.omega_sq}};
}

json vector_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

json dataset_summary(const PolicyEvalDataset& data) {
  return json{{"n", data.size()},
              {"d", data.d},
              {"gamma", data.gamma},
              {"lambda", data.lambda},
              {"mode", table_row_name(table_row(data))},
              {"has_traces", data.has_traces()}};
}

std::optional<TableRow> parse_table_row(const std::string& name) {
  if (name.empty() || name == "auto") return std::nullopt;
  for (TableRow r : {TableRow::OnPolicy, TableRow::OffPolicy, TableRow::Trace}) {
    if (name == table_row_name(r)) return r;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown table row '" + name + "'");
}

/// Resolves "pdbg" plus --mode into PDBG_I / PDBG_II.
Algorithm resolve_algorithm(const std::string& name, const std::string& mode) {
  if (name == "pdbg") {
    if (mode == "i") return Algorithm::PDBG_I;
    if (mode == "ii" || mode.empty()) return Algorithm::PDBG_II;
    throw Error(ErrorKind::InvalidArgument, "--mode must be i or ii");
  }
  return parse_algorithm(name);
}

double lambda_max_normal(const PolicyEvalDataset& data, std::optional<TableRow> mode) {
  const EmpiricalStatistics stats = assemble_statistics(data, mode.value_or(table_row(data)));
  return spectral_quantities(stats, 0.0).L();
}

double resolve_rho(const PolicyEvalDataset& data, std::optional<TableRow> mode, const std::optional<double>& rho,
                   const std::optional<double>& rho_rel) {
  if (rho && rho_rel) throw Error(ErrorKind::InvalidArgument, "use either --rho or --rho-rel");
  if (rho_rel) return *rho_rel * lambda_max_normal(data, mode);
  return rho.value_or(0.0);
}

std::string multiplier_tag(double x) {
  std::ostringstream ss;
  ss << x;
  std::string s = ss.str();
  std::replace(s.begin(), s.end(), '.', 'p');
  std::replace(s.begin(), s.end(), '-', 'm');
  std::replace(s.begin(), s.end(), '+', 'P');
  return s;
}

void append_sidecar(const fs::path& log, const json& entry) {
  std::ofstream out(log, std::ios::app);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + log.string());
  out << entry.dump() << "\n";
}

// ---------------------------------------------------------------- gen

struct GenRandomArgs {
  int states = 400, actions = 10, features = 201;
  std::size_t n = 20000;
  double gamma = 0.95;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> traj_seed;
  bool off_policy = false;
  std::string feature_kind = "uniform";
  std::optional<double> lambda;
  std::size_t burn_in = 1000;
  std::string out = "dataset.json";
};

int cmd_gen_random(const GenRandomArgs& a) {
  const FeatureKind kind = a.feature_kind == "tabular" ? FeatureKind::Tabular : FeatureKind::Uniform;
  const RandomMdp r = random_mdp(a.states, a.actions, a.features, a.seed, a.gamma, kind);
  const std::uint64_t traj_seed = a.traj_seed.value_or(a.seed + 1);
  PolicyEvalDataset data =
      sample_trajectory(r.mdp, r.behavior, a.off_policy ? r.target : r.behavior, a.n, traj_seed, a.burn_in);
  if (a.lambda) data = apply_eligibility_traces(data, *a.lambda, data.gamma);
  data.provenance["generator"] = "random_mdp";
  data.provenance["states"] = std::to_string(a.states);
  data.provenance["actions"] = std::to_string(a.actions);
  data.provenance["features"] = a.feature_kind;
  data.provenance["mdp_seed"] = std::to_string(a.seed);
  data.provenance["trajectory_seed"] = std::to_string(traj_seed);
  data.provenance["policy"] = a.off_policy ? "behavior/target" : "behavior";
  save_dataset(data, a.out);
  json j = dataset_summary(data);
  j["manifest"] = a.out;
  j["blob"] = blob_path_for(a.out).string();
  print_json(j);
  return 0;
}

struct GenCarArgs {
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  int tiles = 10, tilings = 3, dim = 0;
  double gamma = 0.95;
  double explore = 0.0;
  std::optional<double> lambda;
  std::string out = "mountain_car.json";
};

int cmd_gen_car(const GenCarArgs& a) {
  PolicyEvalDataset data = mountain_car_dataset(a.n, a.seed, TileConfig{a.tiles, a.tilings, a.dim}, a.gamma, a.explore);
  if (a.lambda) data = apply_eligibility_traces(data, *a.lambda, data.gamma);
  save_dataset(data, a.out);
  json j = dataset_summary(data);
  j["manifest"] = a.out;
  j["blob"] = blob_path_for(a.out).string();
  print_json(j);
  return 0;
}

// ---------------------------------------------------------------- run

struct RunArgs {
  std::string data;
  double csv_gamma = 0.95;
  std::string algo = "svrg";
  std::string mode;
  std::string table_row;
  std::optional<double> rho, rho_rel;
  bool auto_steps = false;
  std::optional<double> sigma_theta, sigma_w;
  std::optional<std::uint64_t> inner;
  std::uint64_t epochs = 30, seed = 0, eval_every = 1, max_grad_evals = 0;
  std::string out = "trace.csv";
  bool wall_time = false;
  std::string log;
};

int cmd_run(const RunArgs& a) {
  const PolicyEvalDataset data = load_dataset(a.data, a.csv_gamma);
  const std::optional<TableRow> row = parse_table_row(a.table_row);
  SolverConfig cfg;
  cfg.algorithm = resolve_algorithm(a.algo, a.mode);
  cfg.mode = row;
  if (cfg.algorithm == Algorithm::TD && ((a.rho && *a.rho > 0.0) || (a.rho_rel && *a.rho_rel > 0.0))) {
    throw Error(ErrorKind::RhoUnsupported, "TD targets the unregularized fixed point; rho must be 0");
  }
  cfg.rho = resolve_rho(data, row, a.rho, a.rho_rel);
  if (a.sigma_theta.has_value() != a.sigma_w.has_value()) {
    throw Error(ErrorKind::InvalidArgument, "--sigma-theta and --sigma-w go together");
  }
  if (a.auto_steps && a.sigma_theta) throw Error(ErrorKind::InvalidArgument, "--auto-steps excludes explicit steps");
  if (a.sigma_theta) cfg.steps = StepSizes(*a.sigma_theta, *a.sigma_w);
  cfg.inner_iterations = a.inner;
  cfg.epochs = a.epochs;
  cfg.seed = a.seed;
  cfg.eval_every = a.eval_every;
  cfg.max_grad_evals = a.max_grad_evals;

  const Problem problem(data, cfg.rho, row);
  const auto t0 = std::chrono::steady_clock::now();
  const ConvergenceTrace trace = run(problem, cfg);
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  write_trace(trace.rows, a.out, a.wall_time);

  const fs::path log = a.log.empty() ? fs::path(a.out + ".log") : fs::path(a.log);
  append_sidecar(log, json{{"command", "run"},
                           {"trace", a.out},
                           {"elapsed_ns", std::chrono::duration_cast<std::chrono::nanoseconds>(elapsed).count()},
                           {"solver_ns", trace.rows.back().wall_ns},
                           {"unix_time", std::chrono::duration_cast<std::chrono::seconds>(
                                             std::chrono::system_clock::now().time_since_epoch())
                                             .count()}});

  json j{{"algorithm", algorithm_name(cfg.algorithm)},
         {"table_row", table_row_name(problem.mode())},
         {"rho", cfg.rho},
         {"sigma_theta", trace.steps->sigma_theta()},
         {"sigma_w", trace.steps->sigma_w()},
         {"inner_iterations", trace.inner_iterations},
         {"rows", trace.rows.size()},
         {"initial", row_json(trace.rows.front())},
         {"final", row_json(trace.rows.back())},
         {"optimal_em_mspbe", problem.optimal_value()},
         {"diverged", trace.diverged},
         {"budget_exhausted", trace.budget_exhausted},
         {"trace", a.out}};
  print_json(j);
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string data;
  double csv_gamma = 0.95;
  std::vector<std::string> algos{"pdbg", "svrg", "saga", "gtd2"};
  std::vector<double> theta_grid{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
  std::vector<double> w_grid{1.0, 1e-1, 1e-2};
  std::vector<double> rho_rel{0.0};
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t epochs = 50;
  double gap = 1e-4;
  std::string table_row;
  std::string out_dir = "sweep";
  int threads = 0;
};

struct SweepJob {
  Algorithm algorithm;
  std::size_t rho_index;
  double theta_mult, w_mult;
  std::uint64_t seed;
  std::string file;
};

struct SweepResult {
  bool ok = false;
  std::string error_kind, error_message;
  TraceRow final_row;
  std::optional<double> epochs_to_gap;
  double sigma_theta = 0.0, sigma_w = 0.0;
  bool diverged = false;
};

int sweep_threads(int requested, std::size_t jobs) {
  int t = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("SADDLE_TD_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) t = std::min(t, cap);
  }
  return std::max(1, std::min<int>(t, static_cast<int>(std::max<std::size_t>(jobs, 1))));
}

int cmd_sweep(const SweepArgs& a) {
  if (a.algos.empty() || a.theta_grid.empty() || a.w_grid.empty() || a.rho_rel.empty() || a.seeds.empty()) {
    throw Error(ErrorKind::InvalidArgument, "sweep grids must be non-empty");
  }
  auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
  if (!std::all_of(a.theta_grid.begin(), a.theta_grid.end(), positive) ||
      !std::all_of(a.w_grid.begin(), a.w_grid.end(), positive)) {
    throw Error(ErrorKind::InvalidArgument, "step-size multipliers must be positive");
  }
  if (!std::all_of(a.rho_rel.begin(), a.rho_rel.end(), [](double x) { return std::isfinite(x) && x >= 0.0; })) {
    throw Error(ErrorKind::InvalidArgument, "--rho-rel values must be non-negative");
  }
  if (a.epochs < 1) throw Error(ErrorKind::InvalidArgument, "--epochs must be at least 1");
  const PolicyEvalDataset data = load_dataset(a.data, a.csv_gamma);
  const std::optional<TableRow> row = parse_table_row(a.table_row);
  std::vector<Algorithm> algorithms;
  for (const auto& name : a.algos) algorithms.push_back(resolve_algorithm(name, ""));

  const double lmax = lambda_max_normal(data, row);
  std::vector<double> rhos;
  std::vector<std::unique_ptr<Problem>> problems;
  std::vector<std::string> problem_errors;
  for (double rel : a.rho_rel) {
    rhos.push_back(rel * lmax);
    try {
      problems.push_back(std::make_unique<Problem>(data, rhos.back(), row));
      problem_errors.emplace_back();
    } catch (const Error& e) {
      problems.push_back(nullptr);
      problem_errors.emplace_back(e.what());
    }
  }

  fs::create_directories(a.out_dir);
  std::vector<SweepJob> jobs;
  for (Algorithm alg : algorithms) {
    for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
      for (double mt : a.theta_grid) {
        for (double mw : a.w_grid) {
          for (std::uint64_t seed : a.seeds) {
            const std::string file = std::string(algorithm_name(alg)) + "_rho" + multiplier_tag(a.rho_rel[ri]) +
                                     "_t" + multiplier_tag(mt) + "_w" + multiplier_tag(mw) + "_s" +
                                     std::to_string(seed) + ".csv";
            jobs.push_back({alg, ri, mt, mw, seed, file});
          }
        }
      }
    }
  }

  std::vector<SweepResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const SweepJob& job = jobs[i];
      SweepResult& res = results[i];
      try {
        if (!problems[job.rho_index]) {
          throw Error(ErrorKind::SingularC, problem_errors[job.rho_index]);
        }
        const Problem& p = *problems[job.rho_index];
        const SpectralQuantities& sq = p.spectral();
        SolverConfig cfg;
        cfg.algorithm = job.algorithm;
        cfg.rho = p.rho();
        cfg.mode = row;
        cfg.seed = job.seed;
        cfg.steps = StepSizes(job.theta_mult / (sq.L_rho * sq.kappa_C), job.w_mult / sq.lambda_max_C);
        cfg.inner_iterations = 2 * p.n();
        cfg.epochs = a.epochs;
        if (job.algorithm == Algorithm::SVRG) {
          // Each outer epoch costs n + 2N = 5n evaluations; keep the budget in passes.
          cfg.epochs = std::max<std::uint64_t>(1, (a.epochs + 4) / 5);
          cfg.max_grad_evals = a.epochs * p.n();
        }
        const ConvergenceTrace trace = run(p, cfg);
        write_trace(trace.rows, fs::path(a.out_dir) / job.file);
        res.ok = true;
        res.final_row = trace.rows.back();
        res.diverged = trace.diverged;
        res.sigma_theta = cfg.steps->sigma_theta();
        res.sigma_w = cfg.steps->sigma_w();
        res.epochs_to_gap = epochs_to_gap(trace, p.optimal_value(), p.n(), a.gap);
      } catch (const Error& e) {
        res.error_kind = std::string(error_name(e.kind()));
        res.error_message = e.what();
      } catch (const std::exception& e) {
        res.error_kind = "Internal";
        res.error_message = e.what();
      }
    }
  };
  const int n_threads = sweep_threads(a.threads, jobs.size());
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  json configs = json::array();
  json best = json::array();
  std::size_t failures = 0;
  for (Algorithm alg : algorithms) {
    for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
      std::optional<std::size_t> winner;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].algorithm != alg || jobs[i].rho_index != ri) continue;
        const SweepResult& r = results[i];
        json c{{"algorithm", algorithm_name(alg)},   {"rho_rel", a.rho_rel[ri]},       {"rho", rhos[ri]},
               {"theta_mult", jobs[i].theta_mult}, {"w_mult", jobs[i].w_mult},       {"seed", jobs[i].seed},
               {"trace", jobs[i].file},             {"status", r.ok ? "ok" : "error"}};
        if (r.ok) {
          c["sigma_theta"] = r.sigma_theta;
          c["sigma_w"] = r.sigma_w;
          c["final"] = row_json(r.final_row);
          c["diverged"] = r.diverged;
          c["epochs_to_gap"] = r.epochs_to_gap ? json(*r.epochs_to_gap) : json(nullptr);
          const bool finite = std::isfinite(r.final_row.em_mspbe);
          if (finite && (!winner || r.final_row.em_mspbe < results[*winner].final_row.em_mspbe)) winner = i;
        } else {
          ++failures;
          c["error"] = {{"kind", r.error_kind}, {"message", r.error_message}};
        }
        configs.push_back(std::move(c));
      }
      json b{{"algorithm", algorithm_name(alg)}, {"rho_rel", a.rho_rel[ri]}, {"rho", rhos[ri]}};
      if (winner) {
        const SweepResult& r = results[*winner];
        b["theta_mult"] = jobs[*winner].theta_mult;
        b["w_mult"] = jobs[*winner].w_mult;
        b["seed"] = jobs[*winner].seed;
        b["final_em_mspbe"] = r.final_row.em_mspbe;
        b["epochs_to_gap"] = r.epochs_to_gap ? json(*r.epochs_to_gap) : json(nullptr);
        b["trace"] = jobs[*winner].file;
      } else {
        b["status"] = "no successful configuration";
      }
      best.push_back(std::move(b));
    }
  }
  json board{{"dataset", a.data},
             {"lambda_max_normal", lmax},
             {"gap", a.gap},
             {"budget_epochs", a.epochs},
             {"svrg_inner", 2 * data.size()},
             {"best", best},
             {"configs", configs}};
  detail::write_file(fs::path(a.out_dir) / "leaderboard.json", board.dump(2) + "\n");
  print_json(json{{"configs", jobs.size()},
                  {"failures", failures},
                  {"leaderboard", (fs::path(a.out_dir) / "leaderboard.json").string()},
                  {"best", best}});
  return 0;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string data;
  double csv_gamma = 0.95;
  std::optional<double> rho, rho_rel;
  std::string table_row;
  std::string out;
};

int cmd_analyze(const AnalyzeArgs& a) {
  const PolicyEvalDataset data = load_dataset(a.data, a.csv_gamma);
  const std::optional<TableRow> row = parse_table_row(a.table_row);
  const TableRow mode = row.value_or(table_row(data));
  const EmpiricalStatistics stats = assemble_statistics(data, mode);
  const double rho = a.rho_rel ? *a.rho_rel * [&] {
    require_assumptions(stats, 0.0);
    return spectral_quantities(stats, 0.0).L();
  }() : a.rho.value_or(0.0);
  if (a.rho && a.rho_rel) throw Error(ErrorKind::InvalidArgument, "use either --rho or --rho-rel");
  require_assumptions(stats, rho);

  const SpectralQuantities sq = spectral_quantities(stats, rho);
  if (!(sq.mu_rho > 1e-12 * sq.L_rho)) throw Error(ErrorKind::NonPositiveSpectrum, "mu_rho is not positive");
  const LstdSolution opt = lstd_solve(stats, rho);
  SpectralReport rep = analyze_spectrum(stats, rho);
  rep.L_G = compute_LG(data, rho, rep.beta, mode);

  json steps = json::object();
  for (Algorithm alg : {Algorithm::PDBG_II, Algorithm::SVRG, Algorithm::SAGA}) {
    const StepDefaults d = default_step_sizes(sq, rep.L_G, data.size(), alg);
    json s{{"sigma_theta", d.steps.sigma_theta()}, {"sigma_w", d.steps.sigma_w()}, {"beta", d.steps.beta()}};
    if (alg == Algorithm::SVRG) s["inner_iterations"] = d.inner_iterations;
    steps[alg == Algorithm::PDBG_II ? "pdbg" : std::string(algorithm_name(alg))] = s;
  }

  json j{{"dataset", dataset_summary(data)},
         {"table_row", table_row_name(mode)},
         {"rho", rho},
         {"spectral_quantities",
          {{"L_rho", sq.L_rho},
           {"mu_rho", sq.mu_rho},
           {"lambda_min_C", sq.lambda_min_C},
           {"lambda_max_C", sq.lambda_max_C},
           {"kappa_C", sq.kappa_C}}},
         {"spectral_report",
          {{"eigs_real", rep.eigs_real},
           {"eigs_positive", rep.eigs_positive},
           {"h_positive_definite", rep.h_positive_definite},
           {"hg_symmetric", rep.hg_symmetric},
           {"beta_margin_ok", rep.beta_margin_ok},
           {"kappa_Q_ok", rep.kappa_Q_ok},
           {"lower_bound_ok", rep.lower_bound_ok},
           {"upper_bound_ok", rep.upper_bound_ok},
           {"all_ok", rep.all_ok()},
           {"lambda_min_G", rep.lambda_min_G},
           {"lambda_max_G", rep.lambda_max_G},
           {"max_imag_G", rep.max_imag_G},
           {"lambda_min_G_bound", rep.lambda_min_G_bound},
           {"lambda_max_G_bound", rep.lambda_max_G_bound},
           {"kappa_Q_sq", rep.kappa_Q_sq},
           {"kappa_Q_bound", rep.kappa_Q_bound},
           {"beta", rep.beta},
           {"beta_threshold", rep.beta_threshold},
           {"delta", rep.delta}}},
         {"L_G", rep.L_G},
         {"theta_star", vector_json(opt.theta)},
         {"w_star", vector_json(opt.w)},
         {"optimal_em_mspbe", em_mspbe(stats, opt.theta, rho)},
         {"default_steps", steps}};
  if (!a.out.empty()) detail::write_file(a.out, j.dump(2) + "\n");
  print_json(j);
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::vector<std::string> traces;
  std::vector<std::string> labels;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  if (a.traces.empty()) throw Error(ErrorKind::InvalidArgument, "report needs at least one trace");
  if (!a.labels.empty() && a.labels.size() != a.traces.size()) {
    throw Error(ErrorKind::InvalidArgument, "--label count must match the trace count");
  }
  std::vector<LabeledTrace> traces;
  for (std::size_t i = 0; i < a.traces.size(); ++i) {
    const std::string label = a.labels.empty() ? fs::path(a.traces[i]).stem().string() : a.labels[i];
    traces.push_back({label, read_trace(a.traces[i])});
  }
  const std::string merged = merge_traces(traces);
  if (a.out.empty()) {
    std::cout << merged;
  } else {
    detail::write_file(a.out, merged);
    print_json(json{{"traces", a.traces.size()},
                    {"columns", 1 + traces.size() * kTraceMetrics.size()},
                    {"out", a.out}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saddle-point policy evaluation: generate datasets, run solvers, sweep, analyze, report"};
  app.require_subcommand(1);

  GenRandomArgs gr;
  GenCarArgs gc;
  RunArgs ra;
  SweepArgs sa;
  AnalyzeArgs aa;
  ReportArgs rp;
  std::function<int()> action;
  std::string config_file;

  auto* gen = app.add_subcommand("gen", "Generate a dataset");
  gen->require_subcommand(1);
  auto* grm = gen->add_subcommand("random-mdp", "Random MDP trajectory");
  grm->add_option("--config", config_file, "JSON file with flag values");
  grm->add_option("--states", gr.states)->check(CLI::PositiveNumber);
  grm->add_option("--actions", gr.actions)->check(CLI::PositiveNumber);
  grm->add_option("--features", gr.features)->check(CLI::PositiveNumber);
  grm->add_option("--n", gr.n)->check(CLI::PositiveNumber);
  grm->add_option("--gamma", gr.gamma)->check(CLI::Range(0.0, 1.0));
  grm->add_option("--seed", gr.seed);
  grm->add_option("--traj-seed", gr.traj_seed, "Trajectory seed (default: seed + 1)");
  grm->add_flag("--off-policy", gr.off_policy, "Sample with the behavior policy and weight toward the target");
  grm->add_option("--feature-kind", gr.feature_kind)->check(CLI::IsMember({"uniform", "tabular"}));
  grm->add_option("--lambda", gr.lambda, "Attach eligibility traces with this lambda")->check(CLI::NonNegativeNumber);
  grm->add_option("--burn-in", gr.burn_in);
  grm->add_option("--out", gr.out, "Manifest path; the blob is written next to it");
  grm->callback([&] { action = [&] { return cmd_gen_random(gr); }; });

  auto* gmc = gen->add_subcommand("mountain-car", "Mountain Car with tile-coded features");
  gmc->add_option("--config", config_file, "JSON file with flag values");
  gmc->add_option("--n", gc.n)->check(CLI::PositiveNumber);
  gmc->add_option("--seed", gc.seed);
  gmc->add_option("--tiles", gc.tiles, "Tiles per dimension")->check(CLI::PositiveNumber);
  gmc->add_option("--tilings", gc.tilings)->check(CLI::PositiveNumber);
  gmc->add_option("--dim", gc.dim, "Expected feature dimension (0: no check)");
  gmc->add_option("--gamma", gc.gamma)->check(CLI::Range(0.0, 1.0));
  gmc->add_option("--explore", gc.explore, "Probability of a random throttle")->check(CLI::Range(0.0, 1.0));
  gmc->add_option("--lambda", gc.lambda)->check(CLI::NonNegativeNumber);
  gmc->add_option("--out", gc.out);
  gmc->callback([&] { action = [&] { return cmd_gen_car(gc); }; });

  auto* run_cmd = app.add_subcommand("run", "Run one solver configuration");
  run_cmd->add_option("--config", config_file, "JSON file with flag values");
  run_cmd->add_option("--data", ra.data)->required();
  run_cmd->add_option("--csv-gamma", ra.csv_gamma, "Discount for CSV datasets");
  run_cmd->add_option("--algo", ra.algo)
      ->check(CLI::IsMember({"pdbg", "pdbg-i", "pdbg-ii", "svrg", "saga", "gtd2", "td"}));
  run_cmd->add_option("--mode", ra.mode, "PDBG implementation: i (sample pass) or ii (statistics)")
      ->check(CLI::IsMember({"i", "ii"}));
  run_cmd->add_option("--table-row", ra.table_row)->check(CLI::IsMember({"auto", "on-policy", "off-policy", "trace"}));
  run_cmd->add_option("--rho", ra.rho)->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--rho-rel", ra.rho_rel, "rho as a multiple of lambda_max(A^T C^-1 A)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_flag("--auto-steps", ra.auto_steps, "Theorem step sizes (the default)");
  run_cmd->add_option("--sigma-theta", ra.sigma_theta)->check(CLI::PositiveNumber);
  run_cmd->add_option("--sigma-w", ra.sigma_w)->check(CLI::PositiveNumber);
  run_cmd->add_option("--inner", ra.inner, "SVRG inner iterations")->check(CLI::PositiveNumber);
  run_cmd->add_option("--epochs", ra.epochs)->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", ra.seed);
  run_cmd->add_option("--eval-every", ra.eval_every)->check(CLI::PositiveNumber);
  run_cmd->add_option("--max-grad-evals", ra.max_grad_evals, "Evaluation budget (0: none)");
  run_cmd->add_option("--out", ra.out);
  run_cmd->add_flag("--wall-time", ra.wall_time, "Write measured wall time into the trace");
  run_cmd->add_option("--log", ra.log, "Sidecar log (default: <out>.log)");
  run_cmd->callback([&] { action = [&] { return cmd_run(ra); }; });

  auto* sweep = app.add_subcommand("sweep", "Step-size grid sweep");
  sweep->add_option("--config", config_file, "JSON file with flag values");
  sweep->add_option("--data", sa.data)->required();
  sweep->add_option("--csv-gamma", sa.csv_gamma);
  sweep->add_option("--algos", sa.algos)->delimiter(',');
  sweep->add_option("--theta-grid", sa.theta_grid, "Multipliers of 1/(L_rho kappa(C))")->delimiter(',');
  sweep->add_option("--w-grid", sa.w_grid, "Multipliers of 1/lambda_max(C)")->delimiter(',');
  sweep->add_option("--rho-rel", sa.rho_rel, "Multiples of lambda_max(A^T C^-1 A)")->delimiter(',');
  sweep->add_option("--seeds", sa.seeds)->delimiter(',');
  sweep->add_option("--epochs", sa.epochs, "Budget in passes over the data");
  sweep->add_option("--gap", sa.gap, "Relative em_mspbe gap for epochs_to_gap");
  sweep->add_option("--table-row", sa.table_row)->check(CLI::IsMember({"auto", "on-policy", "off-policy", "trace"}));
  sweep->add_option("--out-dir", sa.out_dir);
  sweep->add_option("--threads", sa.threads, "Worker threads (capped by SADDLE_TD_THREADS)");
  sweep->callback([&] { action = [&] { return cmd_sweep(sa); }; });

  auto* analyze = app.add_subcommand("analyze", "Spectral report and theorem step sizes");
  analyze->add_option("--config", config_file, "JSON file with flag values");
  analyze->add_option("--data", aa.data)->required();
  analyze->add_option("--csv-gamma", aa.csv_gamma);
  analyze->add_option("--rho", aa.rho)->check(CLI::NonNegativeNumber);
  analyze->add_option("--rho-rel", aa.rho_rel)->check(CLI::NonNegativeNumber);
  analyze->add_option("--table-row", aa.table_row)->check(CLI::IsMember({"auto", "on-policy", "off-policy", "trace"}));
  analyze->add_option("--out", aa.out);
  analyze->callback([&] { action = [&] { return cmd_analyze(aa); }; });

  auto* report = app.add_subcommand("report", "Merge traces on a common grad_evals axis");
  report->add_option("--config", config_file, "JSON file with flag values");
  report->add_option("traces", rp.traces, "Trace CSV files")->required();
  report->add_option("--label", rp.labels, "Column label per trace");
  report->add_option("--out", rp.out, "Merged CSV (default: standard output)");
  report->callback([&] { action = [&] { return cmd_report(rp); }; });

  try {
    std::vector<std::string> args = expand_config(std::vector<std::string>(argv + 1, argv + argc));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << error_json(std::string(error_name(e.kind())), e.what(), exit_code(e.kind())).dump() << "\n";
    return exit_code(e.kind());
  }

  const bool structured = analyze->parsed();
  try {
    return action();
  } catch (const Error& e) {
    const int code = exit_code(e.kind());
    const json err = error_json(std::string(error_name(e.kind())), e.what(), code);
    if (structured) print_json(err);
    std::cerr << err.dump() << "\n";
    return code;
  } catch (const std::exception& e) {
    const json err = error_json("Internal", e.what(), 1);
    if (structured) print_json(err);
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
