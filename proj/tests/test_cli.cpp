#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "saddle_td/dataset_io.hpp"
#include "saddle_td/trace_io.hpp"

using namespace saddle_td;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  json parsed() const { return json::parse(out); }
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("saddle_td_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result sh(const std::string& args) const {
    const std::string cmd = "cd '" + dir_.string() + "' && '" SADDLE_TD_CLI "' " + args + " 2>stderr.txt";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  std::string read(const std::string& name) const { return detail::read_file(dir_ / name); }

  void gen_tabular(const std::string& out = "tab.json") const {
    const auto r = sh("gen random-mdp --states 2 --actions 2 --features 2 --feature-kind tabular --gamma 0.5 "
                      "--n 50 --seed 108 --traj-seed 15 --out " + out);
    ASSERT_EQ(r.code, 0) << read("stderr.txt");
  }

  void gen_random(const std::string& out, int features = 5, int n = 2000) const {
    const auto r = sh("gen random-mdp --states 20 --actions 3 --features " + std::to_string(features) +
                      " --n " + std::to_string(n) + " --gamma 0.9 --seed 4 --out " + out);
    ASSERT_EQ(r.code, 0) << read("stderr.txt");
  }

  fs::path dir_;
};

std::vector<double> column(const std::vector<TraceRow>& rows) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.em_mspbe);
  return v;
}

}  // namespace

TEST_F(Cli, GenRandomMdpReportsShape) {
  const auto r = sh("gen random-mdp --states 400 --actions 10 --features 201 --n 20000 --gamma 0.95 --seed 7 "
                    "--out big.json");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  const json j = r.parsed();
  EXPECT_EQ(j["d"], 201);
  EXPECT_EQ(j["n"], 20000);
  EXPECT_EQ(j["mode"], "on-policy");
  EXPECT_TRUE(fs::exists(dir_ / "big.bin"));
  EXPECT_EQ(load_dataset(dir_ / "big.json").d, 201u);
}

TEST_F(Cli, GenRejectsZeroStates) {
  EXPECT_EQ(sh("gen random-mdp --states 0 --out x.json").code, 2);
  EXPECT_FALSE(fs::exists(dir_ / "x.json"));
}

TEST_F(Cli, GenMountainCar) {
  const auto r = sh("gen mountain-car --n 5000 --seed 1 --tiles 10 --tilings 3 --out car.json");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_EQ(r.parsed()["d"], 300);
  EXPECT_EQ(sh("gen mountain-car --n 100 --tiles 10 --tilings 3 --dim 200 --out bad.json").code, 2);
}

TEST_F(Cli, GenOffPolicyAndTraces) {
  const auto r = sh("gen random-mdp --states 10 --actions 2 --features 4 --n 300 --off-policy --lambda 0.5 "
                    "--out op.json");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_EQ(r.parsed()["has_traces"], true);
  EXPECT_EQ(r.parsed()["mode"], "trace");
}

TEST_F(Cli, RunSvrgWithTheoremSteps) {
  gen_tabular();
  const auto r = sh("run --data tab.json --algo svrg --rho 0 --auto-steps --epochs 30 --out svrg.csv");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  const json j = r.parsed();
  EXPECT_EQ(j["rows"], 31);
  EXPECT_LT(j["final"]["omega_sq"].get<double>(), j["initial"]["omega_sq"].get<double>());
  EXPECT_LT(j["final"]["em_mspbe"].get<double>(), j["initial"]["em_mspbe"].get<double>());
  EXPECT_FALSE(j["diverged"].get<bool>());
  const auto rows = read_trace(dir_ / "svrg.csv");
  ASSERT_EQ(rows.size(), 31u);
  for (const auto& row : rows) EXPECT_EQ(row.wall_ns, 0u);
  EXPECT_TRUE(fs::exists(dir_ / "svrg.csv.log"));
}

TEST_F(Cli, TdWithRegularizationIsRejected) {
  gen_tabular();
  const auto r = sh("run --data tab.json --algo td --rho 0.1 --epochs 2");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(read("stderr.txt").find("RhoUnsupported"), std::string::npos);
}

TEST_F(Cli, PdbgModesAgree) {
  gen_random("r.json");
  ASSERT_EQ(sh("run --data r.json --algo pdbg --mode i --rho 0.01 --epochs 40 --out i.csv").code, 0);
  ASSERT_EQ(sh("run --data r.json --algo pdbg --mode ii --rho 0.01 --epochs 40 --out ii.csv").code, 0);
  const auto a = column(read_trace(dir_ / "i.csv"));
  const auto b = column(read_trace(dir_ / "ii.csv"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12 * std::max(1.0, b[k]));
}

TEST_F(Cli, TracesAreByteIdenticalAcrossRuns) {
  gen_random("r.json");
  for (const std::string algo : {"svrg", "saga", "gtd2"}) {
    const std::string common = "run --data r.json --algo " + algo + " --rho 0 --sigma-theta 0.05 --sigma-w 0.5 "
                               "--inner 200 --epochs 5 --seed 3 --out ";
    ASSERT_EQ(sh(common + "a.csv").code, 0) << algo;
    ASSERT_EQ(sh(common + "b.csv").code, 0) << algo;
    EXPECT_EQ(read("a.csv"), read("b.csv")) << algo;
  }
}

TEST_F(Cli, SweepWritesOneTracePerConfiguration) {
  gen_random("r.json");
  const auto r = sh("sweep --data r.json --algos pdbg,saga --epochs 3 --seeds 0 --out-dir grid");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_EQ(r.parsed()["configs"], 36);
  std::size_t traces = 0;
  for (const auto& entry : fs::directory_iterator(dir_ / "grid")) traces += entry.path().extension() == ".csv";
  EXPECT_EQ(traces, 36u);
  const json board = json::parse(read("grid/leaderboard.json"));
  EXPECT_EQ(board["configs"].size(), 36u);
  ASSERT_EQ(board["best"].size(), 2u);
  for (const auto& b : board["best"]) EXPECT_TRUE(fs::exists(dir_ / "grid" / b["trace"].get<std::string>()));
}

TEST_F(Cli, RegularizationSpeedsUpPdbg) {
  ASSERT_EQ(sh("gen random-mdp --states 5 --actions 2 --features 5 --feature-kind tabular --n 2000 --gamma 0.9 "
               "--seed 4 --out r.json").code, 0);
  auto best_epochs = [&](const std::string& rho_rel) {
    const auto r = sh("sweep --data r.json --algos pdbg --rho-rel " + rho_rel + " --epochs 500 --gap 1e-6 "
                      "--out-dir s" + rho_rel);
    EXPECT_EQ(r.code, 0) << read("stderr.txt");
    double fewest = 1e18;
    for (const auto& c : r.parsed()["leaderboard"].is_string()
                             ? json::parse(read("s" + rho_rel + "/leaderboard.json"))["configs"]
                             : json::array()) {
      if (!c["epochs_to_gap"].is_null()) fewest = std::min(fewest, c["epochs_to_gap"].get<double>());
    }
    return fewest;
  };
  const double plain = best_epochs("0");
  const double regularized = best_epochs("1");
  EXPECT_LT(regularized, plain);
}

TEST_F(Cli, EmptyGridIsAValidationError) {
  gen_random("r.json");
  EXPECT_EQ(sh("sweep --data r.json --algos pdbg --theta-grid '' --out-dir e").code, 2);
}

TEST_F(Cli, AnalyzeIdentityToy) {
  std::ofstream csv(dir_ / "toy.csv");
  csv << "phi_0,phi_1,phi_next_0,phi_next_1,reward\n1,0,0,0,1\n0,1,0,0,2\n";
  csv.close();
  const auto r = sh("analyze --data toy.csv --csv-gamma 0.9 --rho 0");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  const json j = r.parsed();
  EXPECT_NEAR(j["spectral_quantities"]["kappa_C"].get<double>(), 1.0, 1e-12);
  EXPECT_TRUE(j["spectral_report"]["all_ok"].get<bool>());
  EXPECT_NEAR(j["theta_star"][0].get<double>(), 1.0, 1e-12);
  EXPECT_NEAR(j["theta_star"][1].get<double>(), 2.0, 1e-12);
}

TEST_F(Cli, AnalyzeRandomMdpEigenvalueBound) {
  gen_random("r.json");
  const auto r = sh("analyze --data r.json --rho 0.01");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  const json j = r.parsed();
  const double mu = j["spectral_quantities"]["mu_rho"];
  EXPECT_TRUE(j["spectral_report"]["all_ok"].get<bool>());
  EXPECT_GE(j["spectral_report"]["lambda_min_G"].get<double>(), 8.0 / 9.0 * mu * (1 - 1e-9));
  EXPECT_GT(j["default_steps"]["svrg"]["inner_iterations"].get<double>(), 0);
}

TEST_F(Cli, AnalyzeRankDeficientFeaturesGivesStructuredError) {
  std::ofstream csv(dir_ / "dup.csv");
  csv << "phi_0,phi_1,phi_2,phi_next_0,phi_next_1,phi_next_2,reward\n";
  for (int t = 0; t < 20; ++t) csv << (t % 3) << ",1,1," << ((t + 1) % 3) << ",1,1," << t % 2 << "\n";
  csv.close();
  const auto r = sh("analyze --data dup.csv --csv-gamma 0.9 --rho 0");
  EXPECT_EQ(r.code, 5);
  const json j = r.parsed();
  EXPECT_EQ(j["error"]["kind"], "NonPositiveSpectrum");
  EXPECT_EQ(j["error"]["exit_code"], 5);
}

TEST_F(Cli, ReportMergesTraces) {
  gen_random("r.json");
  gen_random("r8.json", 8, 500);
  ASSERT_EQ(sh("run --data r.json --algo svrg --rho 0 --inner 200 --epochs 3 --out a.csv").code, 0);
  ASSERT_EQ(sh("run --data r8.json --algo saga --rho 0 --epochs 3 --out b.csv").code, 0);
  const auto r = sh("report a.csv b.csv --label svrg --label saga --out merged.csv");
  ASSERT_EQ(r.code, 0) << read("stderr.txt");
  EXPECT_EQ(r.parsed()["columns"], 13);
  const std::string merged = read("merged.csv");
  const std::string header = merged.substr(0, merged.find('\n'));
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 12);
  EXPECT_NE(header.find("saga:em_mspbe"), std::string::npos);
  EXPECT_EQ(sh("report a.csv missing.csv").code, 4);
}

TEST_F(Cli, ConfigFileSubstitutesForFlags) {
  gen_tabular();
  std::ofstream cfg(dir_ / "run.json");
  cfg << R"({"data": "tab.json", "algo": "saga", "rho": 0.01, "epochs": 4, "out": "cfg.csv"})";
  cfg.close();
  const auto a = sh("run --config run.json");
  ASSERT_EQ(a.code, 0) << read("stderr.txt");
  ASSERT_EQ(sh("run --data tab.json --algo saga --rho 0.01 --epochs 4 --out flags.csv").code, 0);
  EXPECT_EQ(read("cfg.csv"), read("flags.csv"));
  EXPECT_EQ(a.parsed()["algorithm"], "saga");
}
