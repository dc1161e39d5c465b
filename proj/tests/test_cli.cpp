// End-to-end tests of the dlac executable on tiny configurations.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "dlac/io.hpp"

using namespace dlac;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    // ctest runs every test case in its own process; keep their scratch space apart.
    fs::path d = fs::temp_directory_path() / ("dlac_cli_tests_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(DLAC_CLI_PATH) + " " + args + " > " + (work_dir() / "last.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// A small reference grid and a few-second training run.
json tiny_config() {
  json c;
  c["references"] = {{"grid", {{"low", {2.9e6, 1.0e6, 1.717e6}}, {"high", {3.1e6, 1.1e6, 1.8e6}}, {"points", 2}}}};
  c["train"] = {{"n_eps_max", 4}, {"n_steps", 20},   {"n_eps_min", 2},   {"n_eps_interval", 2},
                {"n_update", 3},  {"batch_size", 16}, {"hidden", {8, 8}}, {"eval_references", 2}};
  c["evaluate"] = {{"dwell_h", 0.1}, {"references", 2}, {"trajectories", 3}, {"lyapunov_rollouts", 2},
                   {"lyapunov_horizon", 20}};
  c["diagnose"] = {{"chains", 2}, {"chain_steps", 40}, {"lyapunov_rollouts", 2}, {"lyapunov_horizon", 20}};
  return c;
}

fs::path write_config(const std::string& name, const json& c) {
  const fs::path p = work_dir() / name;
  write_json(p, c);
  return p;
}

/// Trains once and returns the checkpoint directory.
const fs::path& trained_checkpoints() {
  static const fs::path dir = [] {
    const fs::path cfg = write_config("train.json", tiny_config());
    const fs::path out = work_dir() / "train_a";
    EXPECT_EQ(run("--config " + cfg.string() + " --out-dir " + out.string() + " train"), 0) << slurp(work_dir() / "last.log");
    return out / "checkpoints";
  }();
  return dir;
}

}  // namespace

TEST(Cli, SimulateAtEquilibriumStaysPut) {
  json c = tiny_config();
  c["simulate"] = {{"initial", "reference"}, {"disturbance", "none"}, {"steps", 500}};
  const fs::path out = work_dir() / "sim";
  ASSERT_EQ(run("--config " + write_config("sim.json", c).string() + " --out-dir " + out.string() + " simulate"), 0);
  const CsvTable t = read_csv(out / "trajectory.csv");
  ASSERT_EQ(t.rows.size(), 501u);
  EXPECT_NEAR(t.column("time_h").back(), 2.5, 1e-12);
  for (const char* n : kStateNames) {
    const auto col = t.column(n);
    for (double v : col) EXPECT_NEAR(v, col.front(), 1e-4 * std::max(1.0, std::abs(col.front()))) << n;
  }
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  const RunManifest m = RunManifest::from_json(read_json(out / "manifest.json"));
  EXPECT_EQ(m.command, "simulate");
  EXPECT_EQ(m.outputs, std::vector<std::string>{"trajectory.csv"});
}

TEST(Cli, RefsOnSingletonGrid) {
  json c;
  c["references"] = {{"grid", {{"low", {2.9e6, 1.0e6, 1.717e6}}, {"high", {2.9e6, 1.0e6, 1.717e6}}, {"points", 1}}}};
  const fs::path out = work_dir() / "refs";
  ASSERT_EQ(run("--config " + write_config("refs.json", c).string() + " --out-dir " + out.string() + " refs"), 0);
  EXPECT_EQ(read_csv(out / "reference_set.csv").rows.size(), 1u);
  const CsvTable sel = read_csv(out / "selected_references.csv");
  ASSERT_EQ(sel.rows.size(), 3u);
  EXPECT_EQ(sel.column("x_A1")[0], sel.column("x_A1")[2]);
  EXPECT_EQ(read_csv(out / "tabulated_deviation.csv").rows.size(), 3u);
}

TEST(Cli, TrainWritesLogAndCheckpointsReproducibly) {
  const fs::path ck = trained_checkpoints();
  for (int i = 1; i <= 3; ++i) EXPECT_TRUE(fs::exists(ck / ("controller_" + std::to_string(i) + ".ckpt")));
  const CsvTable log = read_csv(ck.parent_path() / "train_log.csv");
  EXPECT_EQ(log.column("episode"), (std::vector<double>{0, 2, 4}));

  const fs::path again = work_dir() / "train_b";
  ASSERT_EQ(run("--config " + (work_dir() / "train.json").string() + " --out-dir " + again.string() + " train"), 0);
  EXPECT_EQ(slurp(again / "train_log.csv"), slurp(ck.parent_path() / "train_log.csv"));
  for (int i = 1; i <= 3; ++i) {
    const std::string f = "checkpoints/controller_" + std::to_string(i) + ".ckpt";
    EXPECT_EQ(slurp(again / f), slurp(ck.parent_path() / f));
  }
  // The manifest reproduces the run when passed back as the config.
  const fs::path third = work_dir() / "train_c";
  ASSERT_EQ(run("--config " + (again / "manifest.json").string() + " --out-dir " + third.string() + " train"), 0);
  EXPECT_EQ(slurp(third / "train_log.csv"), slurp(again / "train_log.csv"));
}

TEST(Cli, DifferentSeedChangesTraining) {
  trained_checkpoints();
  const fs::path out = work_dir() / "train_seed";
  ASSERT_EQ(run("--config " + (work_dir() / "train.json").string() + " --seed 99 --out-dir " + out.string() + " train"), 0);
  EXPECT_NE(slurp(out / "train_log.csv"), slurp(work_dir() / "train_a" / "train_log.csv"));
}

TEST(Cli, EvaluateProducesReportsDeterministically) {
  const fs::path ck = trained_checkpoints();
  const fs::path cfg = work_dir() / "train.json";
  const fs::path a = work_dir() / "eval_a", b = work_dir() / "eval_b";
  ASSERT_EQ(run("--config " + cfg.string() + " --checkpoint " + ck.string() + " --out-dir " + a.string() + " evaluate"), 0)
      << slurp(work_dir() / "last.log");
  ASSERT_EQ(run("--config " + cfg.string() + " --checkpoint " + ck.string() + " --out-dir " + b.string() + " evaluate"), 0);
  for (const char* f : {"tracking_report.csv", "trajectory_statistics.csv", "lyapunov_report.csv"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  EXPECT_EQ(read_csv(a / "tracking_report.csv").rows.size(), 2u);
  EXPECT_EQ(read_csv(a / "trajectory_statistics.csv").rows.size(), 21u);

  json w2 = tiny_config();
  w2["evaluate"]["disturbance"] = "w2";
  const fs::path c = work_dir() / "eval_w2";
  EXPECT_EQ(run("--config " + write_config("w2.json", w2).string() + " --checkpoint " + ck.string() + " --out-dir " +
                c.string() + " evaluate"),
            0);
}

TEST(Cli, TrackSwitchesAtDwellBoundaries) {
  const fs::path ck = trained_checkpoints();
  const fs::path out = work_dir() / "track";
  ASSERT_EQ(run("--config " + (work_dir() / "train.json").string() + " --checkpoint " + ck.string() + " --out-dir " +
                out.string() + " track"),
            0);
  const CsvTable t = read_csv(out / "tracking.csv");
  const auto time = t.column("time_h"), idx = t.column("reference_index");
  ASSERT_EQ(t.rows.size(), 901u);
  std::set<double> levels(idx.begin(), idx.end());
  EXPECT_EQ(levels.size(), 3u);
  std::vector<double> switches;
  for (std::size_t k = 1; k < idx.size(); ++k)
    if (idx[k] != idx[k - 1]) switches.push_back(time[k]);
  ASSERT_EQ(switches.size(), 2u);
  EXPECT_NEAR(switches[0], 1.5, 1e-12);
  EXPECT_NEAR(switches[1], 3.0, 1e-12);
  EXPECT_NO_THROW(t.column_index("dlac_Q1"));
  EXPECT_GT(t.column("ref_x_A1").front(), t.column("ref_x_A1").back());

  const fs::path ol = work_dir() / "track_ol";
  ASSERT_EQ(run("--config " + (work_dir() / "train.json").string() + " --out-dir " + ol.string() + " track"), 0);
  EXPECT_THROW(read_csv(ol / "tracking.csv").column_index("dlac_Q1"), IoError);
}

TEST(Cli, DiagnoseReportsThroughExitStatus) {
  const fs::path ck = trained_checkpoints();
  const fs::path out = work_dir() / "diag";
  const int code = run("--config " + (work_dir() / "train.json").string() + " --checkpoint " + ck.string() +
                       " --out-dir " + out.string() + " diagnose");
  ASSERT_TRUE(code == 0 || code == 3) << code;
  const CsvTable t = read_csv(out / "diagnostics.csv");
  const bool ok = t.column("rhat_ok")[0] == 1.0 && t.column("decrease_satisfied")[0] == 1.0 &&
                  t.column("alpha1_positive")[0] == 1.0;
  EXPECT_EQ(code == 0, ok);
}

TEST(Cli, ErrorsGiveNonzeroExit) {
  trained_checkpoints();
  const fs::path out = work_dir() / "err";
  EXPECT_NE(run("--out-dir " + out.string() + " evaluate"), 0);
  EXPECT_NE(run("--checkpoint " + (work_dir() / "nowhere").string() + " --out-dir " + out.string() + " diagnose"), 0);
  const fs::path junk = work_dir() / "junk_ck";
  fs::create_directories(junk);
  for (int i = 1; i <= 3; ++i) std::ofstream(junk / ("controller_" + std::to_string(i) + ".ckpt")) << "not a checkpoint";
  EXPECT_EQ(run("--checkpoint " + junk.string() + " --out-dir " + out.string() + " simulate"), 1);
  json bad = tiny_config();
  bad["train"]["learning_rate"] = 0.1;
  EXPECT_EQ(run("--config " + write_config("bad.json", bad).string() + " --out-dir " + out.string() + " train"), 1);
  EXPECT_NE(run("--preset huge refs"), 0);
  EXPECT_NE(run("frobnicate"), 0);
}

TEST(Cli, ShippedConfigsAreAccepted) {
  for (const char* name : {"desk.json", "paper.json", "eval_w2.json", "smoke.json"}) {
    const fs::path cfg = fs::path(DLAC_SOURCE_DIR) / "configs" / name;
    const fs::path out = work_dir() / (std::string("shipped_") + name);
    EXPECT_EQ(run("--config " + cfg.string() + " --out-dir " + out.string() + " refs"), 0) << name;
  }
}
