#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dlac/io.hpp"

using namespace dlac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dlac_test_io";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Csv, RoundTripsDoublesExactly) {
  const fs::path p = scratch("roundtrip.csv");
  const std::vector<double> values{0.1, -1e-300, 1.0 / 3.0, 6.02214076e23, std::numeric_limits<double>::denorm_min(),
                                   0.0};
  {
    CsvWriter w(p, {"a", "b", "c", "d", "e", "f"});
    w.row(values);
    EXPECT_THROW(w.row({1.0}), ShapeError);
  }
  const CsvTable t = read_csv(p);
  ASSERT_EQ(t.rows.size(), 1u);
  for (std::size_t j = 0; j < values.size(); ++j) EXPECT_EQ(t.rows[0][j], values[j]);
  EXPECT_EQ(t.column("c")[0], 1.0 / 3.0);
  EXPECT_THROW(t.column("zz"), IoError);
}

TEST(Csv, RejectsMalformedFiles) {
  const fs::path p = scratch("bad.csv");
  write_text(p, "a,b\n1,2\n3\n");
  EXPECT_THROW(read_csv(p), IoError);
  write_text(p, "a,b\n1,x\n");
  EXPECT_THROW(read_csv(p), IoError);
  EXPECT_THROW(read_csv(scratch("missing.csv")), IoError);
}

TEST(JsonConfig, ParamsRoundTripAndStrictKeys) {
  ProcessParams p;
  p.k1 *= 1.5;
  const fs::path f = scratch("params.json");
  write_json(f, json(p));
  const ProcessParams q = load_params(f);
  EXPECT_EQ(q.k1, p.k1);
  EXPECT_EQ(q.Fp, p.Fp);

  write_json(f, json{{"V1", 2.0}});
  EXPECT_EQ(load_params(f).V1, 2.0);
  EXPECT_EQ(load_params(f).V2, ProcessParams{}.V2);
  write_json(f, json{{"V7", 2.0}});
  EXPECT_THROW(load_params(f), ConfigError);
  write_json(f, json{{"V1", -1.0}});
  EXPECT_THROW(load_params(f), ConfigError);
  write_text(f, "{ not json");
  EXPECT_THROW(load_params(f), ConfigError);
}

TEST(JsonConfig, TrainConfigStrictParsing) {
  const TrainConfig c = from_json_strict(json{{"n_eps_max", 12}, {"critic_head", "linear"}, {"hidden", {32}}},
                                         TrainConfig{}, "train");
  EXPECT_EQ(c.n_eps_max, 12);
  EXPECT_EQ(c.critic_head, CriticHead::Linear);
  EXPECT_EQ(c.hidden, std::vector<int>{32});
  EXPECT_EQ(c.gamma, TrainConfig{}.gamma);
  EXPECT_THROW(from_json_strict(json{{"learning_rate", 1.0}}, TrainConfig{}, "train"), ConfigError);
  EXPECT_THROW(from_json_strict(json{{"n_steps", "many"}}, TrainConfig{}, "train"), ConfigError);
  EXPECT_THROW(from_json_strict(json::array(), TrainConfig{}, "train"), ConfigError);
}

TEST(ReferenceFile, RoundTripIsBitExact) {
  const ReferenceSet set = generate_reference_set(
      ProcessParams{}, InputGrid{HeatInputs(2.9e6, 1.0e6, 1.717e6), HeatInputs(3.0e6, 1.1e6, 1.8e6), 2});
  const fs::path p = scratch("refs.csv");
  save_references(p, set);
  const ReferenceSet back = load_references(p);
  ASSERT_EQ(back.size(), set.size());
  for (std::size_t j = 0; j < set.size(); ++j) {
    EXPECT_TRUE(back[j].state == set[j].state);
    EXPECT_TRUE(back[j].input == set[j].input);
  }
  write_text(p, "x,y\n1,2\n");
  EXPECT_THROW(load_references(p), IoError);
}

TEST(Trajectory, RowsFollowTheStateIndex) {
  const ReferenceSet set = generate_reference_set(
      ProcessParams{}, InputGrid{HeatInputs(2.9e6, 1.0e6, 1.717e6), HeatInputs(2.9e6, 1.0e6, 1.717e6), 1});
  Plant plant;
  plant.normalizer = Normalizer::fit(set);
  struct Ramp : Controller {
    int k = 0;
    HeatInputs act(const ProcessState&, const ReferencePair& r, Rng&) override {
      HeatInputs a = r.input;
      a.q(0) += 1000.0 * k++;
      return a;
    }
  } ctl;
  Rng rng(1);
  const Episode ep = rollout(plant, ctl, nominal_state(), ReferenceSchedule(set[0]), 4, DisturbanceSpec::none(), rng);
  const fs::path p = scratch("traj.csv");
  write_trajectory(p, ep, plant.dt);
  const CsvTable t = read_csv(p);
  ASSERT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.header, trajectory_header(3));
  EXPECT_EQ(t.column("time_h").back(), 4 * plant.dt);
  EXPECT_EQ(t.column("Q1")[2], set[0].input.q(0) + 2000.0);
  EXPECT_EQ(t.column("Q1")[4], t.column("Q1")[3]);
  for (std::size_t k = 0; k < 5; ++k)
    EXPECT_NEAR(t.column("total_cost")[k], t.column("cost_1")[k] + t.column("cost_2")[k] + t.column("cost_3")[k], 1e-12);
}

TEST(CheckpointFormat, RoundTripIsBitExact) {
  TrainConfig cfg;
  cfg.hidden = {8, 8};
  Learner L(6, 1, cfg, 42);
  L.lagrange = {0.125, -3.0 / 7.0};
  const fs::path p = scratch("ctl.ckpt");
  Checkpoint ck = learner_checkpoint(L, 2);
  ck.meta["note"] = "extra";
  save_checkpoint(p, ck);
  const Checkpoint back = load_checkpoint(p);
  EXPECT_EQ(back.meta.at("subsystem"), 2);
  EXPECT_EQ(back.meta.at("note"), "extra");
  ASSERT_EQ(back.tensors.size(), ck.tensors.size());
  for (std::size_t k = 0; k < ck.tensors.size(); ++k) {
    EXPECT_EQ(back.tensors[k].name, ck.tensors[k].name);
    EXPECT_EQ(back.tensors[k].shape, ck.tensors[k].shape);
    EXPECT_EQ(0, std::memcmp(back.tensors[k].data.data(), ck.tensors[k].data.data(), 8 * ck.tensors[k].data.size()));
  }
  const ControllerState s = controller_from_checkpoint(back);
  EXPECT_TRUE(s.policy.net() == L.policy.net());
  EXPECT_TRUE(s.critic.online() == L.critic.online());
  EXPECT_TRUE(s.critic.target() == L.critic.target());
  EXPECT_EQ(s.lagrange.beta, 0.125);
  EXPECT_EQ(s.lagrange.lambda, -3.0 / 7.0);

  Learner fresh(6, 1, cfg, 7);
  restore_learner(fresh, back);
  EXPECT_TRUE(fresh.policy.net() == L.policy.net());
  cfg.hidden = {4};
  Learner other(6, 1, cfg, 7);
  EXPECT_THROW(restore_learner(other, back), ShapeError);

  // Saving the loaded checkpoint again gives the same bytes.
  const fs::path p2 = scratch("ctl2.ckpt");
  save_checkpoint(p2, back);
  EXPECT_EQ(read_text(p), read_text(p2));
}

TEST(CheckpointFormat, LayoutAndCorruption) {
  Checkpoint ck;
  ck.tensors.push_back(Tensor::from_matrix("m", (Eigen::MatrixXd(2, 2) << 1, 2, 3, 4).finished()));
  const fs::path p = scratch("tiny.ckpt");
  save_checkpoint(p, ck);
  const std::string bytes = read_text(p);
  ASSERT_EQ(bytes.substr(0, 8), "DLACCKP1");
  std::uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= std::uint64_t(static_cast<unsigned char>(bytes[8 + b])) << (8 * b);
  ASSERT_EQ(bytes.size(), 16 + len + 4 * 8);
  double second;
  std::memcpy(&second, bytes.data() + 16 + len + 8, 8);
  EXPECT_EQ(second, 2.0);  // row-major
  EXPECT_EQ(load_checkpoint(p).get("m").matrix(), ck.tensors[0].matrix());

  std::string bad = bytes;
  bad[0] = 'X';
  write_text(p, bad);
  EXPECT_THROW(load_checkpoint(p), IoError);
  write_text(p, bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(load_checkpoint(p), IoError);
  write_text(p, "");
  EXPECT_THROW(load_checkpoint(p), IoError);
  EXPECT_THROW(load_checkpoint(scratch("none.ckpt")), IoError);
  EXPECT_THROW(ck.get("absent"), IoError);
}

TEST(TrainLog, HeaderMatchesValues) {
  TrainLogRow r;
  r.episode = 25;
  r.critic_loss = r.entropy = r.exp_beta = r.exp_lambda = r.message = {1.0, 2.0, 3.0};
  EXPECT_EQ(train_log_header(3).size(), train_log_values(r).size());
  EXPECT_EQ(train_log_header(3)[4], "critic_loss_1");
}

TEST(RunManifestTest, RoundTrip) {
  RunManifest m;
  m.command = "train";
  m.config = {{"seed", 3}};
  m.seed = 3;
  m.outputs = {"train_log.csv"};
  m.started_at = utc_timestamp();
  const RunManifest back = RunManifest::from_json(m.to_json());
  EXPECT_EQ(back.command, "train");
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(back.outputs, m.outputs);
  EXPECT_EQ(back.version_tag, kVersionTag);
  EXPECT_THROW(RunManifest::from_json(json{{"command", "x"}}), ConfigError);
}
