#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <sstream>
#include <thread>

#include "tacgrasp/error.hpp"
#include "tacgrasp/experiments.hpp"
#include "tacgrasp/websocket.hpp"

using namespace tacgrasp;

namespace {

// Small models: quick to train, good enough to grasp and hold the cup.
const Rig& rig() {
  static const Rig r = [] {
    Rig out;
    out.sensors = make_sensors(0);
    RigTraining t;
    t.n_train_val = 1000;
    t.hidden = {64, 64};
    t.epochs = 30;
    t.finetune_epochs = 15;
    out.models = train_rig_models(out.sensors, t);
    return out;
  }();
  return r;
}

Regressor tiny_model(std::uint64_t seed) {
  Regressor m({4, 3, 6}, seed);
  m.input.mean = Eigen::VectorXd::Zero(4);
  m.input.std = Eigen::VectorXd::Ones(4);
  m.target.mean = Eigen::VectorXd::Zero(6);
  m.target.std = Eigen::VectorXd::Ones(6);
  return m;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

Disturbance push(double t, Vec3 dir, double magnitude, double duration) {
  Disturbance d;
  d.t = t;
  d.kind = DisturbanceKind::external_force;
  d.direction = dir;
  d.magnitude = magnitude;
  d.duration = duration;
  return d;
}

}  // namespace

TEST(Csv, GoldenHeaders) {
  std::ostringstream a, b, c, p;
  write_exp1_csv(a, Exp1Result{});
  write_exp2_csv(b, Exp2Result{});
  write_exp3_csv(c, Exp3Result{});
  write_phases_csv(p, {});
  EXPECT_EQ(first_line(a.str()), "t,u,Fz_sum,dFy,crush,slip");
  EXPECT_EQ(first_line(b.str()), "t,theta_x,theta_y,dFx,dFy,ux,uy,Fz_sum,rice_mass,crush,slip");
  EXPECT_EQ(first_line(c.str()), "t,Fpred_x,Fpred_y,Fpred_z,Ftrue_x,Ftrue_y,Ftrue_z,vx,vy,vz,x,y,z");
  EXPECT_EQ(first_line(p.str()), "phase,t_start,t_end");
}

TEST(Csv, Exp1RowsLeaveMissingDeltaEmpty) {
  Exp1Result r;
  r.rows.push_back({0.5, 0.4, 2.0, std::nullopt, false, 0.0});
  r.rows.push_back({1.0, 0.45, 3.0, -0.25, true, 1.5});
  std::ostringstream out;
  write_exp1_csv(out, r);
  EXPECT_EQ(out.str(), "t,u,Fz_sum,dFy,crush,slip\n0.5,0.4,2,,0,0\n1,0.45,3,-0.25,1,1.5\n");
}

TEST(Verdict, Summary) {
  Verdict v;
  EXPECT_EQ(v.summary(), "PASS");
  v.fail("a");
  v.fail("b");
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.summary(), "FAIL: a; b");
}

TEST(InputKind, ParseRoundTrip) {
  for (auto k : {InputKind::step, InputKind::ramp, InputKind::baseline}) EXPECT_EQ(parse_input_kind(input_kind_name(k)), k);
  EXPECT_THROW(parse_input_kind("pulse"), InvalidArgument);
}

TEST(StrategyModels, SaveAndLoadLayout) {
  const auto dir = std::filesystem::temp_directory_path() / "tacgrasp_strategy_models";
  std::filesystem::remove_all(dir);
  StrategyResult single{Strategy::aggregate, {tiny_model(1)}, {}};
  StrategyResult per{Strategy::standard, {}, {}};
  for (int k = 0; k < kNumSensors; ++k) per.models.push_back(tiny_model(10 + k));
  save_strategy_models(dir.string(), single);
  save_strategy_models(dir.string(), per);
  EXPECT_TRUE(std::filesystem::exists(dir / "aggregate" / "model.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "standard" / "sensor4.json"));
  auto agg = load_strategy_models(dir.string(), Strategy::aggregate);
  auto std_models = load_strategy_models(dir.string(), Strategy::standard);
  ASSERT_EQ(agg.size(), 5u);
  ASSERT_EQ(std_models.size(), 5u);
  EXPECT_EQ(model_to_json(agg[3]), model_to_json(single.models[0]));
  EXPECT_EQ(model_to_json(std_models[3]), model_to_json(per.models[3]));
  EXPECT_THROW(load_strategy_models(dir.string(), Strategy::individual), LoadError);
  std::filesystem::remove_all(dir);
}

TEST(Exp1, SameSeedGivesIdenticalRun) {
  Exp1Config cfg;
  cfg.observe = 1.0;
  auto a = run_exp1(rig(), cfg, 3);
  auto b = run_exp1(rig(), cfg, 3);
  std::ostringstream ca, cb;
  write_exp1_csv(ca, a);
  write_exp1_csv(cb, b);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(a.verdict.summary(), b.verdict.summary());
}

TEST(Exp1, RowsCoverGraspFillAndObservation) {
  Exp1Config cfg;
  auto r = run_exp1(rig(), cfg, 0);
  ASSERT_TRUE(r.grasp.grasped);
  ASSERT_FALSE(r.rows.empty());
  EXPECT_NEAR(r.input_end - r.input_start, cfg.step_duration, 1e-9);
  EXPECT_NEAR(r.rows.back().t, r.input_end + cfg.observe, 0.02);
  for (std::size_t i = 1; i < r.rows.size(); ++i) EXPECT_GT(r.rows[i].t, r.rows[i - 1].t);
}

TEST(Exp2, PhasesAreOrderedAndContiguous) {
  auto r = run_exp2(rig(), Exp2Config{}, 0);
  ASSERT_TRUE(r.grasp.grasped);
  ASSERT_GE(r.phases.size(), 3u);
  for (std::size_t i = 1; i < r.phases.size(); ++i) EXPECT_NEAR(r.phases[i].t_start, r.phases[i - 1].t_end, 1e-9);
  EXPECT_GT(r.samples_at_90, 0);
}

TEST(Exp3, NoScriptMeansNoMotion) {
  auto r = run_exp3(rig(), Exp3Config{}, 0);
  ASSERT_TRUE(r.grasp.grasped);
  EXPECT_FALSE(r.script_axis);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.v, (Vec3{0, 0, 0}));
    EXPECT_EQ(row.x, (Vec3{0, 0, 0}));
  }
  EXPECT_GT(r.zero_force_windows, 0);
  EXPECT_TRUE(r.verdict.pass) << r.verdict.summary();
}

TEST(Exp3, ForceBelowDeadbandMovesNothing) {
  Exp3Config cfg;
  cfg.script = {push(1.0, {1, 0, 0}, 0.05, 3.0)};
  auto r = run_exp3(rig(), cfg, 0);
  ASSERT_EQ(r.script_axis, 0);
  for (const auto& row : r.rows) EXPECT_EQ(row.x, (Vec3{0, 0, 0}));
  EXPECT_EQ(r.cross_axis, 0.0);
}

TEST(Exp3, ScriptAxisDetection) {
  Exp3Config cfg;
  cfg.duration = 2.0;
  cfg.script = {push(0.5, {0, 1, 0}, 0.05, 0.5), push(1.0, {0, -1, 0}, 0.05, 0.5)};
  EXPECT_EQ(run_exp3(rig(), cfg, 0).script_axis, 1);
  cfg.script.push_back(push(1.5, {1, 0, 0}, 0.05, 0.2));
  EXPECT_FALSE(run_exp3(rig(), cfg, 0).script_axis);
}

TEST(Exp3, MaeLimitIsEnforced) {
  Exp3Config cfg;
  cfg.duration = 2.0;
  cfg.mae_limit = Vec3{0, 1, 1};
  auto r = run_exp3(rig(), cfg, 0);
  EXPECT_FALSE(r.verdict.pass);
  ASSERT_EQ(r.verdict.reasons.size(), 1u);
  EXPECT_NE(r.verdict.reasons[0].find("MAE on x"), std::string::npos);
}

TEST(Exp3, InteractiveNeedsCommandChannel) {
  Exp3Config cfg;
  cfg.interactive = true;
  EXPECT_THROW(run_exp3(rig(), cfg, 0), InvalidArgument);
}

TEST(Session, DashboardCommandsReachThePlant) {
  TelemetryServer tel;
  tel.start();
  std::atomic<bool> stop{false};
  RunHooks hooks;
  hooks.telemetry = &tel;
  hooks.realtime = true;
  hooks.stop = &stop;
  SessionSummary summary;
  std::string error;
  const Rig& r = rig();
  std::thread session([&] {
    try {
      summary = run_session(r, SessionConfig{}, 0, hooks);
    } catch (const std::exception& e) {
      error = e.what();
    }
  });
  struct Joiner {
    std::atomic<bool>& stop;
    std::thread& t;
    ~Joiner() {
      stop = true;
      if (t.joinable()) t.join();
    }
  } joiner{stop, session};

  ws::Client client("127.0.0.1", tel.port());
  auto phase = [&](const std::string& want) {
    for (int i = 0; i < 2000; ++i) {
      auto m = client.receive(5.0);
      if (!m) return nlohmann::json();
      auto j = nlohmann::json::parse(*m);
      if (j["plant"]["phase"] == want) return j;
    }
    return nlohmann::json();
  };
  ASSERT_FALSE(phase("hold").is_null());
  client.send_text(R"({"op":"ADD_MASS","kg":0.05,"duration":0.2})");
  client.send_text(R"({"op":"START_POUR","gamma":20,"rate":40})");
  client.send_text(R"({"op":"APPLY_FORCE","f":[0,0,1]})");
  auto j = phase("pour");
  ASSERT_FALSE(j.is_null());
  double rice = 0, theta = 0;
  for (int i = 0; i < 200 && (rice < 0.05 || theta < 10); ++i) {
    auto m = client.receive(5.0);
    ASSERT_TRUE(m);
    j = nlohmann::json::parse(*m);
    rice = j["plant"]["rice_mass"].get<double>();
    theta = std::abs(j["plant"]["theta_y"].get<double>()) + std::abs(j["plant"]["theta_x"].get<double>());
  }
  EXPECT_NEAR(rice, 0.05, 1e-9);
  EXPECT_GT(theta, 10);
  stop = true;
  session.join();
  EXPECT_EQ(error, "");
  EXPECT_EQ(summary.commands, 3);
  EXPECT_FALSE(summary.dropped);
}
