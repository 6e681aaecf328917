#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "tacgrasp/array.hpp"
#include "tacgrasp/dataset.hpp"
#include "tacgrasp/error.hpp"
#include "tacgrasp/experiments.hpp"
#include "tacgrasp/learning.hpp"
#include "tacgrasp/telemetry.hpp"

using namespace tacgrasp;
namespace fs = std::filesystem;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;

// Thrown for bad flag values that CLI11 cannot check on its own.
struct UsageError : Error {
  using Error::Error;
};

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Globals {
  std::uint64_t seed = 0;
  std::uint64_t hardware_seed = 0;
  std::string config;
};

ControlConfig control_config(const Globals& g) {
  std::string path = g.config;
  if (path.empty()) {
    if (const char* env = std::getenv("TACGRASP_CONFIG")) path = env;
  }
  return path.empty() ? ControlConfig{} : load_control_config(path);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

Range parse_range(const std::string& flag, const std::string& text) {
  Range r{};
  char comma = 0;
  std::istringstream in(text);
  if (!(in >> r.lo >> comma >> r.hi) || comma != ',' || !in.eof() || !(r.lo < r.hi))
    throw UsageError("--" + flag + " expects LO,HI with LO < HI, got '" + text + "'");
  return r;
}

// The rig plus, when requested, a running TCP deployment feeding it.
struct RigSetup {
  Rig rig;
  std::unique_ptr<ArrayDeployment> deployment;
  std::unique_ptr<NetworkArray> network;
  std::unique_ptr<TelemetryServer> telemetry;
  RunHooks hooks;
};

struct RigFlags {
  std::string models = "models";
  std::string strategy = "standard";
  bool over_network = false;
  std::uint16_t base_port = 0;
  int telemetry_port = -1;
  bool realtime = false;
};

void add_rig_flags(CLI::App* cmd, RigFlags& f) {
  cmd->add_option("--models", f.models, "Directory written by `train`")->capture_default_str();
  cmd->add_option("--strategy", f.strategy, "Which trained models to use")->capture_default_str();
  cmd->add_flag("--over-network", f.over_network, "Read the fingertips through TCP sensor nodes");
  cmd->add_option("--base-port", f.base_port, "First sensor node port (0 = any free ports)");
  cmd->add_option("--telemetry-port", f.telemetry_port, "Serve WebSocket telemetry on this port");
  cmd->add_flag("--realtime", f.realtime, "Pace the simulation to the wall clock");
}

RigSetup make_rig(const Globals& g, const RigFlags& f) {
  RigSetup s;
  s.rig.sensors = make_sensors(g.hardware_seed);
  s.rig.models = load_strategy_models(f.models, parse_strategy(f.strategy));
  s.rig.control = control_config(g);
  if (f.over_network || f.base_port != 0) {
    s.deployment = std::make_unique<ArrayDeployment>(s.rig.sensors, s.rig.models, g.seed, f.base_port);
    s.network = std::make_unique<NetworkArray>(s.deployment->endpoints());
    s.hooks.array = s.network.get();
  }
  if (f.telemetry_port >= 0) {
    s.telemetry = std::make_unique<TelemetryServer>("127.0.0.1", static_cast<std::uint16_t>(f.telemetry_port));
    s.telemetry->start();
    s.hooks.telemetry = s.telemetry.get();
    std::fprintf(stderr, "telemetry on ws://127.0.0.1:%u/\n", s.telemetry->port());
  }
  s.hooks.realtime = f.realtime;
  s.hooks.stop = &g_stop;
  return s;
}

// ---- gen-data ----

struct GenFlags {
  std::string out = "data";
  CollectionConfig cfg;
  std::string z, alpha, beta, shear_x, shear_y;
};

int cmd_gen_data(const Globals& g, GenFlags f) {
  auto& r = f.cfg.ranges;
  if (!f.z.empty()) r.z = parse_range("z-range", f.z);
  if (!f.alpha.empty()) r.alpha = parse_range("alpha-range", f.alpha);
  if (!f.beta.empty()) r.beta = parse_range("beta-range", f.beta);
  if (!f.shear_x.empty()) r.shear_x = parse_range("shear-x-range", f.shear_x);
  if (!f.shear_y.empty()) r.shear_y = parse_range("shear-y-range", f.shear_y);
  f.cfg.seed = g.seed;
  try {
    validate(f.cfg);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(f.out);
  for (const auto& sensor : make_sensors(g.hardware_seed)) {
    auto split = collect(sensor, f.cfg);
    const std::string base = f.out + "/sensor" + std::to_string(sensor.sensor_id()) + "_";
    save_dataset(base + "train.csv", split.train);
    save_dataset(base + "val.csv", split.val);
    save_dataset(base + "test.csv", split.test);
    for (const char* part : {"train", "val", "test"}) save_dataset_meta(base + part + ".csv", f.cfg, sensor.sensor_id());
    std::printf("sensor %d: %zu train, %zu val, %zu test\n", sensor.sensor_id(), split.train.size(), split.val.size(),
                split.test.size());
  }
  return kPass;
}

// ---- train ----

struct TrainFlags {
  std::string data = "data";
  std::string out = "models";
  std::string strategy = "all";
  std::vector<int> hidden = {512, 512};
  int epochs = 30;
  int finetune_epochs = 15;
  int batch = 16;
  double lr = 1e-3;
};

const char* kOutputNames[6] = {"z", "alpha", "beta", "fx", "fy", "fz"};

int cmd_train(const Globals& g, const TrainFlags& f) {
  std::vector<Strategy> strategies;
  if (f.strategy == "all") {
    strategies = {Strategy::individual, Strategy::aggregate, Strategy::progressive, Strategy::standard};
  } else {
    try {
      strategies = {parse_strategy(f.strategy)};
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<SensorData> data;
  std::vector<Dataset> tests;
  for (int k = 0; k < kNumSensors; ++k) {
    const std::string base = f.data + "/sensor" + std::to_string(k) + "_";
    for (const char* part : {"train", "val", "test"}) {
      if (!fs::exists(base + part + ".csv")) throw Error("missing dataset " + base + part + ".csv");
    }
    data.push_back({load_dataset(base + "train.csv"), load_dataset(base + "val.csv")});
    tests.push_back(load_dataset(base + "test.csv"));
  }
  StrategyConfig sc;
  sc.hidden = f.hidden;
  sc.train.epochs = f.epochs;
  sc.train.batch = f.batch;
  sc.train.lr = f.lr;
  sc.train.seed = g.seed;
  sc.finetune_epochs = f.finetune_epochs;

  fs::create_directories(f.out);
  auto report = open_out(fs::path(f.out) / "mae_report.csv");
  report << "strategy,sensor_id,output,mae\n";
  for (Strategy s : strategies) {
    auto r = run_strategy(s, data, sc);
    save_strategy_models(f.out, r);
    auto scatter = open_out(fs::path(f.out) / (std::string("scatter_") + strategy_name(s) + ".csv"));
    scatter << "sensor_id,output,label,prediction\n";
    for (int k = 0; k < kNumSensors; ++k) {
      auto e = evaluate(r.model_for(k), tests[k]);
      for (int o = 0; o < 6; ++o) report << strategy_name(s) << ',' << k << ',' << kOutputNames[o] << ',' << e.mae[o] << '\n';
      for (const auto& [label, pred] : e.pairs) {
        auto l = label.to_array();
        auto p = pred.to_array();
        for (int o = 0; o < 6; ++o) scatter << k << ',' << kOutputNames[o] << ',' << l[o] << ',' << p[o] << '\n';
      }
      std::printf("%-11s sensor %d  mae fx %.3f fy %.3f fz %.3f\n", strategy_name(s), k, e.mae[3], e.mae[4], e.mae[5]);
    }
  }
  return kPass;
}

// ---- experiments ----

std::string run_name(const std::string& prefix, std::uint64_t seed) { return prefix + "_seed" + std::to_string(seed); }

struct Exp1Flags {
  RigFlags rig;
  double mass_g = 100;
  std::string input = "step";
  int runs = 1;
  std::string out = "results";
};

int cmd_exp1(const Globals& g, const Exp1Flags& f) {
  Exp1Config cfg;
  try {
    cfg.input = parse_input_kind(f.input);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (!(f.mass_g > 0 && f.mass_g <= 300)) throw UsageError("--mass must be in (0, 300] g");
  if (f.runs < 1) throw UsageError("--runs must be at least 1");
  cfg.mass = f.mass_g / 1000.0;
  auto setup = make_rig(g, f.rig);
  bool all = true;
  for (int i = 0; i < f.runs; ++i) {
    const std::uint64_t seed = g.seed + i;
    auto r = run_exp1(setup.rig, cfg, seed, setup.hooks);
    const std::string name =
        run_name("exp1_" + f.input + "_" + std::to_string(static_cast<int>(f.mass_g)) + "g", seed);
    auto csv = open_out(fs::path(f.out) / (name + ".csv"));
    write_exp1_csv(csv, r);
    std::printf("%s: settle %.3f s, max Fz %.2f N, steady Fz %.2f N, %s\n", name.c_str(), r.settle_time, r.max_fz,
                r.steady_fz, r.verdict.summary().c_str());
    all = all && r.verdict.pass;
  }
  return all ? kPass : kFail;
}

struct Exp2Flags {
  RigFlags rig;
  int runs = 20;
  std::string out = "results";
};

int cmd_exp2(const Globals& g, const Exp2Flags& f) {
  if (f.runs < 1) throw UsageError("--runs must be at least 1");
  auto setup = make_rig(g, f.rig);
  Exp2Config cfg;
  int passed = 0;
  for (int i = 0; i < f.runs; ++i) {
    const std::uint64_t seed = g.seed + i;
    auto r = run_exp2(setup.rig, cfg, seed, setup.hooks);
    const std::string name = run_name("exp2", seed);
    auto csv = open_out(fs::path(f.out) / (name + ".csv"));
    write_exp2_csv(csv, r);
    auto phases = open_out(fs::path(f.out) / (name + "_phases.csv"));
    write_phases_csv(phases, r.phases);
    std::printf("%s: Fz %.2f -> %.2f N, %s\n", name.c_str(), r.fz_initial, r.fz_final, r.verdict.summary().c_str());
    passed += r.verdict.pass;
  }
  std::printf("%d/%d runs passed\n", passed, f.runs);
  return passed == f.runs ? kPass : kFail;
}

struct Exp3Flags {
  RigFlags rig;
  std::string scripted;
  bool interactive = false;
  double duration = 0;
  std::string record;
  std::string out = "results";
};

int cmd_exp3(const Globals& g, Exp3Flags f) {
  Exp3Config cfg;
  if (f.interactive) {
    if (f.rig.telemetry_port < 0) throw UsageError("--interactive needs --telemetry-port");
    cfg.interactive = true;
    f.rig.realtime = true;
  } else {
    cfg.script = load_disturbance_script(f.scripted);
  }
  cfg.duration = f.duration;
  auto setup = make_rig(g, f.rig);
  auto r = run_exp3(setup.rig, cfg, g.seed, setup.hooks);
  auto csv = open_out(fs::path(f.out) / (run_name("exp3", g.seed) + ".csv"));
  write_exp3_csv(csv, r);
  if (!f.record.empty()) {
    auto rec = open_out(f.record);
    rec << format_disturbance_script(r.recorded) << '\n';
  }
  std::printf("exp3: tracking MAE %.3f %.3f %.3f N, zero-force drift %.3f mm over %d windows, %s\n",
              r.tracking_mae[0], r.tracking_mae[1], r.tracking_mae[2], r.max_zero_force_drift, r.zero_force_windows,
              r.verdict.summary().c_str());
  return r.verdict.pass ? kPass : kFail;
}

// ---- serve ----

struct ServeFlags {
  RigFlags rig;
  int sensors = kNumSensors;
  double duration = 0;
};

int cmd_serve(const Globals& g, ServeFlags f) {
  if (f.sensors != kNumSensors) throw UsageError("the hand has exactly " + std::to_string(kNumSensors) + " fingertips");
  f.rig.over_network = true;
  f.rig.realtime = true;
  if (f.rig.telemetry_port < 0) f.rig.telemetry_port = 8765;
  auto setup = make_rig(g, f.rig);
  for (const auto& ep : setup.deployment->endpoints()) std::fprintf(stderr, "sensor node on %s:%u\n", ep.host.c_str(), ep.port);
  SessionConfig cfg;
  cfg.duration = f.duration;
  auto s = run_session(setup.rig, cfg, g.seed, setup.hooks);
  std::printf("session: %.1f s, %d commands, crush %d, dropped %d\n", s.t, s.commands, s.crush, s.dropped);
  return s.crush || s.dropped ? kFail : kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile grasp stabilization: data, training and experiments"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Run seed")->capture_default_str();
  app.add_option("--hardware-seed", g.hardware_seed, "Per-finger sensor variation seed")->capture_default_str();
  app.add_option("--config", g.config, "Controller config JSON (default: $TACGRASP_CONFIG)");

  GenFlags gen;
  auto* c_gen = app.add_subcommand("gen-data", "Collect labelled datasets for every fingertip");
  c_gen->add_option("--out", gen.out, "Output directory")->capture_default_str();
  c_gen->add_option("--n-train-val", gen.cfg.n_train_val, "Samples per sensor for train + validation")->capture_default_str();
  c_gen->add_option("--n-test", gen.cfg.n_test, "Test samples per sensor")->capture_default_str();
  c_gen->add_option("--split", gen.cfg.split, "Train fraction of train + validation")->capture_default_str();
  c_gen->add_option("--ft-noise", gen.cfg.ft_noise, "Force sensor noise, N std")->capture_default_str();
  c_gen->add_option("--z-range", gen.z, "Indentation range LO,HI in mm");
  c_gen->add_option("--alpha-range", gen.alpha, "Tilt range LO,HI in degrees");
  c_gen->add_option("--beta-range", gen.beta, "Tilt range LO,HI in degrees");
  c_gen->add_option("--shear-x-range", gen.shear_x, "Shear range LO,HI in mm");
  c_gen->add_option("--shear-y-range", gen.shear_y, "Shear range LO,HI in mm");

  TrainFlags tr;
  auto* c_train = app.add_subcommand("train", "Train force models with one or all transfer strategies");
  c_train->add_option("--data", tr.data, "Directory written by gen-data")->capture_default_str();
  c_train->add_option("--out", tr.out, "Output directory")->capture_default_str();
  c_train->add_option("--strategy", tr.strategy, "individual, aggregate, progressive, standard or all")
      ->capture_default_str();
  c_train->add_option("--hidden", tr.hidden, "Hidden layer widths")->delimiter(',')->capture_default_str();
  c_train->add_option("--epochs", tr.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--finetune-epochs", tr.finetune_epochs)->capture_default_str()->check(CLI::NonNegativeNumber);
  c_train->add_option("--batch", tr.batch)->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--lr", tr.lr)->capture_default_str()->check(CLI::PositiveNumber);

  Exp1Flags e1;
  auto* c_exp1 = app.add_subcommand("exp1", "Static stabilization under added mass");
  add_rig_flags(c_exp1, e1.rig);
  c_exp1->add_option("--mass", e1.mass_g, "Rice mass in g")->capture_default_str();
  c_exp1->add_option("--input", e1.input, "step, ramp or baseline")->capture_default_str();
  c_exp1->add_option("--runs", e1.runs, "Runs with consecutive seeds")->capture_default_str();
  c_exp1->add_option("--out", e1.out, "Directory for the run CSVs")->capture_default_str();

  Exp2Flags e2;
  auto* c_exp2 = app.add_subcommand("exp2", "Dynamic stabilization while pouring");
  add_rig_flags(c_exp2, e2.rig);
  c_exp2->add_option("--runs", e2.runs, "Runs with consecutive seeds")->capture_default_str();
  c_exp2->add_option("--out", e2.out, "Directory for the run and phase CSVs")->capture_default_str();

  Exp3Flags e3;
  auto* c_exp3 = app.add_subcommand("exp3", "Leader-follower under applied forces");
  add_rig_flags(c_exp3, e3.rig);
  auto* o_script = c_exp3->add_option("--scripted", e3.scripted, "Disturbance script JSON")->check(CLI::ExistingFile);
  auto* o_inter = c_exp3->add_flag("--interactive", e3.interactive, "Take APPLY_FORCE commands from telemetry clients");
  o_script->excludes(o_inter);
  c_exp3->add_option("--duration", e3.duration, "Seconds of following (0 = from the script)")->capture_default_str();
  c_exp3->add_option("--record", e3.record, "Write the applied forces as a replayable script");
  c_exp3->add_option("--out", e3.out, "Directory for the run CSV")->capture_default_str();

  ServeFlags sv;
  auto* c_serve = app.add_subcommand("serve", "Sensor nodes plus an interactive cup session for the dashboard");
  add_rig_flags(c_serve, sv.rig);
  c_serve->add_option("--sensors", sv.sensors)->capture_default_str();
  c_serve->add_option("--duration", sv.duration, "Seconds to run (0 = until interrupted)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (c_exp3->parsed() && !e3.interactive && e3.scripted.empty()) {
    std::fprintf(stderr, "exp3: one of --scripted or --interactive is required\n");
    return kUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::signal(SIGPIPE, SIG_IGN);
  try {
    if (c_gen->parsed()) return cmd_gen_data(g, gen);
    if (c_train->parsed()) return cmd_train(g, tr);
    if (c_exp1->parsed()) return cmd_exp1(g, e1);
    if (c_exp2->parsed()) return cmd_exp2(g, e2);
    if (c_exp3->parsed()) return cmd_exp3(g, e3);
    if (c_serve->parsed()) return cmd_serve(g, sv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const AggregationError& e) {
    std::fprintf(stderr, "aborted: sensor array failed: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
