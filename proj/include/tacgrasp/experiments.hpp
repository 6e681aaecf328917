#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tacgrasp/array.hpp"
#include "tacgrasp/control.hpp"
#include "tacgrasp/learning.hpp"
#include "tacgrasp/plant.hpp"
#include "tacgrasp/telemetry.hpp"

namespace tacgrasp {

// The five fingertips, their trained models and the controller/plant settings.
struct Rig {
  std::vector<Sensor> sensors;
  std::vector<Regressor> models;
  ControlConfig control;
  PlantConfig plant;
};

// Sensors with the default per-finger variations for a given hardware seed.
std::vector<Sensor> make_sensors(std::uint64_t hardware_seed = 0);

// Model files of one strategy under `dir`: <dir>/<strategy>/sensor{k}.json, or
// <dir>/<strategy>/model.json for strategies that train a single model.
std::string strategy_model_path(const std::string& dir, Strategy s, int sensor_id);
void save_strategy_models(const std::string& dir, const StrategyResult& r);
// One model per sensor (a single-model strategy is repeated).
std::vector<Regressor> load_strategy_models(const std::string& dir, Strategy s);

// Standard-transfer models for the rig's fingertips, trained on freshly collected data.
struct RigTraining {
  int n_train_val = 3000;  // per sensor
  std::vector<int> hidden = {256, 256};
  int epochs = 60;
  int finetune_epochs = 30;
  std::uint64_t seed = 0;
};

std::vector<Regressor> train_rig_models(const std::vector<Sensor>& sensors, const RigTraining& cfg);

// Optional plumbing shared by all experiments.
struct RunHooks {
  SensorArray* array = nullptr;           // default: in-process LocalArray
  TelemetryServer* telemetry = nullptr;   // publish a snapshot every control step
  bool realtime = false;                  // pace simulated time to the wall clock
  const std::atomic<bool>* stop = nullptr;
};

struct Verdict {
  bool pass = true;
  std::vector<std::string> reasons;  // why it failed

  void fail(const std::string& why) {
    pass = false;
    reasons.push_back(why);
  }
  std::string summary() const;
};

struct GraspOutcome {
  bool grasped = false;
  double u = 0;
  double t = 0;  // s at which the grasp was established
};

// ---- Experiment 1: static stabilization under added mass ----

enum class InputKind { step, ramp, baseline };
const char* input_kind_name(InputKind k);
InputKind parse_input_kind(const std::string& s);

struct Exp1Config {
  double mass = 0.1;            // kg
  InputKind input = InputKind::step;
  double step_duration = 1.5;   // s over which a step fill is poured in
  double ramp_duration = 8.0;   // s
  double lead_in = 1.0;         // s between grasp and fill
  double observe = 4.0;         // s after the fill ends
  double u_preshape = 0.4;
  double grasp_timeout = 15.0;  // s
  double settle_band = 0.05;    // |dFy| band, N per delta
  double settle_limit = 0.5;    // s
  double ramp_band = 0.25;
  double fz_limit = 9.0;        // N
  double u_noise_band = 0.002;  // tolerated dip of u below its running max during a ramp
  double baseline_margin = 1.2; // baseline grip = margin * force needed to hold 300 g
};

struct Exp1Row {
  double t = 0, u = 0, fz_sum = 0;
  std::optional<double> dfy;
  bool crush = false;
  double slip = 0;
};

struct Exp1Result {
  std::vector<Exp1Row> rows;
  GraspOutcome grasp;
  double input_start = 0, input_end = 0;
  double settle_time = 0;     // s after input end until |dFy| stays in band
  double max_fz = 0;          // N
  double max_abs_dfy = 0;     // over input start .. end of run
  double steady_fz = 0;       // mean over the final second
  bool u_monotone = true;     // during the input, within u_noise_band
  bool crush = false, dropped = false;
  Verdict verdict;
};

Exp1Result run_exp1(const Rig& rig, const Exp1Config& cfg, std::uint64_t seed, const RunHooks& hooks = {});

// ---- Experiment 2: dynamic stabilization while pouring ----

struct Exp2Config {
  double fill = 0.1;           // kg
  double fill_duration = 1.5;  // s
  double lead_in = 1.0;        // s between grasp and fill
  double rest = 3.0;           // s between fill end and pour start
  PourTrajectory pour;
  double observe = 3.0;        // s after the pour returns
  double u_preshape = 0.4;
  double grasp_timeout = 15.0;
  double fz_band = 0.1;        // N tolerated dip of Fz during the 0..90 deg leg
};

struct Exp2Row {
  double t = 0, theta_x = 0, theta_y = 0;
  std::optional<double> dfx, dfy;
  double ux = 0, uy = 0, fz_sum = 0, rice_mass = 0;
  bool crush = false;
  double slip = 0;
};

struct Phase {
  std::string name;
  double t_start = 0, t_end = 0;
};

struct Exp2Result {
  std::vector<Exp2Row> rows;
  std::vector<Phase> phases;
  GraspOutcome grasp;
  double fz_initial = 0, fz_final = 0;  // N, at grasp and at the end of the run
  double max_fz_dip = 0;                // N, below running max during 0..90 deg
  bool uy_zero_at_90 = true;            // every sample with theta_y == 90 had uy == 0
  int samples_at_90 = 0;
  bool crush = false, dropped = false;
  Verdict verdict;
};

Exp2Result run_exp2(const Rig& rig, const Exp2Config& cfg, std::uint64_t seed, const RunHooks& hooks = {});

// ---- Experiment 3: leader-follower ----

struct Exp3Config {
  double object_mass = 0.05;  // kg, instrumented object
  double grip_force = 10.0;   // N of predicted total normal force to hold the object with
  double tighten_rate = 0.075;  // hand command per second while tightening
  double hold = 1.0;          // s before taring
  double tare_window = 0.5;   // s averaged for the force tare
  std::vector<Disturbance> script;  // times relative to the start of following
  double duration = 0;        // s of following; 0 = script end + 3 s (at least 10 s)
  bool interactive = false;   // take APPLY_FORCE commands from hooks.telemetry
  double u_preshape = 0.4;
  double grasp_timeout = 15.0;
  double drift_window = 5.0;  // s
  double drift_limit = 1.0;   // mm
  // Off-axis displacement allowed when every scripted force acts along one axis, as a
  // fraction of the displacement along it.
  double cross_axis_limit = 0.15;
  std::optional<Vec3> mae_limit;  // N per axis; unchecked when empty
};

struct Exp3Row {
  double t = 0;
  Vec3 fpred{}, ftrue{}, v{}, x{};
};

struct Exp3Result {
  std::vector<Exp3Row> rows;  // following phase only, t relative to its start
  GraspOutcome grasp;
  Vec3 tare{};
  Vec3 tracking_mae{};        // per axis, N
  double tracking_mae_mean = 0;
  double max_zero_force_drift = 0;  // mm, worst window with no applied force
  int zero_force_windows = 0;
  std::optional<int> script_axis;   // set when every scripted force acts along this axis
  double cross_axis = 0;            // max off-axis |x| / max on-axis |x|
  std::vector<Disturbance> recorded;  // operator commands, replayable as a script
  bool dropped = false;
  Verdict verdict;
};

Exp3Result run_exp3(const Rig& rig, const Exp3Config& cfg, std::uint64_t seed, const RunHooks& hooks = {});

// Interactive cup session behind the dashboard: holds the cup under the dynamic
// stabilizer and reacts to APPLY_FORCE / ADD_MASS / START_POUR until stopped.
struct SessionConfig {
  double duration = 0;  // s, 0 = until stopped
  double u_preshape = 0.4;
  double grasp_timeout = 15.0;
};

struct SessionSummary {
  double t = 0;
  bool crush = false, dropped = false;
  int commands = 0;
};

SessionSummary run_session(const Rig& rig, const SessionConfig& cfg, std::uint64_t seed, const RunHooks& hooks);

// ---- CSV output ----

inline constexpr const char* kExp1Header = "t,u,Fz_sum,dFy,crush,slip";
inline constexpr const char* kExp2Header = "t,theta_x,theta_y,dFx,dFy,ux,uy,Fz_sum,rice_mass,crush,slip";
inline constexpr const char* kExp3Header =
    "t,Fpred_x,Fpred_y,Fpred_z,Ftrue_x,Ftrue_y,Ftrue_z,vx,vy,vz,x,y,z";
inline constexpr const char* kPhaseHeader = "phase,t_start,t_end";

void write_exp1_csv(std::ostream& out, const Exp1Result& r);
void write_exp2_csv(std::ostream& out, const Exp2Result& r);
void write_exp3_csv(std::ostream& out, const Exp3Result& r);
void write_phases_csv(std::ostream& out, const std::vector<Phase>& phases);

}  // namespace tacgrasp
