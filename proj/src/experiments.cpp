#include "tacgrasp/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <memory>
#include <thread>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

namespace {

// One control loop over plant + sensor array at the controller rate.
class Loop {
 public:
  Loop(const Rig& rig, const PlantConfig& pcfg, std::uint64_t seed, const RunHooks& hooks)
      : rig_(rig), hooks_(hooks), seed_(seed), plant_(pcfg, seed, rig.sensors) {
    hz_ = std::round(1.0 / rig.control.dt);
    if (std::abs(hz_ * rig.control.dt - 1.0) > 1e-9) throw InvalidArgument("control dt must be 1/N s");
    if (hooks.array) {
      array_ = hooks.array;
    } else {
      local_ = std::make_unique<LocalArray>(rig.sensors, rig.models);
      array_ = local_.get();
    }
    wall0_ = std::chrono::steady_clock::now();
  }

  double t() const { return static_cast<double>(k_) / hz_; }
  double dt() const { return rig_.control.dt; }
  long steps() const { return k_; }
  Plant& plant() { return plant_; }
  const AggregateSnapshot& snap() const { return snap_; }
  bool stopped() const { return hooks_.stop && hooks_.stop->load(); }
  TelemetryServer* telemetry() const { return hooks_.telemetry; }

  const AggregateSnapshot& step(double u, const Vec3& euler, bool with_ssim) {
    ++k_;
    plant_.step(u, euler, dt());
    array_->publish(static_cast<std::uint64_t>(k_), t(), plant_.state().contact, seed_);
    snap_ = array_->read(with_ssim);
    if (hooks_.realtime) {
      auto due = wall0_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                              std::chrono::duration<double>(t()));
      std::this_thread::sleep_until(due);
    }
    return snap_;
  }

  void publish(const PlantDigest& d) {
    if (!hooks_.telemetry) return;
    hooks_.telemetry->publish(telemetry_json(t(), snap_, d));
  }

  PlantDigest digest(const std::string& phase, const Vec3& position = {0, 0, 0}) const {
    const auto& s = plant_.state();
    GraspFrameState f = grasp_frame_update(s.arm_euler);
    PlantDigest d;
    d.u = s.u_command;
    d.theta_x = f.theta_x;
    d.theta_y = f.theta_y;
    d.gamma = s.arm_euler[1];
    d.rice_mass = s.rice_mass;
    d.fz_true = s.fz_sum;
    d.crush = s.crush;
    d.dropped = s.dropped;
    d.slip = s.slip_accum;
    d.position = position;
    d.phase = phase;
    return d;
  }

  // SSIM-regulated closing until the deformation setpoint holds for a few samples.
  template <class OnStep>
  GraspOutcome gentle_grasp(double u0, const Vec3& euler, double timeout, OnStep on_step) {
    plant_.reset(u0, euler);
    GraspOutcome g;
    double u = u0;
    int held = 0;
    const int need = static_cast<int>(std::lround(0.1 * hz_));
    while (t() < timeout && !stopped()) {
      step(u, euler, true);
      auto r = gentle_grasp_step(rig_.control.gentle, snap_.ssim_mean(), u);
      u = r.u;
      held = r.grasped ? held + 1 : 0;
      on_step(u);
      publish(digest("grasp"));
      if (held >= need) {
        g.grasped = true;
        break;
      }
    }
    g.u = u;
    g.t = t();
    if (g.grasped) plant_.lift();
    return g;
  }

 private:
  const Rig& rig_;
  RunHooks hooks_;
  std::uint64_t seed_;
  Plant plant_;
  std::unique_ptr<LocalArray> local_;
  SensorArray* array_ = nullptr;
  AggregateSnapshot snap_;
  double hz_ = 150;
  long k_ = 0;
  std::chrono::steady_clock::time_point wall0_;
};

const Vec3 kUpright{90.0, 0.0, 0.0};

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// For verdict messages.
std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

// The axis every external force in the script acts along, if there is exactly one.
std::optional<int> single_axis(const std::vector<Disturbance>& script) {
  std::optional<int> axis;
  for (const auto& d : script) {
    if (d.kind != DisturbanceKind::external_force) return std::nullopt;
    int found = -1;
    for (int i = 0; i < 3; ++i) {
      if (d.direction[i] == 0) continue;
      if (found >= 0) return std::nullopt;
      found = i;
    }
    if (found < 0 || (axis && *axis != found)) return std::nullopt;
    axis = found;
  }
  return axis;
}

}  // namespace

std::vector<Sensor> make_sensors(std::uint64_t hardware_seed) {
  std::vector<Sensor> out;
  SensorGeometry g = default_geometry();
  for (int i = 0; i < kNumSensors; ++i) out.emplace_back(g, default_variation(i, hardware_seed), i);
  return out;
}

std::string strategy_model_path(const std::string& dir, Strategy s, int sensor_id) {
  std::string base = dir + "/" + strategy_name(s) + "/";
  if (s == Strategy::aggregate || s == Strategy::progressive) return base + "model.json";
  return base + "sensor" + std::to_string(sensor_id) + ".json";
}

void save_strategy_models(const std::string& dir, const StrategyResult& r) {
  std::filesystem::create_directories(dir + "/" + strategy_name(r.strategy));
  if (r.models.size() == 1) {
    save_model(strategy_model_path(dir, r.strategy, 0), r.models[0]);
    return;
  }
  for (int k = 0; k < static_cast<int>(r.models.size()); ++k) save_model(strategy_model_path(dir, r.strategy, k), r.models[k]);
}

std::vector<Regressor> load_strategy_models(const std::string& dir, Strategy s) {
  std::vector<Regressor> out;
  for (int k = 0; k < kNumSensors; ++k) out.push_back(load_model(strategy_model_path(dir, s, k)));
  return out;
}

std::vector<Regressor> train_rig_models(const std::vector<Sensor>& sensors, const RigTraining& cfg) {
  std::vector<SensorData> data;
  for (const auto& sensor : sensors) {
    CollectionConfig c;
    c.n_train_val = cfg.n_train_val;
    c.n_test = 1;
    c.seed = cfg.seed;
    auto d = collect(sensor, c);
    data.push_back({std::move(d.train), std::move(d.val)});
  }
  StrategyConfig sc;
  sc.hidden = cfg.hidden;
  sc.train.epochs = cfg.epochs;
  sc.train.seed = cfg.seed;
  sc.finetune_epochs = cfg.finetune_epochs;
  auto r = run_strategy(Strategy::standard, data, sc);
  std::vector<Regressor> out;
  for (int k = 0; k < static_cast<int>(sensors.size()); ++k) out.push_back(r.model_for(k));
  return out;
}

std::string Verdict::summary() const {
  if (pass) return "PASS";
  std::string s = "FAIL";
  for (std::size_t i = 0; i < reasons.size(); ++i) s += (i ? "; " : ": ") + reasons[i];
  return s;
}

const char* input_kind_name(InputKind k) {
  switch (k) {
    case InputKind::step: return "step";
    case InputKind::ramp: return "ramp";
    case InputKind::baseline: return "baseline";
  }
  return "?";
}

InputKind parse_input_kind(const std::string& s) {
  if (s == "step") return InputKind::step;
  if (s == "ramp") return InputKind::ramp;
  if (s == "baseline") return InputKind::baseline;
  throw InvalidArgument("input must be step, ramp or baseline");
}

// ---- Experiment 1 ----

Exp1Result run_exp1(const Rig& rig, const Exp1Config& cfg, std::uint64_t seed, const RunHooks& hooks) {
  if (!(cfg.mass >= 0 && cfg.mass <= rig.plant.max_rice)) throw InvalidArgument("mass outside 0..max rice");
  Loop loop(rig, rig.plant, seed, hooks);
  Exp1Result res;
  const auto& ps = loop.plant().state();
  auto record = [&](double u, std::optional<double> dfy) {
    res.rows.push_back({loop.t(), u, ps.fz_sum, dfy, ps.crush, ps.slip_accum});
  };

  double u;
  double floor;
  if (cfg.input == InputKind::baseline) {
    // Controller off: close straight to the grip that would hold the full load.
    loop.plant().reset(cfg.u_preshape, kUpright);
    const double full = (rig.plant.object_mass + rig.plant.max_rice) * rig.plant.gravity / rig.plant.friction;
    u = loop.plant().command_for_force(cfg.baseline_margin * full);
    floor = u;
    res.grasp = {true, u, 0.0};
    loop.plant().lift();
  } else {
    res.grasp = loop.gentle_grasp(cfg.u_preshape, kUpright, cfg.grasp_timeout, [&](double uc) { record(uc, {}); });
    if (!res.grasp.grasped) {
      res.verdict.fail("gentle grasp did not converge");
      return res;
    }
    u = floor = res.grasp.u;
  }

  const double duration = cfg.input == InputKind::ramp ? cfg.ramp_duration : cfg.step_duration;
  res.input_start = loop.t() + cfg.lead_in;
  res.input_end = res.input_start + duration;
  Disturbance d;
  d.t = res.input_start;
  d.kind = cfg.input == InputKind::ramp ? DisturbanceKind::ramp_mass : DisturbanceKind::step_mass;
  d.magnitude = cfg.mass;
  d.duration = duration;
  loop.plant().schedule(d);

  StaticStabilizer stab(rig.control, u, floor);
  const double end = res.input_end + cfg.observe;
  double u_max = u;
  while (loop.t() < end - 1e-9 && !loop.stopped()) {
    loop.step(u, kUpright, false);
    std::optional<double> dfy;
    if (cfg.input != InputKind::baseline) {
      u = stab.step(loop.t(), loop.snap().fy_sum);
      dfy = stab.last_dfy();
    }
    record(u, dfy);
    loop.publish(loop.digest(loop.t() < res.input_start ? "hold" : "load"));
    if (loop.t() >= res.input_start && loop.t() <= res.input_end) {
      if (u < u_max - cfg.u_noise_band) res.u_monotone = false;
      u_max = std::max(u_max, u);
    }
  }

  double last_out = -1;
  double fz_tail = 0;
  int n_tail = 0;
  for (const auto& r : res.rows) {
    res.max_fz = std::max(res.max_fz, r.fz_sum);
    if (r.t >= res.input_start && r.dfy) res.max_abs_dfy = std::max(res.max_abs_dfy, std::abs(*r.dfy));
    if (r.t >= res.input_end && r.dfy && std::abs(*r.dfy) > cfg.settle_band) last_out = r.t;
    if (r.t > end - 1.0) {
      fz_tail += r.fz_sum;
      ++n_tail;
    }
  }
  res.settle_time = last_out < 0 ? 0.0 : last_out - res.input_end + loop.dt();
  res.steady_fz = n_tail ? fz_tail / n_tail : 0.0;
  res.crush = ps.crush;
  res.dropped = ps.dropped;

  if (res.crush) res.verdict.fail("cup crushed");
  if (res.dropped) res.verdict.fail("cup dropped");
  if (res.max_fz >= cfg.fz_limit) res.verdict.fail("total normal force reached " + brief(res.max_fz) + " N");
  if (cfg.input == InputKind::step && res.settle_time > cfg.settle_limit)
    res.verdict.fail("dFy settled after " + brief(res.settle_time) + " s");
  if (cfg.input == InputKind::ramp && res.max_abs_dfy > cfg.ramp_band)
    res.verdict.fail("|dFy| reached " + brief(res.max_abs_dfy) + " during the ramp");
  return res;
}

// ---- Experiment 2 ----

Exp2Result run_exp2(const Rig& rig, const Exp2Config& cfg, std::uint64_t seed, const RunHooks& hooks) {
  if (!(cfg.fill >= 0 && cfg.fill <= rig.plant.max_rice)) throw InvalidArgument("fill outside 0..max rice");
  Loop loop(rig, rig.plant, seed, hooks);
  Exp2Result res;
  const auto& ps = loop.plant().state();
  GraspFrameState frame = grasp_frame_update(kUpright);

  auto add_row = [&](const DynamicStep* s) {
    Exp2Row r;
    r.t = loop.t();
    r.theta_x = frame.theta_x;
    r.theta_y = frame.theta_y;
    if (s) {
      r.dfx = s->dfx;
      r.dfy = s->dfy;
      r.ux = s->ux;
      r.uy = s->uy;
    }
    r.fz_sum = ps.fz_sum;
    r.rice_mass = ps.rice_mass;
    r.crush = ps.crush;
    r.slip = ps.slip_accum;
    res.rows.push_back(r);
  };

  res.grasp = loop.gentle_grasp(cfg.u_preshape, kUpright, cfg.grasp_timeout, [&](double) { add_row(nullptr); });
  res.phases.push_back({"grasp", 0.0, loop.t()});
  if (!res.grasp.grasped) {
    res.verdict.fail("gentle grasp did not converge");
    return res;
  }
  res.fz_initial = ps.fz_sum;

  const double t_fill = loop.t() + cfg.lead_in;
  const double t_fill_end = t_fill + cfg.fill_duration;
  const double t_pour = t_fill_end + cfg.rest;
  const long k_pour = std::lround(t_pour / loop.dt());
  const double leg = cfg.pour.leg_duration();
  const double t_end = t_pour + cfg.pour.duration() + cfg.observe;
  res.phases.push_back({"hold", res.grasp.t, t_fill});
  res.phases.push_back({"fill", t_fill, t_fill_end});
  res.phases.push_back({"rest", t_fill_end, k_pour * loop.dt()});
  res.phases.push_back({"pour", k_pour * loop.dt(), k_pour * loop.dt() + leg});
  res.phases.push_back({"hold_pour", k_pour * loop.dt() + leg, k_pour * loop.dt() + leg + cfg.pour.hold});
  res.phases.push_back({"return", k_pour * loop.dt() + leg + cfg.pour.hold, k_pour * loop.dt() + cfg.pour.duration()});
  res.phases.push_back({"observe", k_pour * loop.dt() + cfg.pour.duration(), t_end});

  Disturbance d;
  d.t = t_fill;
  d.kind = DisturbanceKind::step_mass;
  d.magnitude = cfg.fill;
  d.duration = cfg.fill_duration;
  loop.plant().schedule(d);

  double u = res.grasp.u;
  DynamicStabilizer stab(rig.control, u, res.grasp.u);
  double run_max = 0;
  while (loop.t() < t_end - 1e-9 && !loop.stopped()) {
    const long k_next = loop.steps() + 1;
    // Pour time from integer steps so the trajectory hits its waypoints exactly.
    const double tp = k_next >= k_pour ? static_cast<double>(k_next - k_pour) / std::round(1.0 / loop.dt()) : 0.0;
    Vec3 euler = cfg.pour.euler_at(tp);
    frame = grasp_frame_update(euler);
    loop.step(u, euler, false);
    DynamicStep s = stab.step(loop.t(), frame, loop.snap().fx_sum, loop.snap().fy_sum);
    u = s.u;
    add_row(&s);
    loop.publish(loop.digest(tp > 0 ? "pour" : "hold"));

    if (frame.theta_y == 90.0) {
      ++res.samples_at_90;
      if (s.uy != 0.0) res.uy_zero_at_90 = false;
    }
    if (tp > 0 && tp <= leg && euler[1] <= 90.0) {
      run_max = std::max(run_max, ps.fz_sum);
      res.max_fz_dip = std::max(res.max_fz_dip, run_max - ps.fz_sum);
    }
  }
  res.fz_final = ps.fz_sum;
  res.crush = ps.crush;
  res.dropped = ps.dropped;
  if (res.crush) res.verdict.fail("cup crushed");
  if (res.dropped) res.verdict.fail("cup dropped");
  if (res.samples_at_90 == 0) res.verdict.fail("no sample at theta_y = 90");
  if (!res.uy_zero_at_90) res.verdict.fail("uy nonzero at theta_y = 90");
  if (res.max_fz_dip > cfg.fz_band) res.verdict.fail("Fz dipped during the 0..90 deg leg");
  if (res.fz_final < res.fz_initial) res.verdict.fail("final Fz below initial Fz");
  return res;
}

// ---- Experiment 3 ----

Exp3Result run_exp3(const Rig& rig, const Exp3Config& cfg, std::uint64_t seed, const RunHooks& hooks) {
  if (cfg.interactive && !hooks.telemetry) throw InvalidArgument("interactive mode needs a command channel");
  PlantConfig pcfg = rig.plant;
  pcfg.crushable = false;
  pcfg.object_mass = cfg.object_mass;
  Loop loop(rig, pcfg, seed, hooks);
  Exp3Result res;
  const auto& ps = loop.plant().state();

  res.grasp = loop.gentle_grasp(cfg.u_preshape, kUpright, cfg.grasp_timeout, [](double) {});
  if (!res.grasp.grasped) {
    res.verdict.fail("gentle grasp did not converge");
    return res;
  }
  // Firm up to the holding force, then let the fingers settle.
  double u = res.grasp.u;
  const double timeout = loop.t() + 10.0;
  while (loop.snap().fz_sum < cfg.grip_force && loop.t() < timeout) {
    u = clamp_command(u + cfg.tighten_rate * loop.dt());
    loop.step(u, kUpright, false);
    loop.publish(loop.digest("tighten"));
  }
  if (loop.snap().fz_sum < cfg.grip_force) {
    res.verdict.fail("could not reach the holding force");
    return res;
  }
  const double t_hold_end = loop.t() + cfg.hold;
  Vec3 tare{0, 0, 0};
  int n_tare = 0;
  while (loop.t() < t_hold_end - 1e-9) {
    loop.step(u, kUpright, false);
    loop.publish(loop.digest("tare"));
    if (loop.t() > t_hold_end - cfg.tare_window) {
      tare[0] += loop.snap().fx_sum;
      tare[1] += loop.snap().fy_sum;
      tare[2] += loop.snap().fz_sum;
      ++n_tare;
    }
  }
  for (auto& c : tare) c /= std::max(1, n_tare);
  res.tare = tare;

  const double t0 = loop.t();
  double script_end = 0;
  for (auto d : cfg.script) {
    script_end = std::max(script_end, d.t + d.duration);
    d.t += t0;
    loop.plant().schedule(d);
  }
  double duration = cfg.duration > 0 ? cfg.duration : std::max(10.0, script_end + 3.0);
  if (cfg.interactive && cfg.duration <= 0) duration = INFINITY;

  Vec3 x{0, 0, 0};
  Vec3 err_sum{0, 0, 0};
  while (loop.t() - t0 < duration - 1e-9 && !loop.stopped()) {
    if (cfg.interactive) {
      for (const auto& c : hooks.telemetry->take_commands()) {
        const auto* f = std::get_if<ApplyForce>(&c);
        if (!f) continue;
        try {
          loop.plant().apply_leader_force(f->f);
        } catch (const InvalidArgument&) {
          continue;  // beyond the follower's limit; ignored
        }
        Disturbance rec;
        rec.t = loop.t() - t0;
        rec.kind = DisturbanceKind::external_force;
        double m = norm3(f->f);
        rec.magnitude = m;
        rec.direction = m > 0 ? Vec3{f->f[0] / m, f->f[1] / m, f->f[2] / m} : Vec3{1, 0, 0};
        res.recorded.push_back(rec);
      }
    }
    loop.step(u, kUpright, false);
    const auto& s = loop.snap();
    Exp3Row r;
    r.t = loop.t() - t0;
    r.fpred = {s.fx_sum - tare[0], s.fy_sum - tare[1], s.fz_sum - tare[2]};
    r.ftrue = ps.reading.force;
    r.v = velocity_command(rig.control.velocity, r.fpred);
    for (int i = 0; i < 3; ++i) {
      x[i] += r.v[i] * loop.dt();
      err_sum[i] += std::abs(r.fpred[i] - r.ftrue[i]);
    }
    r.x = x;
    res.rows.push_back(r);
    loop.publish(loop.digest("follow", x));
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, res.rows.size()));
  for (int i = 0; i < 3; ++i) res.tracking_mae[i] = err_sum[i] / n;
  res.tracking_mae_mean = (res.tracking_mae[0] + res.tracking_mae[1] + res.tracking_mae[2]) / 3;

  // Windows of drift_window seconds during which no force was applied.
  const long w = std::lround(cfg.drift_window / loop.dt());
  long quiet = 0;
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    quiet = norm3(res.rows[i].ftrue) == 0.0 ? quiet + 1 : 0;
    if (quiet > w) {
      const auto& a = res.rows[i - w].x;
      const auto& b = res.rows[i].x;
      double drift = norm3({b[0] - a[0], b[1] - a[1], b[2] - a[2]});
      res.max_zero_force_drift = std::max(res.max_zero_force_drift, drift);
      ++res.zero_force_windows;
    }
  }
  res.script_axis = single_axis(cfg.script);
  if (res.script_axis) {
    const int a = *res.script_axis;
    Vec3 peak{0, 0, 0};
    for (const auto& r : res.rows)
      for (int i = 0; i < 3; ++i) peak[i] = std::max(peak[i], std::abs(r.x[i]));
    double off = 0;
    for (int i = 0; i < 3; ++i)
      if (i != a) off = std::max(off, peak[i]);
    res.cross_axis = peak[a] > 0 ? off / peak[a] : 0.0;
  }

  res.dropped = ps.dropped;
  if (res.dropped) res.verdict.fail("object dropped");
  if (res.max_zero_force_drift >= cfg.drift_limit)
    res.verdict.fail("drift of " + brief(res.max_zero_force_drift) + " mm with no applied force");
  if (res.script_axis && res.cross_axis >= cfg.cross_axis_limit)
    res.verdict.fail("cross-axis motion " + brief(100 * res.cross_axis) + "% of the commanded axis");
  if (cfg.mae_limit) {
    for (int i = 0; i < 3; ++i) {
      if (res.tracking_mae[i] >= (*cfg.mae_limit)[i])
        res.verdict.fail(std::string("tracking MAE on ") + "xyz"[i] + " of " + brief(res.tracking_mae[i]) + " N");
    }
  }
  return res;
}

// ---- interactive session ----

SessionSummary run_session(const Rig& rig, const SessionConfig& cfg, std::uint64_t seed, const RunHooks& hooks) {
  Loop loop(rig, rig.plant, seed, hooks);
  SessionSummary out;
  GraspOutcome g = loop.gentle_grasp(cfg.u_preshape, kUpright, cfg.grasp_timeout, [](double) {});
  if (!g.grasped) throw Error("gentle grasp did not converge");
  double u = g.u;
  DynamicStabilizer stab(rig.control, u, g.u);
  std::optional<PourTrajectory> pour;
  double pour_start = 0;
  const double end = cfg.duration > 0 ? loop.t() + cfg.duration : INFINITY;
  while (loop.t() < end && !loop.stopped()) {
    if (hooks.telemetry) {
      for (const auto& c : hooks.telemetry->take_commands()) {
        ++out.commands;
        try {
          if (const auto* f = std::get_if<ApplyForce>(&c)) {
            loop.plant().apply_leader_force(f->f);
          } else if (const auto* m = std::get_if<AddMass>(&c)) {
            Disturbance d;
            d.t = loop.t();
            d.magnitude = m->kg;
            d.duration = m->duration;
            loop.plant().schedule(d);
          } else if (const auto* p = std::get_if<StartPour>(&c)) {
            if (!pour) {
              pour = PourTrajectory{p->gamma, p->rate, 1.0};
              pour_start = loop.t();
            }
          }
        } catch (const InvalidArgument&) {
        }
      }
    }
    double tp = pour ? loop.t() - pour_start : 0.0;
    if (pour && tp > pour->duration()) pour.reset();
    Vec3 euler = pour ? pour->euler_at(tp) : kUpright;
    GraspFrameState frame = grasp_frame_update(euler);
    loop.step(u, euler, false);
    u = stab.step(loop.t(), frame, loop.snap().fx_sum, loop.snap().fy_sum).u;
    loop.publish(loop.digest(pour ? "pour" : "hold"));
  }
  const auto& ps = loop.plant().state();
  out.t = loop.t();
  out.crush = ps.crush;
  out.dropped = ps.dropped;
  return out;
}

// ---- CSV ----

void write_exp1_csv(std::ostream& out, const Exp1Result& r) {
  out << kExp1Header << '\n';
  for (const auto& x : r.rows)
    out << fmt(x.t) << ',' << fmt(x.u) << ',' << fmt(x.fz_sum) << ',' << fmt(x.dfy) << ',' << int(x.crush) << ','
        << fmt(x.slip) << '\n';
}

void write_exp2_csv(std::ostream& out, const Exp2Result& r) {
  out << kExp2Header << '\n';
  for (const auto& x : r.rows)
    out << fmt(x.t) << ',' << fmt(x.theta_x) << ',' << fmt(x.theta_y) << ',' << fmt(x.dfx) << ',' << fmt(x.dfy) << ','
        << fmt(x.ux) << ',' << fmt(x.uy) << ',' << fmt(x.fz_sum) << ',' << fmt(x.rice_mass) << ',' << int(x.crush)
        << ',' << fmt(x.slip) << '\n';
}

void write_exp3_csv(std::ostream& out, const Exp3Result& r) {
  out << kExp3Header << '\n';
  for (const auto& x : r.rows) {
    out << fmt(x.t);
    for (const Vec3* v : {&x.fpred, &x.ftrue, &x.v, &x.x})
      for (double c : *v) out << ',' << fmt(c);
    out << '\n';
  }
}

void write_phases_csv(std::ostream& out, const std::vector<Phase>& phases) {
  out << kPhaseHeader << '\n';
  for (const auto& p : phases) out << p.name << ',' << fmt(p.t_start) << ',' << fmt(p.t_end) << '\n';
}

}  // namespace tacgrasp
