#include "tacgrasp/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

namespace {

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

DisturbanceKind parse_kind(const std::string& s) {
  if (s == "step_mass") return DisturbanceKind::step_mass;
  if (s == "ramp_mass") return DisturbanceKind::ramp_mass;
  if (s == "external_force") return DisturbanceKind::external_force;
  throw InvalidArgument("unknown disturbance kind: " + s);
}

std::vector<Sensor> nominal_fingers() {
  std::vector<Sensor> out;
  SensorGeometry g = default_geometry();
  for (int i = 0; i < kNumSensors; ++i) out.emplace_back(g, SensorVariation{}, i);
  return out;
}

}  // namespace

const char* disturbance_kind_name(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::step_mass: return "step_mass";
    case DisturbanceKind::ramp_mass: return "ramp_mass";
    case DisturbanceKind::external_force: return "external_force";
  }
  return "?";
}

void validate(const Disturbance& d, const PlantConfig& cfg) {
  if (!(d.magnitude >= 0)) throw InvalidArgument("disturbance magnitude must be >= 0");
  if (!(d.duration >= 0)) throw InvalidArgument("disturbance duration must be >= 0");
  if (!std::isfinite(d.t)) throw InvalidArgument("disturbance time must be finite");
  if (d.kind == DisturbanceKind::external_force) {
    if (std::abs(norm(d.direction) - 1.0) > 1e-6) throw InvalidArgument("force direction must be a unit vector");
    if (d.magnitude > cfg.max_leader_force) throw InvalidArgument("external force above the configured maximum");
  }
}

std::vector<Disturbance> parse_disturbance_script(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("disturbance script: ") + e.what(), 0, -1);
  }
  if (!j.is_array()) throw ParseError("disturbance script must be a JSON list", 0, -1);
  std::vector<Disturbance> out;
  PlantConfig defaults;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    try {
      Disturbance d;
      d.t = e.at("t").get<double>();
      d.kind = parse_kind(e.at("kind").get<std::string>());
      d.magnitude = e.at("magnitude").get<double>();
      d.duration = e.value("duration", 0.0);
      if (e.contains("direction")) {
        auto v = e.at("direction").get<std::vector<double>>();
        if (v.size() != 3) throw InvalidArgument("direction needs 3 components");
        d.direction = {v[0], v[1], v[2]};
      }
      validate(d, defaults);
      out.push_back(d);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("disturbance script entry: ") + ex.what(), 0, static_cast<long>(i));
    } catch (const InvalidArgument& ex) {
      throw ParseError(std::string("disturbance script entry: ") + ex.what(), 0, static_cast<long>(i));
    }
  }
  return out;
}

std::string format_disturbance_script(const std::vector<Disturbance>& script) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : script) {
    j.push_back({{"t", d.t},
                 {"kind", disturbance_kind_name(d.kind)},
                 {"magnitude", d.magnitude},
                 {"duration", d.duration},
                 {"direction", {d.direction[0], d.direction[1], d.direction[2]}}});
  }
  return j.dump();
}

std::vector<Disturbance> load_disturbance_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open disturbance script: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_disturbance_script(ss.str());
}

Plant::Plant(const PlantConfig& cfg, std::uint64_t seed, std::vector<Sensor> fingers)
    : cfg_(cfg), fingers_(fingers.empty() ? nominal_fingers() : std::move(fingers)) {
  if (fingers_.size() != kNumSensors) throw InvalidArgument("plant needs one sensor per finger");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  contact_point_ = cfg_.contact_point + cfg_.contact_jitter * n(rng);
  reset(0.0);
}

void Plant::reset(double u, const Vec3& arm_euler) {
  int depth = *std::max_element(cfg_.synergy_delay.begin(), cfg_.synergy_delay.end()) + 1;
  state_ = PlantState{};
  state_.u_command = state_.u_applied = u;
  state_.tendon = u - cfg_.backlash / 2;
  state_.arm_euler = arm_euler;
  history_.assign(depth, state_.tendon);
  state_.finger_closure.fill(state_.tendon);
  state_.cup_mass = cfg_.object_mass;
  spilled_ = 0;
  resolve_contacts(0.0);
}

void Plant::schedule(const Disturbance& d) {
  validate(d, cfg_);
  schedule_.push_back(d);
}

void Plant::apply_leader_force(const Vec3& f) {
  for (double c : f)
    if (!std::isfinite(c)) throw InvalidArgument("leader force must be finite");
  if (norm(f) > cfg_.max_leader_force) throw InvalidArgument("leader force above the configured maximum");
  leader_ = f;
}

double Plant::rice_added(double t) const {
  double m = 0;
  for (const auto& d : schedule_) {
    if (d.kind == DisturbanceKind::external_force || t < d.t) continue;
    double frac = d.duration > 0 ? std::min(1.0, (t - d.t) / d.duration) : 1.0;
    m += d.magnitude * frac;
  }
  return std::min(m, cfg_.max_rice);
}

Vec3 Plant::external_force(double t) const {
  // The latest scripted force that has started and not expired wins over the leader input.
  Vec3 f = leader_;
  double latest = -INFINITY;
  for (const auto& d : schedule_) {
    if (d.kind != DisturbanceKind::external_force || t < d.t) continue;
    if (d.duration > 0 && t >= d.t + d.duration) continue;
    if (d.t >= latest) {
      latest = d.t;
      f = {d.magnitude * d.direction[0], d.magnitude * d.direction[1], d.magnitude * d.direction[2]};
    }
  }
  return f;
}

double Plant::crush_threshold() const {
  double fill = std::min(1.0, state_.rice_mass / cfg_.crush_full_fill);
  return cfg_.crush_empty + (cfg_.crush_full - cfg_.crush_empty) * fill;
}

double Plant::command_for_force(double fz_total) const {
  return contact_point_ + fz_total / (kNumSensors * cfg_.object_stiffness * cfg_.finger_travel) + cfg_.backlash / 2;
}

const PlantState& Plant::step(double u, const Vec3& arm_euler, double dt) {
  if (!(dt > 0)) throw InvalidArgument("plant step needs dt > 0");
  PlantState& s = state_;
  s.t += dt;
  s.u_command = u;
  s.u_applied += (u - s.u_applied) * std::min(1.0, dt / cfg_.actuator_tau);
  // Tendon slack: the fingers only follow once the actuator takes up the backlash.
  const double half = cfg_.backlash / 2;
  if (s.u_applied > s.tendon + half)
    s.tendon = s.u_applied - half;
  else if (s.u_applied < s.tendon - half)
    s.tendon = s.u_applied + half;
  history_.erase(history_.begin());
  history_.push_back(s.tendon);
  for (int i = 0; i < kNumSensors; ++i)
    s.finger_closure[i] = history_[history_.size() - 1 - cfg_.synergy_delay[i]];
  s.arm_euler = arm_euler;

  GraspFrameState frame = grasp_frame_update(arm_euler);
  double rice = std::max(0.0, rice_added(s.t) - spilled_);
  if (frame.theta_y > cfg_.spill_angle && rice > 0) {
    double out = std::min(rice, cfg_.outflow * (frame.theta_y - cfg_.spill_angle) * dt);
    spilled_ += out;
    rice -= out;
  }
  s.rice_mass = rice;
  s.cup_mass = cfg_.object_mass + rice;
  resolve_contacts(dt);
  return s;
}

void Plant::resolve_contacts(double dt) {
  PlantState& s = state_;
  GraspFrameState frame = grasp_frame_update(s.arm_euler);
  Vec3 ext = external_force(s.t);
  s.reading.force = ext;

  std::array<double, kNumSensors> normal{};
  double fz = 0;
  for (int i = 0; i < kNumSensors; ++i) {
    double pen = cfg_.finger_travel * (s.finger_closure[i] - contact_point_);
    normal[i] = s.dropped ? 0.0 : cfg_.object_stiffness * std::max(0.0, pen);
    fz += normal[i];
  }
  // A push along the grip normal loads the fingers in proportion to their contact.
  if (fz > 0 && ext[2] != 0) {
    double k = std::max(0.0, fz + ext[2]) / fz;
    for (auto& n : normal) n *= k;
    fz = std::max(0.0, fz + ext[2]);
  }
  s.fz_sum = fz;
  if (cfg_.crushable && !s.dropped && fz >= crush_threshold()) s.crush = true;

  // Weight in the grasp frame: its components along the two shear axes.
  const double w = s.dropped || !s.lifted ? 0.0 : s.cup_mass * cfg_.gravity;
  const Vec3 g{0, 0, -1};
  double lx = w * dot(frame.x_axis, g) + ext[0];
  double ly = w * dot(frame.y_axis, g) + ext[1];
  s.load = {lx, ly, ext[2]};
  double demand = std::hypot(lx, ly);
  double cap = cfg_.friction * fz;
  double sx = lx, sy = ly;
  s.slipping = false;
  if (!s.dropped && s.lifted && demand > cap) {
    s.slipping = true;
    double k = demand > 0 ? cap / demand : 0.0;
    sx *= k;
    sy *= k;
    s.slip_accum += (demand - cap) / cfg_.slip_damping * dt;
    if (s.slip_accum > cfg_.drop_slip) s.dropped = true;
  }

  for (int i = 0; i < kNumSensors; ++i) {
    double share = fz > 0 ? normal[i] / fz : 0.0;
    ContactForce f{sx * share, sy * share, normal[i]};
    if (s.dropped) f = {};
    s.finger_force[i] = f;
    const Sensor& sensor = fingers_[i];
    ContactState c;
    c.z = sensor.depth_for_force(f.fz);
    double kt = sensor.shear_stiffness();
    c.shear_x = f.fx / kt;
    c.shear_y = f.fy / kt;
    s.contact[i] = c;
  }
}

double PourTrajectory::gamma_at(double t) const {
  if (!(rate > 0)) throw InvalidArgument("pour rate must be > 0");
  const double leg = leg_duration();
  if (t <= 0) return 0.0;
  if (t < leg) return rate * t;
  if (t <= leg + hold) return gamma_target;
  double back = t - leg - hold;
  if (back >= leg) return 0.0;
  return gamma_target - rate * back;
}

Vec3 PourTrajectory::euler_at(double t) const { return {90.0, gamma_at(t), 0.0}; }

std::vector<std::pair<double, Vec3>> pour_trajectory(double gamma_target, double rate, double dt, double hold) {
  if (!(rate > 0)) throw InvalidArgument("pour rate must be > 0");
  if (!(dt > 0)) throw InvalidArgument("pour sampling needs dt > 0");
  PourTrajectory p{gamma_target, rate, hold};
  std::vector<std::pair<double, Vec3>> out;
  const double end = p.duration();
  const auto n = static_cast<long>(std::ceil(end / dt - 1e-9));
  for (long i = 0; i <= n; ++i) {
    double t = std::min(i * dt, end);
    out.emplace_back(t, p.euler_at(t));
  }
  return out;
}

}  // namespace tacgrasp
