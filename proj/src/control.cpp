#include "tacgrasp/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// cos/sin of an angle in degrees, exact at multiples of 90 so that axis-aligned
// poses give exactly perpendicular axes.
double cos_deg(double deg) {
  double q = deg / 90.0;
  if (q == std::round(q)) {
    long k = ((long(std::round(q)) % 4) + 4) % 4;
    return k == 0 ? 1.0 : (k == 2 ? -1.0 : 0.0);
  }
  return std::cos(deg * kDeg);
}

double sin_deg(double deg) { return cos_deg(deg - 90.0); }

}  // namespace

Mat3 rot_x(double deg) {
  double c = cos_deg(deg), s = sin_deg(deg);
  return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
}

Mat3 rot_y(double deg) {
  double c = cos_deg(deg), s = sin_deg(deg);
  return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
}

Mat3 rot_z(double deg) {
  double c = cos_deg(deg), s = sin_deg(deg);
  return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2], m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Mat3 euler_sxyz(double alpha, double beta, double gamma) { return mul(rot_z(gamma), mul(rot_y(beta), rot_x(alpha))); }

double scale(double theta_deg) { return 1.0 - theta_deg / 90.0; }

GraspFrameState grasp_frame_update(const Vec3& euler_deg, const Vec3& gravity) {
  double norm = std::sqrt(gravity[0] * gravity[0] + gravity[1] * gravity[1] + gravity[2] * gravity[2]);
  if (!(norm > 0)) throw InvalidArgument("gravity vector must be non-zero");
  GraspFrameState s;
  s.euler = euler_deg;
  s.gravity = {gravity[0] / norm, gravity[1] / norm, gravity[2] / norm};
  Mat3 R = euler_sxyz(euler_deg[0], euler_deg[1], euler_deg[2]);
  s.x_axis = mul(R, Vec3{1, 0, 0});
  s.y_axis = mul(R, Vec3{0, -1, 0});
  auto angle = [&](const Vec3& v) {
    double d = s.gravity[0] * v[0] + s.gravity[1] * v[1] + s.gravity[2] * v[2];
    if (d == 0.0) return 90.0;
    return std::acos(std::clamp(d, -1.0, 1.0)) * (180.0 / std::numbers::pi);
  };
  s.theta_x = angle(s.x_axis);
  s.theta_y = angle(s.y_axis);
  s.s_x = scale(s.theta_x);
  s.s_y = scale(s.theta_y);
  return s;
}

double PidController::step(double error, double dt) {
  if (!(dt > 0)) throw InvalidArgument("pid step needs dt > 0");
  integral_ = std::clamp(integral_ + error * dt, -limit_, limit_);
  double deriv = has_prev_ ? (error - prev_) / dt : 0.0;
  prev_ = error;
  has_prev_ = true;
  return g_.kp * error + g_.ki * integral_ + g_.kd * deriv;
}

void PidController::reset() {
  integral_ = 0;
  prev_ = 0;
  has_prev_ = false;
}

GentleGraspResult gentle_grasp_step(const GentleGraspConfig& cfg, double ssim_avg, double u) {
  double err = ssim_avg - cfg.setpoint;  // positive while deformation is below target
  double gain = ssim_avg >= cfg.contact_threshold ? cfg.p1_gain : cfg.p0_gain;
  GentleGraspResult r;
  r.u = clamp_command(u + gain * err);
  r.grasped = std::abs(err) < cfg.tolerance;
  return r;
}

Vec3 velocity_command(const VelocityConfig& cfg, const Vec3& force) {
  Vec3 v{};
  for (int i = 0; i < 3; ++i) {
    double f = force[i];
    if (std::abs(f) < cfg.deadband) continue;
    v[i] = std::clamp(cfg.k0[i] * (std::abs(f) / cfg.fmax[i]) * f, -cfg.vmax, cfg.vmax);
  }
  return v;
}

namespace {

nlohmann::json gains_json(const PidGains& g) { return {{"kp", g.kp}, {"ki", g.ki}, {"kd", g.kd}}; }

void read_gains(const nlohmann::json& j, const char* key, PidGains& g) {
  if (!j.contains(key)) return;
  const auto& o = j.at(key);
  g.kp = o.value("kp", g.kp);
  g.ki = o.value("ki", g.ki);
  g.kd = o.value("kd", g.kd);
}

}  // namespace

std::string control_config_to_json(const ControlConfig& c) {
  nlohmann::json j;
  j["exp1"] = gains_json(c.static_gains);
  j["exp2_x"] = gains_json(c.dynamic_x);
  j["exp2_y"] = gains_json(c.dynamic_y);
  j["integral_limit"] = c.integral_limit;
  j["output_scale"] = c.output_scale;
  j["delta"] = c.delta;
  j["dt"] = c.dt;
  j["gentle"] = {{"contact_threshold", c.gentle.contact_threshold},
                 {"setpoint", c.gentle.setpoint},
                 {"tolerance", c.gentle.tolerance},
                 {"p0_gain", c.gentle.p0_gain},
                 {"p1_gain", c.gentle.p1_gain}};
  j["exp3"] = {{"k0x", c.velocity.k0[0]},        {"k0y", c.velocity.k0[1]}, {"k0z", c.velocity.k0[2]},
               {"fmax", c.velocity.fmax},        {"deadband", c.velocity.deadband},
               {"vmax", c.velocity.vmax}};
  return j.dump(2);
}

ControlConfig control_config_from_json(const std::string& text) {
  ControlConfig c;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("control config: ") + e.what(), 1, -1);
  }
  try {
    read_gains(j, "exp1", c.static_gains);
    read_gains(j, "exp2_x", c.dynamic_x);
    read_gains(j, "exp2_y", c.dynamic_y);
    c.integral_limit = j.value("integral_limit", c.integral_limit);
    c.output_scale = j.value("output_scale", c.output_scale);
    c.delta = j.value("delta", c.delta);
    c.dt = j.value("dt", c.dt);
    if (j.contains("gentle")) {
      const auto& g = j["gentle"];
      c.gentle.contact_threshold = g.value("contact_threshold", c.gentle.contact_threshold);
      c.gentle.setpoint = g.value("setpoint", c.gentle.setpoint);
      c.gentle.tolerance = g.value("tolerance", c.gentle.tolerance);
      c.gentle.p0_gain = g.value("p0_gain", c.gentle.p0_gain);
      c.gentle.p1_gain = g.value("p1_gain", c.gentle.p1_gain);
    }
    if (j.contains("exp3")) {
      const auto& v = j["exp3"];
      c.velocity.k0 = {v.value("k0x", c.velocity.k0[0]), v.value("k0y", c.velocity.k0[1]),
                       v.value("k0z", c.velocity.k0[2])};
      if (v.contains("fmax")) c.velocity.fmax = v["fmax"].get<Vec3>();
      c.velocity.deadband = v.value("deadband", c.velocity.deadband);
      c.velocity.vmax = v.value("vmax", c.velocity.vmax);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("control config: ") + e.what(), 1, -1);
  }
  if (!(c.gentle.setpoint > 0 && c.gentle.setpoint < c.gentle.contact_threshold && c.gentle.contact_threshold < 1))
    throw InvalidArgument("gentle grasp needs 0 < setpoint < contact_threshold < 1");
  if (!(c.dt > 0) || c.delta < 1 || !(c.velocity.deadband >= 0) || !(c.velocity.vmax > 0))
    throw InvalidArgument("invalid control timing or velocity settings");
  for (int i = 0; i < 3; ++i)
    if (!(c.velocity.k0[i] > 0) || !(c.velocity.fmax[i] > 0)) throw InvalidArgument("velocity gains must be positive");
  return c;
}

ControlConfig load_control_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open control config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return control_config_from_json(ss.str());
}

StaticStabilizer::StaticStabilizer(const ControlConfig& cfg, double u, double floor)
    : cfg_(cfg), pid_(cfg.static_gains, cfg.integral_limit), rate_(cfg.delta), u_(u), floor_(floor) {}

double StaticStabilizer::step(double t, double fy_sum) {
  dfy_ = rate_.push(t, fy_sum);
  if (!dfy_) return u_;  // not enough history yet: hold
  u_ = clamp_command(u_ + cfg_.output_scale * pid_.step(*dfy_, cfg_.dt), floor_);
  return u_;
}

DynamicStabilizer::DynamicStabilizer(const ControlConfig& cfg, double u, double floor)
    : cfg_(cfg),
      pid_x_(cfg.dynamic_x, cfg.integral_limit),
      pid_y_(cfg.dynamic_y, cfg.integral_limit),
      rate_x_(cfg.delta),
      rate_y_(cfg.delta),
      u_(u),
      floor_(floor) {}

DynamicStep DynamicStabilizer::step(double t, const GraspFrameState& frame, double fx_sum, double fy_sum) {
  DynamicStep s;
  s.dfx = rate_x_.push(t, fx_sum);
  s.dfy = rate_y_.push(t, fy_sum);
  if (s.dfx && s.dfy) {
    s.ux = frame.s_x * *s.dfx;
    s.uy = frame.s_y * *s.dfy;
    double inc = pid_x_.step(s.ux, cfg_.dt) + pid_y_.step(s.uy, cfg_.dt);
    u_ = clamp_command(u_ + cfg_.output_scale * inc, floor_);
  }
  s.u = u_;
  return s;
}

}  // namespace tacgrasp
