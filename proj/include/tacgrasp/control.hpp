#pragma once

#include <array>
#include <optional>
#include <string>

#include "tacgrasp/signal.hpp"

namespace tacgrasp {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 rot_x(double deg);
Mat3 rot_y(double deg);
Mat3 rot_z(double deg);
Mat3 mul(const Mat3& a, const Mat3& b);
Vec3 mul(const Mat3& m, const Vec3& v);
// SXYZ (static-axis) Euler angles: R = Rz(gamma) Ry(beta) Rx(alpha).
Mat3 euler_sxyz(double alpha, double beta, double gamma);

struct GraspFrameState {
  Vec3 euler{};              // deg (alpha, beta, gamma)
  Vec3 gravity{0, 0, -1};    // unit
  Vec3 x_axis{}, y_axis{};   // grasp-frame shear axes in the base frame
  double theta_x = 0, theta_y = 0;  // deg
  double s_x = 0, s_y = 0;
};

GraspFrameState grasp_frame_update(const Vec3& euler_deg, const Vec3& gravity = {0, 0, -1});

// 1 - 2*theta/pi, theta given in degrees on [0, 180].
double scale(double theta_deg);

struct PidGains {
  double kp = 0, ki = 0, kd = 0;
};

// Positional PID whose output is used as an increment of the hand command.
class PidController {
 public:
  explicit PidController(PidGains g = {}, double integral_limit = 10.0) : g_(g), limit_(integral_limit) {}

  double step(double error, double dt);
  void reset();
  double integral() const { return integral_; }
  const PidGains& gains() const { return g_; }

 private:
  PidGains g_;
  double limit_;
  double integral_ = 0;
  double prev_ = 0;
  bool has_prev_ = false;
};

struct GentleGraspConfig {
  double contact_threshold = 0.985;
  double setpoint = 0.96;
  double tolerance = 0.005;
  double p1_gain = 0.008;   // closing, per step per unit SSIM error
  double p0_gain = 0.003;   // fine regulation
};

struct GentleGraspResult {
  double u = 0;
  bool grasped = false;
};

GentleGraspResult gentle_grasp_step(const GentleGraspConfig& cfg, double ssim_avg, double u);

struct VelocityConfig {
  Vec3 k0{500, 500, 1500};
  Vec3 fmax{20, 20, 60};
  double deadband = 0.2;  // N
  double vmax = 100;      // mm/s
};

// Per axis: 0 inside the dead-band, else k0 * (|F|/Fmax) * F clamped to +-vmax.
Vec3 velocity_command(const VelocityConfig& cfg, const Vec3& force);

struct ControlConfig {
  PidGains static_gains{110, 0.05, 0.01};
  PidGains dynamic_x{300, 1, 0.1};
  PidGains dynamic_y{110, 0.05, 0.01};
  double integral_limit = 10.0;
  double output_scale = 7.5e-6;  // hand command per unit PID output
  int delta = 50;
  double dt = 1.0 / 150.0;
  GentleGraspConfig gentle;
  VelocityConfig velocity;
};

ControlConfig control_config_from_json(const std::string& text);
std::string control_config_to_json(const ControlConfig& cfg);
ControlConfig load_control_config(const std::string& path);

inline double clamp_command(double u, double floor = 0.0) { return u < floor ? floor : (u > 1.0 ? 1.0 : u); }

enum class GraspMode { establishing, stabilizing };

// Static stabilization: lagged Fy difference into one PID. Never opens below `floor`.
class StaticStabilizer {
 public:
  StaticStabilizer(const ControlConfig& cfg, double u, double floor);

  double step(double t, double fy_sum);
  double u() const { return u_; }
  std::optional<double> last_dfy() const { return dfy_; }
  const PidController& pid() const { return pid_; }

 private:
  ControlConfig cfg_;
  PidController pid_;
  RateEstimator rate_;
  double u_, floor_;
  std::optional<double> dfy_;
};

struct DynamicStep {
  double u = 0;
  std::optional<double> dfx, dfy;
  double ux = 0, uy = 0;  // scaled controller inputs
};

// Dynamic stabilization: two PIDs on gravity-scaled lagged shear differences.
class DynamicStabilizer {
 public:
  DynamicStabilizer(const ControlConfig& cfg, double u, double floor);

  DynamicStep step(double t, const GraspFrameState& frame, double fx_sum, double fy_sum);
  double u() const { return u_; }

 private:
  ControlConfig cfg_;
  PidController pid_x_, pid_y_;
  RateEstimator rate_x_, rate_y_;
  double u_, floor_;
};

}  // namespace tacgrasp
