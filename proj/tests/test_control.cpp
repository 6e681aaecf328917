#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>

#include "tacgrasp/control.hpp"
#include "tacgrasp/error.hpp"

using namespace tacgrasp;

namespace {

constexpr double kPi = std::numbers::pi;

// Axis angle to gravity via quaternion composition of the same SXYZ sequence.
double oracle_theta(double a, double b, double g, const Eigen::Vector3d& axis, const Eigen::Vector3d& grav) {
  const double k = kPi / 180;
  Eigen::Quaterniond q = Eigen::AngleAxisd(g * k, Eigen::Vector3d::UnitZ()) *
                         Eigen::AngleAxisd(b * k, Eigen::Vector3d::UnitY()) *
                         Eigen::AngleAxisd(a * k, Eigen::Vector3d::UnitX());
  Eigen::Vector3d v = q * axis;
  return std::acos(std::clamp(v.normalized().dot(grav.normalized()), -1.0, 1.0));
}

double triangle_wave(double theta, double a, double p) { return 1 - (2 * a / kPi) * std::acos(std::cos(2 * kPi * theta / p)); }

}  // namespace

TEST(GraspFrame, HandDerivedExamples) {
  auto s = grasp_frame_update({0, 0, 0});
  EXPECT_EQ(s.x_axis, (Vec3{1, 0, 0}));
  EXPECT_EQ(s.theta_x, 90.0);
  EXPECT_EQ(s.s_x, 0.0);
  EXPECT_EQ(s.theta_y, 90.0);

  s = grasp_frame_update({0, 90, 0});
  EXPECT_EQ(s.x_axis, (Vec3{0, 0, -1}));
  EXPECT_EQ(s.theta_x, 0.0);
  EXPECT_EQ(s.s_x, 1.0);

  s = grasp_frame_update({90, 0, 0});
  EXPECT_EQ(s.y_axis, (Vec3{0, 0, -1}));
  EXPECT_EQ(s.theta_y, 0.0);
  EXPECT_EQ(s.s_y, 1.0);
  EXPECT_EQ(s.theta_x, 90.0);
}

TEST(GraspFrame, PourPoseAngles) {
  // (90, gamma, 0): y' tips from straight down through horizontal to 120 deg.
  for (double g : {0.0, 30.0, 90.0, 120.0}) {
    auto s = grasp_frame_update({90, g, 0});
    EXPECT_NEAR(s.theta_y, g, 1e-9);
    EXPECT_NEAR(s.theta_x, std::abs(90 - g), 1e-9);
  }
  EXPECT_EQ(grasp_frame_update({90, 90, 0}).s_y, 0.0);
  EXPECT_LT(grasp_frame_update({90, 120, 0}).s_y, 0.0);
}

TEST(GraspFrame, MatchesQuaternionOracle) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ang(-180, 180);
  std::normal_distribution<double> n(0, 1);
  for (int i = 0; i < 1000; ++i) {
    double a = ang(rng), b = ang(rng), g = ang(rng);
    Eigen::Vector3d grav(0, 0, -1);
    if (i % 2) grav = Eigen::Vector3d(n(rng), n(rng), n(rng));
    auto s = grasp_frame_update({a, b, g}, {grav.x(), grav.y(), grav.z()});
    EXPECT_NEAR(s.theta_x * kPi / 180, oracle_theta(a, b, g, {1, 0, 0}, grav), 1e-9);
    EXPECT_NEAR(s.theta_y * kPi / 180, oracle_theta(a, b, g, {0, -1, 0}, grav), 1e-9);
  }
}

TEST(GraspFrame, RejectsZeroGravity) { EXPECT_THROW(grasp_frame_update({0, 0, 0}, {0, 0, 0}), InvalidArgument); }

TEST(Scale, EndpointsAffineAndTriangleWave) {
  EXPECT_EQ(scale(0), 1.0);
  EXPECT_EQ(scale(90), 0.0);
  EXPECT_EQ(scale(180), -1.0);
  for (int i = 0; i <= 180; ++i) {
    double deg = i;
    EXPECT_NEAR(scale(deg), triangle_wave(deg * kPi / 180, 1.0, 2 * kPi), 1e-12);
    EXPECT_NEAR(scale(deg), 1 - 2 * (deg * kPi / 180) / kPi, 1e-12);
  }
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 180), w(0, 1);
  for (int i = 0; i < 1000; ++i) {
    double a = u(rng), b = u(rng), t = w(rng);
    EXPECT_NEAR(scale(t * a + (1 - t) * b), t * scale(a) + (1 - t) * scale(b), 1e-12);
  }
}

TEST(Pid, Examples) {
  PidController zero({110, 0.05, 0.01});
  EXPECT_EQ(zero.step(0, 0.01), 0.0);
  EXPECT_EQ(zero.step(0, 0.01), 0.0);

  PidController p({110, 0, 0});
  EXPECT_NEAR(p.step(0.1, 1.0 / 60), 11.0, 1e-12);

  PidController d({0, 0, 1});
  double dt = 0.01, out = 0;
  for (int i = 0; i < 10; ++i) out = d.step(i * dt, dt);
  EXPECT_NEAR(out, 1.0, 1e-9);
  EXPECT_THROW(d.step(0, 0), InvalidArgument);
}

TEST(Pid, IntegralClamped) {
  PidController p({0, 1, 0}, 10.0);
  double out = 0;
  for (int i = 0; i < 1000; ++i) out = p.step(100, 0.1);
  EXPECT_EQ(p.integral(), 10.0);
  EXPECT_EQ(out, 10.0);
  for (int i = 0; i < 1000; ++i) out = p.step(-100, 0.1);
  EXPECT_EQ(p.integral(), -10.0);
}

TEST(Pid, ZeroGainsNeverMoveCommand) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 5);
  ControlConfig cfg;
  cfg.static_gains = {0, 0, 0};
  StaticStabilizer st(cfg, 0.42, 0.0);
  for (int i = 0; i < 500; ++i) EXPECT_EQ(st.step(i * cfg.dt, n(rng)), 0.42);
}

TEST(Pid, CommandStaysInUnitInterval) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 50);
  ControlConfig cfg;
  cfg.output_scale = 1e-2;
  StaticStabilizer st(cfg, 0.5, 0.0);
  DynamicStabilizer dy(cfg, 0.5, 0.0);
  for (int i = 0; i < 5000; ++i) {
    double t = i * cfg.dt;
    double u1 = st.step(t, n(rng));
    double u2 = dy.step(t, grasp_frame_update({90, double(i % 180), 0}), n(rng), n(rng)).u;
    EXPECT_GE(u1, 0.0);
    EXPECT_LE(u1, 1.0);
    EXPECT_GE(u2, 0.0);
    EXPECT_LE(u2, 1.0);
  }
}

TEST(GentleGrasp, ClosesWithoutContactAndHoldsAtSetpoint) {
  GentleGraspConfig cfg;
  auto r = gentle_grasp_step(cfg, 1.0, 0.3);
  EXPECT_GT(r.u, 0.3);
  EXPECT_FALSE(r.grasped);
  r = gentle_grasp_step(cfg, cfg.setpoint, 0.55);
  EXPECT_EQ(r.u, 0.55);
  EXPECT_TRUE(r.grasped);
  // fine phase opens again if pressed too hard
  r = gentle_grasp_step(cfg, cfg.setpoint - 0.02, 0.55);
  EXPECT_LT(r.u, 0.55);
  EXPECT_FALSE(r.grasped);
}

TEST(GentleGrasp, TerminatesAgainstMonotonePlant) {
  GentleGraspConfig cfg;
  // First-order lagged closure; similarity falls linearly once in contact.
  double u = 0.3, a = 0.3;
  bool grasped = false;
  int steps = 0;
  for (; steps < 20000 && !grasped; ++steps) {
    a += (u - a) * (1.0 / 150) / 0.08;
    double ssim = 1.0 - 4.0 * std::max(0.0, a - 0.5);
    auto r = gentle_grasp_step(cfg, ssim, u);
    u = r.u;
    grasped = r.grasped;
  }
  EXPECT_TRUE(grasped);
  EXPECT_LT(steps, 20000);
}

TEST(StaticStabilizer, HoldsUntilReadyAndOnConstantLoad) {
  ControlConfig cfg;
  StaticStabilizer st(cfg, 0.5, 0.5);
  for (int i = 0; i < cfg.delta; ++i) {
    EXPECT_EQ(st.step(i * cfg.dt, 0.1 * i), 0.5);
    EXPECT_FALSE(st.last_dfy().has_value());
  }
  StaticStabilizer flat(cfg, 0.5, 0.0);
  for (int i = 0; i < 300; ++i) EXPECT_EQ(flat.step(i * cfg.dt, 1.3), 0.5);
}

TEST(StaticStabilizer, AddedLoadTightens) {
  ControlConfig cfg;
  StaticStabilizer st(cfg, 0.5, 0.5);
  double u = 0.5;
  for (int i = 0; i < 200; ++i) u = st.step(i * cfg.dt, i < 100 ? 0.2 : 2.0);
  EXPECT_GT(u, 0.5);
}

TEST(DynamicStabilizer, ScalingOfInputs) {
  ControlConfig cfg;
  // neutral pose: theta_x = 90 -> x input vanishes
  {
    DynamicStabilizer dy(cfg, 0.5, 0.0);
    auto frame = grasp_frame_update({90, 0, 0});
    DynamicStep s;
    for (int i = 0; i <= cfg.delta + 5; ++i) s = dy.step(i * cfg.dt, frame, 0.05 * i, 0.01 * i);
    ASSERT_TRUE(s.dfx.has_value());
    EXPECT_EQ(s.ux, 0.0);
    EXPECT_NEAR(s.uy, *s.dfy, 1e-15);
  }
  // theta_y = 90: y input vanishes whatever dFy is
  {
    DynamicStabilizer dy(cfg, 0.5, 0.0);
    auto frame = grasp_frame_update({90, 90, 0});
    ASSERT_EQ(frame.theta_y, 90.0);
    DynamicStep s;
    for (int i = 0; i <= cfg.delta + 5; ++i) {
      s = dy.step(i * cfg.dt, frame, 0.0, 0.3 * i);
      if (s.dfy) EXPECT_EQ(s.uy, 0.0);
    }
    EXPECT_GT(*s.dfy, 0.0);
  }
  // theta_y = 120: positive dFy gives a negative (inverted) input
  {
    DynamicStabilizer dy(cfg, 0.5, 0.0);
    auto frame = grasp_frame_update({90, 120, 0});
    DynamicStep s;
    for (int i = 0; i <= cfg.delta + 5; ++i) s = dy.step(i * cfg.dt, frame, 0.0, 0.01 * i);
    EXPECT_LT(s.uy, 0.0);
  }
}

TEST(Velocity, Examples) {
  VelocityConfig cfg;
  EXPECT_EQ(velocity_command(cfg, {0, 0, 0}), (Vec3{0, 0, 0}));
  EXPECT_EQ(velocity_command(cfg, {0.1, 0, 0})[0], 0.0);
  VelocityConfig wide = cfg;
  wide.vmax = 1e9;
  EXPECT_DOUBLE_EQ(velocity_command(wide, {10, 0, 0})[0], 2500.0);
  EXPECT_EQ(velocity_command(cfg, {10, 0, 0})[0], cfg.vmax);
  EXPECT_EQ(velocity_command(cfg, {-10, 0, 0})[0], -cfg.vmax);
}

TEST(Velocity, RandomizedLawProperties) {
  VelocityConfig cfg;
  VelocityConfig wide = cfg;
  wide.vmax = 1e12;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> f(-80, 80);
  for (int i = 0; i < 10000; ++i) {
    Vec3 F{f(rng), f(rng), f(rng)};
    Vec3 v = velocity_command(wide, F);
    Vec3 neg = velocity_command(wide, {-F[0], -F[1], -F[2]});
    Vec3 dbl = velocity_command(wide, {2 * F[0], 2 * F[1], 2 * F[2]});
    Vec3 clamped = velocity_command(cfg, F);
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(neg[k], -v[k]);
      if (std::abs(F[k]) < cfg.deadband) {
        EXPECT_EQ(v[k], 0.0);
        continue;
      }
      EXPECT_NEAR(v[k], cfg.k0[k] * F[k] * std::abs(F[k]) / cfg.fmax[k], 1e-9 * std::abs(v[k]));
      EXPECT_NEAR(dbl[k], 4 * v[k], 1e-9 * std::abs(v[k]));
      EXPECT_LE(std::abs(clamped[k]), cfg.vmax);
      EXPECT_EQ(std::signbit(v[k]), std::signbit(F[k]));
      Vec3 bigger = F;
      bigger[k] *= 1.01;
      EXPECT_GT(std::abs(velocity_command(wide, bigger)[k]), std::abs(v[k]));
    }
  }
}

TEST(Config, JsonRoundTripAndValidation) {
  ControlConfig c;
  c.static_gains.kp = 99;
  c.velocity.k0[2] = 1234;
  c.gentle.setpoint = 0.95;
  auto back = control_config_from_json(control_config_to_json(c));
  EXPECT_EQ(back.static_gains.kp, 99);
  EXPECT_EQ(back.velocity.k0[2], 1234);
  EXPECT_EQ(back.gentle.setpoint, 0.95);
  EXPECT_EQ(back.dynamic_x.kp, 300);
  EXPECT_EQ(back.dynamic_x.ki, 1);
  EXPECT_EQ(back.dynamic_y.kp, 110);
  auto defaults = control_config_from_json("{}");
  EXPECT_EQ(defaults.velocity.fmax, (Vec3{20, 20, 60}));
  EXPECT_EQ(defaults.velocity.deadband, 0.2);
  EXPECT_THROW(control_config_from_json("{\"gentle\":{\"setpoint\":0.99}}"), InvalidArgument);
  EXPECT_THROW(control_config_from_json("{not json"), ParseError);
}
