#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tacgrasp/control.hpp"
#include "tacgrasp/tactile.hpp"

namespace tacgrasp {

struct PlantConfig {
  double actuator_tau = 0.08;  // s
  double backlash = 0.003;     // actuator units of tendon slack
  std::array<int, kNumSensors> synergy_delay{0, 3, 6, 9, 12};  // steps, pinky leads
  double contact_point = 0.5;      // closure at which fingers touch the object
  double contact_jitter = 0.005;   // std of the per-seed contact point
  double finger_travel = 20.0;     // mm per unit closure
  double object_stiffness = 0.6;   // N/mm per finger
  double object_mass = 0.01;       // kg (empty cup)
  double max_rice = 0.3;           // kg
  double friction = 0.6;
  double slip_damping = 0.02;      // N s/mm
  double drop_slip = 90.0;         // mm, cup height
  bool crushable = true;
  double crush_empty = 2.0;        // N total normal, empty cup
  double crush_full = 9.0;         // N total normal once the rice supports the walls
  double crush_full_fill = 0.1;    // kg of rice at which crush_full is reached
  double spill_angle = 95.0;       // deg of cup tilt
  double outflow = 0.004;          // kg per (deg s) beyond the spill angle
  double max_leader_force = 20.0;  // N
  double gravity = 9.81;
};

enum class DisturbanceKind { step_mass, ramp_mass, external_force };

const char* disturbance_kind_name(DisturbanceKind k);

struct Disturbance {
  double t = 0;           // s, start
  DisturbanceKind kind = DisturbanceKind::step_mass;
  double magnitude = 0;   // kg or N
  double duration = 0;    // s; mass is added linearly over it, a force lasts for it (0 = until replaced)
  Vec3 direction{0, 0, 0};  // grasp frame, external_force only
};

// Throws InvalidArgument on negative magnitude/duration or a bad force direction.
void validate(const Disturbance& d, const PlantConfig& cfg);

std::vector<Disturbance> parse_disturbance_script(const std::string& json_text);
std::string format_disturbance_script(const std::vector<Disturbance>& script);
std::vector<Disturbance> load_disturbance_script(const std::string& path);

// Force measured by the instrumented object, grasp frame.
struct SensorizedObjectReading {
  Vec3 force{0, 0, 0};
};

struct PlantState {
  double t = 0;
  double u_command = 0;
  double u_applied = 0;
  double tendon = 0;  // closure after backlash
  std::array<double, kNumSensors> finger_closure{};
  Vec3 arm_euler{0, 0, 0};
  double rice_mass = 0;
  double cup_mass = 0;  // object + rice
  bool lifted = false;  // until lifted the object rests on the table and carries no load
  bool crush = false;
  bool dropped = false;
  bool slipping = false;
  double slip_accum = 0;  // mm
  double fz_sum = 0;
  Vec3 load{0, 0, 0};  // gravity + external force resolved in the grasp frame
  std::array<ContactForce, kNumSensors> finger_force{};
  std::array<ContactState, kNumSensors> contact{};
  SensorizedObjectReading reading;
};

class Plant {
 public:
  // `fingers` map per-finger forces to sensor contact states; empty = nominal sensors.
  explicit Plant(const PlantConfig& cfg = {}, std::uint64_t seed = 0, std::vector<Sensor> fingers = {});

  // Places the hand at rest under command u (closure approached from below), object on the table.
  void reset(double u, const Vec3& arm_euler = {0, 0, 0});
  // Raises the object off the table: from now on its weight is carried by the grasp.
  void lift() { state_.lifted = true; }
  void schedule(const Disturbance& d);
  // Replaces the operator's force on the object; |f| above the configured max is rejected.
  void apply_leader_force(const Vec3& f);

  const PlantState& step(double u, const Vec3& arm_euler, double dt);

  const PlantState& state() const { return state_; }
  const PlantConfig& config() const { return cfg_; }
  double contact_point() const { return contact_point_; }
  double crush_threshold() const;
  // Hand command whose settled closure gives `fz_total` over all fingers.
  double command_for_force(double fz_total) const;
  const std::vector<Sensor>& fingers() const { return fingers_; }

 private:
  double rice_added(double t) const;
  Vec3 external_force(double t) const;
  void resolve_contacts(double dt);

  PlantConfig cfg_;
  std::vector<Sensor> fingers_;
  double contact_point_;
  std::vector<double> history_;  // tendon closure, newest last
  std::vector<Disturbance> schedule_;
  Vec3 leader_{0, 0, 0};
  double spilled_ = 0;
  PlantState state_;
};

// Forward/back pour of the grasp frame about its own axis.
struct PourTrajectory {
  double gamma_target = 120.0;  // deg
  double rate = 10.0;           // deg/s
  double hold = 1.0;            // s at the target

  double leg_duration() const { return gamma_target / rate; }
  double duration() const { return 2 * leg_duration() + hold; }
  double gamma_at(double t) const;
  // Wrist pose as SXYZ Euler (90, gamma, 0): cup upright at gamma = 0.
  Vec3 euler_at(double t) const;
};

// Samples the pour every dt from 0 to the end of the reverse leg (inclusive).
std::vector<std::pair<double, Vec3>> pour_trajectory(double gamma_target, double rate, double dt, double hold = 1.0);

}  // namespace tacgrasp
