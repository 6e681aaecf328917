#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tacgrasp/signal.hpp"

namespace tacgrasp {

struct Vec2 {
  double x = 0, y = 0;
};

constexpr int kNumSensors = 5;  // pinky, ring, middle, index, thumb
constexpr int kImageWidth = 240;
constexpr int kImageHeight = 135;

struct SensorGeometry {
  int n_pins = 217;
  double dome_radius = 10.5;  // mm
  double pin_pitch = 1.15;    // mm, hexagonal packing
  std::vector<Vec2> pin_layout;  // projected rest positions, mm
  double skin_stiffness = 0;        // N/mm^3, normal force per unit depth-area
  double pin_stiffness_shear = 2.0; // N/mm of retained shear
  double cell_area = 0;             // mm^2 of skin per pin
  double pin_length = 3.0;          // mm, lever for marker splay
  double skin_coupling = 0.15;      // mm, smoothing of depth at the contact edge
  double splay_scale = 0.1;         // mm of deflection for half pin rotation
  double shear_spread = 2.0;        // mm beyond the contact radius dragged by shear
  double shear_gain = 1.5;          // marker travel per mm of skin shear
  double friction = 0.8;            // skin friction coefficient
  double marker_radius = 0.35;      // mm
  double px_per_mm = 6.0;
};

// Hexagonal layout + stiffness calibrated so a 4 mm flat press gives 12 N.
SensorGeometry default_geometry();
std::vector<Vec2> hex_layout(int rings, double pitch);

struct SensorVariation {
  std::uint64_t seed = 0;
  double layout_jitter = 0.0;   // mm std
  double stiffness_scale = 1.0;
  double optical_gain = 1.0;
  double marker_noise = 0.0;    // mm std
  double camera_rotation = 0.0; // deg, in-plane rotation of the marker image
  // Mounting error between the robot's commanded pose and the actual contact:
  // actual = commanded + offset. Applied by data collection, not by simulate().
  double mount_z = 0.0;      // mm
  double mount_alpha = 0.0;  // deg
  double mount_beta = 0.0;   // deg
};

// Per-finger manufacturing/assembly variation used throughout the tool.
SensorVariation default_variation(int sensor_id, std::uint64_t base_seed = 0);

struct ContactState {
  double z = 0;      // mm
  double alpha = 0;  // deg
  double beta = 0;   // deg
  double shear_x = 0;  // mm
  double shear_y = 0;  // mm
};

struct ContactForce {
  double fx = 0, fy = 0, fz = 0;
};

struct MarkerFrame {
  double timestamp = 0;
  int sensor_id = 0;
  std::vector<Vec2> displacements;  // mm, one per pin
};

struct ContactResult {
  MarkerFrame frame;
  ContactForce force;
  bool slipped = false;
};

// A geometry with the variation's layout jitter baked in, ready to simulate.
class Sensor {
 public:
  Sensor(const SensorGeometry& geom, const SensorVariation& var, int sensor_id = 0);

  // noise_key selects the marker noise draw; same key -> same output.
  ContactResult simulate(const ContactState& c, std::uint64_t noise_key = 0) const;
  ContactForce force(const ContactState& c, bool* slipped = nullptr) const;
  // Smallest flat-press depth giving normal force fz (bisection).
  double depth_for_force(double fz, double alpha = 0, double beta = 0) const;
  double shear_stiffness() const { return geom_.pin_stiffness_shear * var_.stiffness_scale; }

  const SensorGeometry& geometry() const { return geom_; }
  const SensorVariation& variation() const { return var_; }
  int sensor_id() const { return id_; }
  const GrayImage& reference_image() const { return reference_; }

 private:
  double normal_force(const ContactState& c) const;

  SensorGeometry geom_;
  SensorVariation var_;
  int id_;
  GrayImage reference_;
};

ContactResult simulate_contact(const SensorGeometry& geom, const SensorVariation& var, const ContactState& c);

GrayImage rasterize(const MarkerFrame& frame, const SensorGeometry& geom);
std::vector<double> features(const MarkerFrame& frame);
MarkerFrame frame_from_features(const std::vector<double>& f, int sensor_id = 0, double t = 0);

}  // namespace tacgrasp
