#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tacgrasp/signal.hpp"
#include "tacgrasp/tactile.hpp"

namespace tacgrasp {

struct PoseForce {
  double z = 0, alpha = 0, beta = 0, fx = 0, fy = 0, fz = 0;

  std::array<double, 6> to_array() const { return {z, alpha, beta, fx, fy, fz}; }
  static PoseForce from_array(const std::array<double, 6>& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
};

inline constexpr std::array<const char*, 6> kOutputNames = {"z", "alpha", "beta", "fx", "fy", "fz"};

struct LabeledSample {
  int sensor_id = 0;
  ContactState contact;  // as commanded by the collecting robot
  PoseForce label;
  std::vector<double> features;
};

using Dataset = std::vector<LabeledSample>;

struct Range {
  double lo, hi;
};

struct ContactRanges {
  Range z{0.0, 4.0};
  Range alpha{-20.0, 20.0};
  Range beta{-20.0, 20.0};
  Range shear_x{-2.0, 2.0};
  Range shear_y{-2.0, 2.0};
};

struct CollectionConfig {
  int n_train_val = 3000;
  double split = 0.8;
  int n_test = 600;
  ContactRanges ranges;
  double ft_noise = 0.05;  // N std per axis
  FilterConfig filter;
  int tap_steps = 10;
  int shear_steps = 10;
  int hold_steps = 80;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  Dataset train, val, test;
};

// Largest |filtered label - true force| expected from the default trajectory
// with default noise: residual filter transient plus ~5 sigma of filtered noise.
inline constexpr double kLabelConsistencyBound = 0.05;  // N

void validate(const CollectionConfig& cfg);

// Contact the sensor actually experiences for a commanded pose (mount offsets).
ContactState physical_contact(const Sensor& sensor, const ContactState& commanded);

// Runs one tap-and-shear trajectory and returns the filtered force label.
ContactForce tap_and_shear_label(const Sensor& sensor, const ContactState& target, const CollectionConfig& cfg,
                                 std::uint64_t noise_seed);

DatasetSplit collect(const Sensor& sensor, const CollectionConfig& cfg);

std::string dataset_header(std::size_t n_features);
void save_dataset(const std::string& path, const Dataset& ds, std::size_t n_features = 434);
Dataset load_dataset(const std::string& path);
// Same CSV text, for streams already in memory (used by tests).
Dataset parse_dataset(const std::string& text);
std::string format_dataset(const Dataset& ds, std::size_t n_features = 434);

// Sidecar `<path>.meta.json` recording filter and noise settings.
void save_dataset_meta(const std::string& path, const CollectionConfig& cfg, int sensor_id);

}  // namespace tacgrasp
