#include "tacgrasp/tactile.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }

struct Plane {
  double nx, ny, nz;
};

// Unit normal of the contact plane: Rx(alpha) Ry(beta) applied to +z.
Plane plane_normal(double alpha_deg, double beta_deg) {
  double a = alpha_deg * kDeg, b = beta_deg * kDeg;
  return {std::sin(b), -std::sin(a) * std::cos(b), std::cos(a) * std::cos(b)};
}

double height_on_dome(const Vec2& p, double R) {
  return std::sqrt(std::max(0.0, R * R - p.x * p.x - p.y * p.y));
}

double depth_sum(const std::vector<Vec2>& layout, double R, const ContactState& c) {
  if (c.z <= 0) return 0;
  Plane n = plane_normal(c.alpha, c.beta);
  double sum = 0;
  for (const auto& p : layout) {
    double g = p.x * n.nx + p.y * n.ny + height_on_dome(p, R) * n.nz - (R - c.z);
    if (g > 0) sum += g;
  }
  return sum;
}

}  // namespace

std::vector<Vec2> hex_layout(int rings, double pitch) {
  std::vector<Vec2> out;
  const double h = std::sqrt(3.0) / 2.0;
  // Axial coordinates (q, r); hex distance max(|q|, |r|, |q + r|).
  for (int r = -rings; r <= rings; ++r) {
    for (int q = -rings; q <= rings; ++q) {
      int s = -q - r;
      if (std::max({std::abs(q), std::abs(r), std::abs(s)}) > rings) continue;
      out.push_back({pitch * (q + 0.5 * r), pitch * h * r});
    }
  }
  return out;
}

SensorGeometry default_geometry() {
  SensorGeometry g;
  g.pin_layout = hex_layout(8, g.pin_pitch);
  g.n_pins = static_cast<int>(g.pin_layout.size());
  g.cell_area = std::sqrt(3.0) / 2.0 * g.pin_pitch * g.pin_pitch;
  ContactState press;
  press.z = 4.0;
  double s = depth_sum(g.pin_layout, g.dome_radius, press);
  g.skin_stiffness = 12.0 / (g.cell_area * s);
  return g;
}

SensorVariation default_variation(int sensor_id, std::uint64_t base_seed) {
  if (sensor_id < 0 || sensor_id >= kNumSensors) throw InvalidArgument("sensor_id must be in 0..4");
  static constexpr double stiffness[kNumSensors] = {0.96, 1.04, 1.00, 1.03, 0.97};
  static constexpr double gain[kNumSensors] = {1.05, 0.95, 1.00, 0.97, 1.03};
  static constexpr double rotation[kNumSensors] = {2.0, -3.0, 1.0, -1.5, 3.0};
  static constexpr double mount_z[kNumSensors] = {0.10, -0.08, 0.0, 0.06, -0.12};
  static constexpr double mount_alpha[kNumSensors] = {1.5, -1.0, 0.5, -2.0, 1.0};
  static constexpr double mount_beta[kNumSensors] = {-1.0, 2.0, -1.5, 0.5, 1.0};
  SensorVariation v;
  v.seed = splitmix(base_seed * 0x100 + std::uint64_t(sensor_id) + 1);
  v.layout_jitter = 0.05;
  v.stiffness_scale = stiffness[sensor_id];
  v.optical_gain = gain[sensor_id];
  v.marker_noise = 0.005;
  v.camera_rotation = rotation[sensor_id];
  v.mount_z = mount_z[sensor_id];
  v.mount_alpha = mount_alpha[sensor_id];
  v.mount_beta = mount_beta[sensor_id];
  return v;
}

Sensor::Sensor(const SensorGeometry& geom, const SensorVariation& var, int sensor_id)
    : geom_(geom), var_(var), id_(sensor_id) {
  if (var.layout_jitter < 0 || var.marker_noise < 0) throw InvalidArgument("variation std must be >= 0");
  if (!(var.stiffness_scale > 0)) throw InvalidArgument("stiffness_scale must be > 0");
  if (geom.n_pins != static_cast<int>(geom.pin_layout.size())) throw InvalidArgument("pin count mismatch");
  if (var.layout_jitter > 0) {
    std::mt19937_64 rng(splitmix(var.seed ^ 0x6a09e667f3bcc908ULL));
    std::normal_distribution<double> n(0.0, var.layout_jitter);
    const double limit = geom.dome_radius - 0.05;
    for (auto& p : geom_.pin_layout) {
      p.x += n(rng);
      p.y += n(rng);
      double r = std::hypot(p.x, p.y);
      if (r > limit) {
        p.x *= limit / r;
        p.y *= limit / r;
      }
    }
  }
  MarkerFrame rest;
  rest.sensor_id = sensor_id;
  rest.displacements.assign(geom_.pin_layout.size(), Vec2{});
  reference_ = rasterize(rest, geom_);
}

double Sensor::normal_force(const ContactState& c) const {
  return geom_.skin_stiffness * var_.stiffness_scale * geom_.cell_area *
         depth_sum(geom_.pin_layout, geom_.dome_radius, c);
}

ContactForce Sensor::force(const ContactState& c, bool* slipped) const {
  if (c.z < 0) throw InvalidArgument("indentation depth must be >= 0");
  ContactForce f;
  bool slip = false;
  f.fz = normal_force(c);
  if (f.fz > 0) {
    double k = shear_stiffness();
    double dx = k * c.shear_x, dy = k * c.shear_y;
    double demand = std::hypot(dx, dy);
    double cap = geom_.friction * f.fz;
    if (demand > cap) {
      slip = true;
      dx *= cap / demand;
      dy *= cap / demand;
    }
    f.fx = dx;
    f.fy = dy;
  }
  if (slipped) *slipped = slip;
  return f;
}

ContactResult Sensor::simulate(const ContactState& c, std::uint64_t noise_key) const {
  ContactResult out;
  out.force = force(c, &out.slipped);
  out.frame.sensor_id = id_;
  const std::size_t n = geom_.pin_layout.size();
  out.frame.displacements.assign(n, Vec2{});

  if (c.z > 0) {
    const double R = geom_.dome_radius;
    const double lam = geom_.skin_coupling;
    Plane pn = plane_normal(c.alpha, c.beta);
    double k = shear_stiffness();
    double sx = out.force.fx / k, sy = out.force.fy / k;  // retained skin shear, mm
    double a2 = std::max(0.0, 2 * R * c.z - c.z * c.z);
    double sigma = std::sqrt(a2) + geom_.shear_spread;
    double cx = R * pn.nx, cy = R * pn.ny;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& p = geom_.pin_layout[i];
      double along = p.x * pn.nx + p.y * pn.ny + height_on_dome(p, R) * pn.nz;
      double g = along - (R - c.z);
      double g0 = along - R;
      // Smoothed pin deflection: pins just outside the patch are dragged by the skin.
      double e = lam * (softplus(g / lam) - softplus(g0 / lam));
      double turn = e / (e + geom_.splay_scale);
      double dx = -e * pn.nx + geom_.pin_length * turn * (p.x / R - pn.nx);
      double dy = -e * pn.ny + geom_.pin_length * turn * (p.y / R - pn.ny);
      double rx = p.x - cx, ry = p.y - cy;
      double w = geom_.shear_gain * std::exp(-(rx * rx + ry * ry) / (2 * sigma * sigma));
      out.frame.displacements[i] = {dx + w * sx, dy + w * sy};
    }
  }

  double rot = var_.camera_rotation * kDeg;
  double cr = std::cos(rot) * var_.optical_gain, sr = std::sin(rot) * var_.optical_gain;
  std::mt19937_64 rng(splitmix(var_.seed ^ splitmix(noise_key)));
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = var_.marker_noise > 0;
  for (auto& d : out.frame.displacements) {
    double x = cr * d.x - sr * d.y;
    double y = sr * d.x + cr * d.y;
    if (noisy) {
      x += var_.marker_noise * noise(rng);
      y += var_.marker_noise * noise(rng);
    }
    d = {x, y};
  }
  return out;
}

double Sensor::depth_for_force(double fz, double alpha, double beta) const {
  if (fz <= 0) return 0;
  ContactState c;
  c.alpha = alpha;
  c.beta = beta;
  double lo = 0, hi = 1.0;
  c.z = hi;
  while (normal_force(c) < fz) {
    hi *= 2;
    if (hi > 64) throw InvalidArgument("depth_for_force: force beyond sensor range");
    c.z = hi;
  }
  for (int it = 0; it < 60; ++it) {
    c.z = 0.5 * (lo + hi);
    if (normal_force(c) < fz)
      lo = c.z;
    else
      hi = c.z;
  }
  return hi;
}

ContactResult simulate_contact(const SensorGeometry& geom, const SensorVariation& var, const ContactState& c) {
  return Sensor(geom, var).simulate(c);
}

GrayImage rasterize(const MarkerFrame& frame, const SensorGeometry& geom) {
  GrayImage img(kImageWidth, kImageHeight, 0.0f);
  const double ppm = geom.px_per_mm;
  const double r = geom.marker_radius * ppm;
  const double cx = kImageWidth / 2.0, cy = kImageHeight / 2.0;
  const std::size_t n = std::min(frame.displacements.size(), geom.pin_layout.size());
  for (std::size_t i = 0; i < n; ++i) {
    double px = cx + (geom.pin_layout[i].x + frame.displacements[i].x) * ppm;
    double py = cy - (geom.pin_layout[i].y + frame.displacements[i].y) * ppm;
    int x0 = std::max(0, int(std::floor(px - r - 1))), x1 = std::min(kImageWidth - 1, int(std::ceil(px + r + 1)));
    int y0 = std::max(0, int(std::floor(py - r - 1))), y1 = std::min(kImageHeight - 1, int(std::ceil(py + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double d = std::hypot(x + 0.5 - px, y + 0.5 - py);
        double cov = std::clamp(r + 0.5 - d, 0.0, 1.0);
        if (cov > 0) img.at(x, y) = std::max(img.at(x, y), float(cov));
      }
    }
  }
  return img;
}

std::vector<double> features(const MarkerFrame& frame) {
  std::vector<double> f;
  f.reserve(frame.displacements.size() * 2);
  for (const auto& d : frame.displacements) {
    f.push_back(d.x);
    f.push_back(d.y);
  }
  return f;
}

MarkerFrame frame_from_features(const std::vector<double>& f, int sensor_id, double t) {
  if (f.size() % 2) throw InvalidArgument("feature vector length must be even");
  MarkerFrame m;
  m.sensor_id = sensor_id;
  m.timestamp = t;
  for (std::size_t i = 0; i + 1 < f.size(); i += 2) m.displacements.push_back({f[i], f[i + 1]});
  return m;
}

}  // namespace tacgrasp
