#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace tacgrasp {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, [0,1]

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct SsimConfig {
  int kernel = 7;
  double c1 = 1e-4;  // (0.01 * L)^2, L = 1
  double c2 = 9e-4;  // (0.03 * L)^2
};

// Mean SSIM over every valid kernel position (stride 1), clamped to [0,1].
double ssim(const GrayImage& a, const GrayImage& b, const SsimConfig& cfg = {});

struct FilterConfig {
  int ma_window = 50;
  int butter_order = 2;
  double butter_cutoff = 0.1;  // fraction of Nyquist
};

std::vector<double> moving_average(const std::vector<double>& x, int window);
std::vector<double> butterworth_lowpass(const std::vector<double>& x, const FilterConfig& cfg);
std::vector<double> hybrid_filter(const std::vector<double>& x, const FilterConfig& cfg = {});

// Direct-form II transposed second-order section. a0 is normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
  double z1 = 0, z2 = 0;

  double step(double x) {
    double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

// Cascade of sections realizing a digital Butterworth low-pass (bilinear
// transform with prewarping). Odd orders get one first-order section, stored as
// a biquad with b2 = a2 = 0.
class ButterworthFilter {
 public:
  ButterworthFilter(int order, double cutoff);

  double step(double x);
  void reset();
  const std::vector<Biquad>& sections() const { return sections_; }

 private:
  std::vector<Biquad> sections_;
};

// Lagged difference f[i] - f[i-delta] over a ring buffer.
class RateEstimator {
 public:
  explicit RateEstimator(int delta = 50);

  // Returns nullopt until delta+1 samples have been pushed.
  std::optional<double> push(double t, double f);
  void reset();
  int delta() const { return delta_; }
  std::size_t size() const { return count_ < buf_.size() ? count_ : buf_.size(); }

 private:
  int delta_;
  std::vector<double> buf_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  double last_t_ = 0;
};

}  // namespace tacgrasp
