#include "tacgrasp/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tacgrasp/error.hpp"

namespace tacgrasp {

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

namespace {

// Summed-area table with a zero first row/column, (w+1) x (h+1).
struct Integral {
  int stride;
  std::vector<double> s;

  template <class F>
  Integral(int w, int h, F value) : stride(w + 1), s(static_cast<std::size_t>(w + 1) * (h + 1), 0.0) {
    for (int y = 0; y < h; ++y) {
      double row = 0;
      for (int x = 0; x < w; ++x) {
        row += value(x, y);
        s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + row;
      }
    }
  }

  double box(int x, int y, int k) const {
    return s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] + s[y * stride + x];
  }
};

}  // namespace

double ssim(const GrayImage& a, const GrayImage& b, const SsimConfig& cfg) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidArgument("ssim: image dimensions differ");
  if (cfg.kernel < 3 || cfg.kernel % 2 == 0)
    throw InvalidArgument("ssim: kernel must be odd and >= 3");
  if (!(cfg.c1 > 0) || !(cfg.c2 > 0))
    throw InvalidArgument("ssim: c1 and c2 must be positive");
  const int k = cfg.kernel;
  if (a.width < k || a.height < k)
    throw InvalidArgument("ssim: image smaller than kernel");

  const int w = a.width, h = a.height;
  Integral sa(w, h, [&](int x, int y) { return double(a.at(x, y)); });
  Integral sb(w, h, [&](int x, int y) { return double(b.at(x, y)); });
  Integral saa(w, h, [&](int x, int y) { double v = a.at(x, y); return v * v; });
  Integral sbb(w, h, [&](int x, int y) { double v = b.at(x, y); return v * v; });
  Integral sab(w, h, [&](int x, int y) { return double(a.at(x, y)) * double(b.at(x, y)); });

  const double n = double(k) * k;
  double total = 0;
  long count = 0;
  for (int y = 0; y + k <= h; ++y) {
    for (int x = 0; x + k <= w; ++x) {
      double mx = sa.box(x, y, k) / n;
      double my = sb.box(x, y, k) / n;
      double vx = saa.box(x, y, k) / n - mx * mx;
      double vy = sbb.box(x, y, k) / n - my * my;
      double cxy = sab.box(x, y, k) / n - mx * my;
      double num = (2 * mx * my + cfg.c1) * (2 * cxy + cfg.c2);
      double den = (mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2);
      total += num / den;
      ++count;
    }
  }
  return std::clamp(total / double(count), 0.0, 1.0);
}

std::vector<double> moving_average(const std::vector<double>& x, int window) {
  if (window < 1) throw InvalidArgument("moving_average: window must be >= 1");
  std::vector<double> out(x.size());
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum += x[i];
    if (i >= std::size_t(window)) sum -= x[i - window];
    std::size_t n = std::min<std::size_t>(i + 1, window);
    out[i] = sum / double(n);
  }
  return out;
}

ButterworthFilter::ButterworthFilter(int order, double cutoff) {
  if (order < 1) throw InvalidArgument("butterworth: order must be >= 1");
  if (!(cutoff > 0.0 && cutoff < 1.0)) throw InvalidArgument("butterworth: cutoff must lie in (0,1)");

  // Prewarped analog cutoff for the bilinear map s = (1 - z^-1) / (1 + z^-1).
  const double wa = std::tan(std::numbers::pi * cutoff / 2.0);
  const double wa2 = wa * wa;
  for (int k = 0; k < order / 2; ++k) {
    // Conjugate pole pair of the unit prototype: s^2 + q s + 1.
    double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order);
    double q = 2.0 * std::sin(theta);
    double a0 = 1.0 + q * wa + wa2;
    Biquad bq;
    bq.b0 = wa2 / a0;
    bq.b1 = 2.0 * wa2 / a0;
    bq.b2 = wa2 / a0;
    bq.a1 = (2.0 * wa2 - 2.0) / a0;
    bq.a2 = (1.0 - q * wa + wa2) / a0;
    sections_.push_back(bq);
  }
  if (order % 2 == 1) {
    double a0 = 1.0 + wa;
    Biquad bq;
    bq.b0 = wa / a0;
    bq.b1 = wa / a0;
    bq.b2 = 0;
    bq.a1 = (wa - 1.0) / a0;
    bq.a2 = 0;
    sections_.push_back(bq);
  }
}

double ButterworthFilter::step(double x) {
  for (auto& s : sections_) x = s.step(x);
  return x;
}

void ButterworthFilter::reset() {
  for (auto& s : sections_) s.z1 = s.z2 = 0;
}

std::vector<double> butterworth_lowpass(const std::vector<double>& x, const FilterConfig& cfg) {
  ButterworthFilter f(cfg.butter_order, cfg.butter_cutoff);
  std::vector<double> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(f.step(v));
  return out;
}

std::vector<double> hybrid_filter(const std::vector<double>& x, const FilterConfig& cfg) {
  return butterworth_lowpass(moving_average(x, cfg.ma_window), cfg);
}

RateEstimator::RateEstimator(int delta) : delta_(delta) {
  if (delta < 1) throw InvalidArgument("RateEstimator: delta must be >= 1");
  buf_.assign(std::size_t(delta) + 1, 0.0);
}

std::optional<double> RateEstimator::push(double t, double f) {
  if (count_ > 0 && !(t > last_t_))
    throw InvalidArgument("RateEstimator: timestamps must be strictly increasing");
  last_t_ = t;
  buf_[head_] = f;
  std::size_t newest = head_;
  head_ = (head_ + 1) % buf_.size();
  ++count_;
  if (count_ < buf_.size()) return std::nullopt;
  // With capacity delta+1 the slot after the newest holds f[i - delta].
  return buf_[newest] - buf_[head_];
}

void RateEstimator::reset() {
  head_ = 0;
  count_ = 0;
  last_t_ = 0;
  std::fill(buf_.begin(), buf_.end(), 0.0);
}

}  // namespace tacgrasp
