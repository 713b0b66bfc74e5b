#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "advdet/image.hpp"

namespace advdet {

inline constexpr int kLevels = 256;

/// Map a [0,1] value onto one of 256 gray levels (the same rounding used at
/// 8-bit I/O boundaries).
inline int quantize_level(double v) {
  const long q = std::lround(v * (kLevels - 1));
  return static_cast<int>(std::clamp(q, 0L, static_cast<long>(kLevels - 1)));
}

struct LheConfig {
  std::size_t window = 7;
  int levels = kLevels;

  void validate() const {
    require(window >= 3 && window % 2 == 1, errc::config,
            "LHE window must be odd and >= 3, got " + std::to_string(window));
    require(levels == kLevels, errc::config, "LHE levels is fixed at 256");
  }

  /// 27 for large inputs, otherwise 7 (about the same window-to-side ratio).
  static LheConfig default_for(std::size_t min_side) { return {min_side >= 112 ? 27u : 7u, kLevels}; }
};

/// Global histogram equalization per channel: each pixel becomes the
/// whole-channel CDF at its quantized level.
inline ImageTensor ghe(const ImageTensor& img) {
  const Shape s = img.shape();
  const std::size_t n = s.height * s.width;
  std::vector<double> out(s.size());
  for (std::size_t c = 0; c < s.channels; ++c) {
    std::array<std::size_t, kLevels> hist{};
    for (std::size_t i = 0; i < n; ++i) ++hist[quantize_level(img.values()[i * s.channels + c])];
    std::array<double, kLevels> cdf{};
    std::size_t run = 0;
    for (int l = 0; l < kLevels; ++l) {
      run += hist[l];
      cdf[l] = static_cast<double>(run) / static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i)
      out[i * s.channels + c] = cdf[quantize_level(img.values()[i * s.channels + c])];
  }
  return ImageTensor(s, std::move(out));
}

/// Local histogram equalization: every output pixel is the CDF of its
/// window x window neighbourhood (replicate padding) evaluated at the centre
/// pixel's level. Channels are independent.
inline ImageTensor lhe(const ImageTensor& img, const LheConfig& cfg) {
  cfg.validate();
  const Shape s = img.shape();
  require(cfg.window <= std::min(s.height, s.width), errc::invalid_input,
          "LHE window " + std::to_string(cfg.window) + " exceeds image side " + s.str());
  const long h = static_cast<long>(s.height), w = static_cast<long>(s.width);
  const long half = static_cast<long>(cfg.window / 2);
  const double denom = static_cast<double>(cfg.window * cfg.window);

  std::vector<int> level(s.height * s.width);
  std::vector<double> out(s.size());
  for (std::size_t c = 0; c < s.channels; ++c) {
    for (std::size_t i = 0; i < level.size(); ++i) level[i] = quantize_level(img.values()[i * s.channels + c]);
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        const int centre = level[static_cast<std::size_t>(y * w + x)];
        std::size_t below = 0;
        for (long dy = -half; dy <= half; ++dy) {
          const long yy = std::clamp(y + dy, 0L, h - 1);
          const int* row = &level[static_cast<std::size_t>(yy * w)];
          for (long dx = -half; dx <= half; ++dx) below += row[std::clamp(x + dx, 0L, w - 1)] <= centre;
        }
        out[static_cast<std::size_t>(y * w + x) * s.channels + c] = static_cast<double>(below) / denom;
      }
    }
  }
  return ImageTensor(s, std::move(out));
}

struct SsimConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  std::size_t window = 7;
  double dynamic_range = 1.0;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
  double c3 = 0.03 * 0.03 / 2.0;

  static SsimConfig for_range(double range) {
    SsimConfig cfg;
    cfg.dynamic_range = range;
    cfg.c1 = (0.01 * range) * (0.01 * range);
    cfg.c2 = (0.03 * range) * (0.03 * range);
    cfg.c3 = cfg.c2 / 2.0;
    return cfg;
  }

  void validate() const {
    require(alpha > 0 && beta > 0 && gamma > 0, errc::config, "SSIM exponents must be positive");
    require(c1 > 0 && c2 > 0 && c3 > 0, errc::config, "SSIM stabilizers must be positive");
    require(window >= 1 && window % 2 == 1, errc::config, "SSIM window must be odd");
  }
};

namespace detail {

// Sign-preserving power so a negative structure term stays negative under a
// fractional exponent.
inline double signed_pow(double base, double e) {
  if (e == 1.0) return base;
  return base < 0 ? -std::pow(-base, e) : std::pow(base, e);
}

}  // namespace detail

/// Mean SSIM over every valid window position (uniform window, stride 1,
/// population statistics).
inline double ssim(const Grid2D& x, const Grid2D& y, const SsimConfig& cfg = {}) {
  cfg.validate();
  require(x.same_shape(y), errc::invalid_input, "ssim operands differ in size");
  require(x.rows() >= cfg.window && x.cols() >= cfg.window, errc::invalid_input,
          "image smaller than SSIM window");
  const std::size_t k = cfg.window;
  const double n = static_cast<double>(k * k);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r0 = 0; r0 + k <= x.rows(); ++r0) {
    for (std::size_t c0 = 0; c0 + k <= x.cols(); ++c0) {
      double sx = 0, sy = 0;
      for (std::size_t r = r0; r < r0 + k; ++r)
        for (std::size_t c = c0; c < c0 + k; ++c) {
          sx += x(r, c);
          sy += y(r, c);
        }
      const double mx = sx / n, my = sy / n;
      double vx = 0, vy = 0, cxy = 0;
      for (std::size_t r = r0; r < r0 + k; ++r)
        for (std::size_t c = c0; c < c0 + k; ++c) {
          const double dx = x(r, c) - mx, dy = y(r, c) - my;
          vx += dx * dx;
          vy += dy * dy;
          cxy += dx * dy;
        }
      vx /= n;
      vy /= n;
      cxy /= n;
      const double sdx = std::sqrt(vx), sdy = std::sqrt(vy);
      const double l = (2 * mx * my + cfg.c1) / (mx * mx + my * my + cfg.c1);
      const double con = (2 * sdx * sdy + cfg.c2) / (vx + vy + cfg.c2);
      const double st = (cxy + cfg.c3) / (sdx * sdy + cfg.c3);
      total += detail::signed_pow(l, cfg.alpha) * detail::signed_pow(con, cfg.beta) *
               detail::signed_pow(st, cfg.gamma);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

/// Unweighted mean of the per-channel SSIM.
inline double ssim(RasterView a, RasterView b, const SsimConfig& cfg = {}) {
  require(a.shape == b.shape, errc::invalid_input, "ssim operands differ in shape");
  double sum = 0.0;
  for (std::size_t c = 0; c < a.shape.channels; ++c) {
    Grid2D ga(a.shape.height, a.shape.width), gb(a.shape.height, a.shape.width);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga.values()[i] = a.values[i * a.shape.channels + c];
      gb.values()[i] = b.values[i * a.shape.channels + c];
    }
    sum += ssim(ga, gb, cfg);
  }
  return sum / static_cast<double>(a.shape.channels);
}

}  // namespace advdet
