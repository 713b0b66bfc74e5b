#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "advdet/dft.hpp"
#include "advdet/image.hpp"

namespace advdet {

enum class FilterKind { ideal, gaussian, butterworth };

inline std::string to_string(FilterKind k) {
  switch (k) {
    case FilterKind::ideal: return "ideal";
    case FilterKind::gaussian: return "gaussian";
    case FilterKind::butterworth: return "butterworth";
  }
  return "?";
}

inline FilterKind parse_filter_kind(const std::string& s) {
  if (s == "ideal") return FilterKind::ideal;
  if (s == "gaussian") return FilterKind::gaussian;
  if (s == "butterworth") return FilterKind::butterworth;
  fail(errc::config, "unknown filter kind '" + s + "'");
}

struct FilterSpec {
  FilterKind kind = FilterKind::butterworth;
  double cutoff_d0 = 7.0;
  int order_n = 2;  // butterworth only

  void validate() const {
    require(cutoff_d0 > 0 && std::isfinite(cutoff_d0), errc::config, "filter cutoff must be positive");
    require(order_n >= 1, errc::config, "butterworth order must be >= 1");
  }

  /// Second-order Butterworth; cutoff 56 at 224 px, scaled proportionally below.
  static FilterSpec default_for(std::size_t min_side) {
    double d0 = 56.0;
    if (min_side < 112) d0 = std::max(1.0, std::round(56.0 * static_cast<double>(min_side) / 224.0));
    return {FilterKind::butterworth, d0, 2};
  }
};

/// Distance of bin (u, v) from the spectrum centre (M/2, N/2), halves taken exactly.
inline double freq_distance(std::size_t u, std::size_t v, std::size_t rows, std::size_t cols) {
  require(u < rows && v < cols, errc::invalid_input, "frequency index out of range");
  const double du = static_cast<double>(u) - static_cast<double>(rows) / 2.0;
  const double dv = static_cast<double>(v) - static_cast<double>(cols) / 2.0;
  return std::sqrt(du * du + dv * dv);
}

/// High-pass gain at distance d. The Butterworth form is singular at d == 0;
/// its limit 0 is used there.
inline double transfer(const FilterSpec& spec, double d) {
  switch (spec.kind) {
    case FilterKind::ideal:
      return d <= spec.cutoff_d0 ? 0.0 : 1.0;
    case FilterKind::gaussian:
      return 1.0 - std::exp(-(d * d) / (2.0 * spec.cutoff_d0 * spec.cutoff_d0));
    case FilterKind::butterworth: {
      if (d <= 0.0) return 0.0;
      const double ratio = std::pow(spec.cutoff_d0 / d, 2.0 * spec.order_n);
      return 1.0 / (1.0 + ratio);
    }
  }
  return 0.0;
}

inline Grid2D transfer_grid(const FilterSpec& spec, std::size_t rows, std::size_t cols) {
  Grid2D h(rows, cols);
  for (std::size_t u = 0; u < rows; ++u)
    for (std::size_t v = 0; v < cols; ++v) h(u, v) = transfer(spec, freq_distance(u, v, rows, cols));
  return h;
}

inline InverseDft apply_transfer(const ComplexGrid2D& spectrum, const Grid2D& h) {
  ComplexGrid2D filtered = spectrum;
  for (std::size_t i = 0; i < filtered.size(); ++i) filtered.values()[i] *= h.values()[i];
  return idft2_with_residue(filtered);
}

inline InverseDft highpass_channel(const Grid2D& channel, const FilterSpec& spec) {
  spec.validate();
  return apply_transfer(dft2_centered(channel), transfer_grid(spec, channel.rows(), channel.cols()));
}

/// Per-channel frequency-domain high-pass; the result is signed.
inline FeatureMap highpass(RasterView img, const FilterSpec& spec) {
  spec.validate();
  const Shape s = img.shape;
  const Grid2D h = transfer_grid(spec, s.height, s.width);
  std::vector<Grid2D> planes;
  planes.reserve(s.channels);
  for (std::size_t c = 0; c < s.channels; ++c) {
    Grid2D g(s.height, s.width);
    for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = img.values[i * s.channels + c];
    planes.push_back(apply_transfer(dft2_centered(g), h).real);
  }
  return FeatureMap::from_channels(planes);
}

/// Min-max rescale of the whole map into [0,1]; a constant map becomes 0.5.
inline ImageTensor normalize_signed(RasterView m) {
  double lo = INFINITY, hi = -INFINITY;
  for (double v : m.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(m.values.size(), 0.5);
  if (hi > lo) {
    const double span = hi - lo;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp((m.values[i] - lo) / span, 0.0, 1.0);
  }
  return ImageTensor(m.shape, std::move(out));
}

inline constexpr double kVarianceFloor = 1e-8;

/// Per-channel zero mean, unit variance; the variance is floored so flat maps
/// stay near zero instead of exploding.
inline FeatureMap standardize(RasterView m) {
  const Shape s = m.shape;
  const std::size_t n = s.height * s.width;
  std::vector<double> out(m.values.begin(), m.values.end());
  for (std::size_t c = 0; c < s.channels; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += out[i * s.channels + c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = out[i * s.channels + c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(std::max(var, kVarianceFloor));
    for (std::size_t i = 0; i < n; ++i) out[i * s.channels + c] = (out[i * s.channels + c] - mean) * inv;
  }
  return FeatureMap(s, std::move(out));
}

}  // namespace advdet
