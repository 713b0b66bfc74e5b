#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advdet/grid.hpp"

namespace advdet {

struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t size() const { return height * width * channels; }
  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Read-only view over an H x W x C interleaved buffer.
struct RasterView {
  Shape shape;
  std::span<const double> values;
};

namespace detail {

// Shared storage and channel plumbing for the two raster flavours below.
template <class Derived>
class RasterBase {
 public:
  const Shape& shape() const { return shape_; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t size() const { return values_.size(); }

  const std::vector<double>& values() const { return values_; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return values_[(y * shape_.width + x) * shape_.channels + c];
  }

  Grid2D channel(std::size_t c) const {
    Grid2D g(shape_.height, shape_.width);
    for (std::size_t i = 0; i < shape_.height * shape_.width; ++i)
      g.values()[i] = values_[i * shape_.channels + c];
    return g;
  }

  RasterView view() const { return {shape_, values_}; }
  operator RasterView() const { return view(); }

  friend bool operator==(const RasterBase& a, const RasterBase& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 protected:
  RasterBase() = default;
  RasterBase(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    require(shape.height > 0 && shape.width > 0 && shape.channels > 0, errc::invalid_size,
            "raster dimensions must be positive, got " + shape.str());
    require(values_.size() == shape.size(), errc::invalid_size,
            "raster value count " + std::to_string(values_.size()) + " does not match " + shape.str());
  }

  Shape shape_;
  std::vector<double> values_;
};

}  // namespace detail

/// Signed real-valued H x W x C map (filter outputs, differences, detector inputs).
class FeatureMap : public detail::RasterBase<FeatureMap> {
 public:
  FeatureMap() = default;
  FeatureMap(Shape shape, std::vector<double> values) : RasterBase(shape, std::move(values)) {
    for (double v : values_) require(std::isfinite(v), errc::invalid_input, "feature map value is not finite");
  }
  explicit FeatureMap(Shape shape) : RasterBase(shape, std::vector<double>(shape.size(), 0.0)) {}

  static FeatureMap from_channels(const std::vector<Grid2D>& planes) {
    require(!planes.empty(), errc::invalid_input, "no channels");
    Shape s{planes[0].rows(), planes[0].cols(), planes.size()};
    std::vector<double> v(s.size());
    for (std::size_t c = 0; c < planes.size(); ++c) {
      require(planes[c].rows() == s.height && planes[c].cols() == s.width, errc::invalid_input,
              "channel planes differ in size");
      for (std::size_t i = 0; i < s.height * s.width; ++i) v[i * s.channels + c] = planes[c].values()[i];
    }
    return FeatureMap(s, std::move(v));
  }

  std::vector<double>& mutable_values() { return values_; }
  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return values_[(y * shape_.width + x) * shape_.channels + c];
  }
  using RasterBase::at;
};

/// H x W x C image with every pixel in [0, 1].
class ImageTensor : public detail::RasterBase<ImageTensor> {
 public:
  ImageTensor() = default;
  ImageTensor(Shape shape, std::vector<double> pixels) : RasterBase(shape, std::move(pixels)) {
    for (double v : values_)
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, errc::invalid_input, "pixel outside [0,1]");
  }

  static ImageTensor filled(Shape shape, double value) {
    return ImageTensor(shape, std::vector<double>(shape.size(), value));
  }

  /// Clamps into [0,1]; NaN is rejected rather than clamped.
  static ImageTensor clamped(Shape shape, std::vector<double> pixels) {
    for (double& v : pixels) {
      require(!std::isnan(v), errc::numeric, "NaN pixel");
      v = std::clamp(v, 0.0, 1.0);
    }
    return ImageTensor(shape, std::move(pixels));
  }

  static ImageTensor from_channels(const std::vector<Grid2D>& planes) {
    auto m = FeatureMap::from_channels(planes);
    return ImageTensor(m.shape(), m.values());
  }

  FeatureMap as_map() const { return FeatureMap(shape_, values_); }
};

inline FeatureMap difference(RasterView a, RasterView b) {
  require(a.shape == b.shape, errc::invalid_input, "shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  std::vector<double> d(a.values.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.values[i] - b.values[i];
  return FeatureMap(a.shape, std::move(d));
}

inline double mean_abs(RasterView a) {
  double s = 0.0;
  for (double v : a.values) s += std::abs(v);
  return a.values.empty() ? 0.0 : s / static_cast<double>(a.values.size());
}

}  // namespace advdet
