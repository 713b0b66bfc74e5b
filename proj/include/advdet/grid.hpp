#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "advdet/error.hpp"

namespace advdet {

using complex_t = std::complex<double>;

/// Dense row-major 2-D array. `T` is double (Grid2D) or complex (ComplexGrid2D).
template <class T>
class BasicGrid {
 public:
  BasicGrid() = default;

  BasicGrid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {
    require(rows > 0 && cols > 0, errc::invalid_size, "grid dimensions must be positive");
  }

  BasicGrid(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    require(rows > 0 && cols > 0, errc::invalid_size, "grid dimensions must be positive");
    require(values_.size() == rows * cols, errc::invalid_size,
            "grid value count " + std::to_string(values_.size()) + " != " +
                std::to_string(rows) + "x" + std::to_string(cols));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  bool same_shape(const BasicGrid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const {
    for (const T& v : values_) {
      if constexpr (std::is_same_v<T, complex_t>) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
      } else {
        if (!std::isfinite(v)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const BasicGrid&, const BasicGrid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> values_;
};

using Grid2D = BasicGrid<double>;
using ComplexGrid2D = BasicGrid<complex_t>;

}  // namespace advdet
