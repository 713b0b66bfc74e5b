#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "advdet/grid.hpp"

namespace advdet {

namespace detail {

// exp(sign * 2*pi*i*k/n) for k in [0, n)
inline std::vector<complex_t> twiddles(std::size_t n, double sign) {
  std::vector<complex_t> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    w[k] = {std::cos(a), std::sin(a)};
  }
  return w;
}

// Direct O(n^2) DFT along one strided line. The exponent index is reduced
// modulo n so every factor comes from the exact twiddle table.
inline void dft_line(const complex_t* in, complex_t* out, std::size_t n, std::size_t stride,
                     const std::vector<complex_t>& w) {
  for (std::size_t k = 0; k < n; ++k) {
    complex_t acc{0.0, 0.0};
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += in[j * stride] * w[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k * stride] = acc;
  }
}

// Row pass in place over `v`, then column pass into the returned buffer.
inline std::vector<complex_t> transform2(std::vector<complex_t>& v, std::size_t rows, std::size_t cols,
                                         double sign) {
  const auto wr = twiddles(cols, sign);
  std::vector<complex_t> line(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    dft_line(&v[r * cols], line.data(), cols, 1, wr);
    std::copy(line.begin(), line.end(), v.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  std::vector<complex_t> out(rows * cols);
  const auto wc = twiddles(rows, sign);
  for (std::size_t c = 0; c < cols; ++c) dft_line(&v[c], &out[c], rows, cols, wc);
  return out;
}

}  // namespace detail

/// Unnormalized 2-D DFT with the zero-frequency bin moved to (rows/2, cols/2)
/// (integer halves) by rotating quadrants.
inline ComplexGrid2D dft2_centered(const Grid2D& x) {
  require(x.size() > 0, errc::invalid_input, "dft2_centered on empty grid");
  require(x.all_finite(), errc::invalid_input, "dft2_centered input contains non-finite values");
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<complex_t> v(x.values().begin(), x.values().end());
  const auto scratch = detail::transform2(v, rows, cols, -1.0);
  ComplexGrid2D out(rows, cols);
  const std::size_t hr = rows / 2, hc = cols / 2;
  for (std::size_t u = 0; u < rows; ++u)
    for (std::size_t w = 0; w < cols; ++w)
      out((u + hr) % rows, (w + hc) % cols) = scratch[u * cols + w];
  return out;
}

struct InverseDft {
  Grid2D real;
  // Largest |imag| discarded when taking the real part. Near zero whenever the
  // spectrum is Hermitian, i.e. a real image filtered by a symmetric H.
  double max_imag_residue = 0.0;
};

/// Undo the centering rotation, inverse-transform with 1/(rows*cols) scaling,
/// and keep the real part.
inline InverseDft idft2_with_residue(const ComplexGrid2D& spectrum) {
  require(spectrum.size() > 0, errc::invalid_input, "idft2 on empty spectrum");
  require(spectrum.all_finite(), errc::invalid_input, "idft2 input contains non-finite values");
  const std::size_t rows = spectrum.rows(), cols = spectrum.cols();
  const std::size_t hr = rows / 2, hc = cols / 2;
  std::vector<complex_t> v(rows * cols);
  for (std::size_t u = 0; u < rows; ++u)
    for (std::size_t w = 0; w < cols; ++w) v[u * cols + w] = spectrum((u + hr) % rows, (w + hc) % cols);

  const auto scratch = detail::transform2(v, rows, cols, 1.0);

  const double scale = 1.0 / static_cast<double>(rows * cols);
  InverseDft result{Grid2D(rows, cols), 0.0};
  for (std::size_t i = 0; i < rows * cols; ++i) {
    result.real.values()[i] = scratch[i].real() * scale;
    result.max_imag_residue = std::max(result.max_imag_residue, std::abs(scratch[i].imag() * scale));
  }
  return result;
}

inline Grid2D idft2(const ComplexGrid2D& spectrum) { return idft2_with_residue(spectrum).real; }

}  // namespace advdet
