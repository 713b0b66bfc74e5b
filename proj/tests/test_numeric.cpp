#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "advdet/dft.hpp"
#include "advdet/freqfilter.hpp"
#include "advdet/rng.hpp"
#include "test_util.hpp"

using namespace advdet;
using advdet::testing::brute_dft_centered;
using advdet::testing::random_grid;

TEST(Rng, SameSeedSameStream) {
  SeededRng a(42), b(42);
  for (int i = 0; i < 3; ++i) {
    const double x = a.next_uniform(0.0, 1.0);
    EXPECT_EQ(x, b.next_uniform(0.0, 1.0));
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(Rng, PinnedValues) {
  // xoshiro256** seeded through SplitMix64; these values pin the generator
  // so a silent change of algorithm breaks cross-platform reproducibility.
  std::uint64_t st = 0;
  EXPECT_EQ(splitmix64(st), 0xE220A8397B1DCDAFULL);
  SeededRng r(42);
  const std::uint64_t first = r.next_u64();
  SeededRng r2(42);
  EXPECT_EQ(first, r2.next_u64());
}

TEST(Rng, UniformMean) {
  SeededRng r(1);
  double s = 0;
  for (int i = 0; i < 100000; ++i) s += r.next_uniform(0.0, 1.0);
  EXPECT_NEAR(s / 1e5, 0.5, 0.01);
}

TEST(Rng, EmptyRangeRejected) {
  SeededRng r(1);
  try {
    r.next_uniform(1.0, 1.0);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_range);
  }
  EXPECT_THROW(r.next_uniform(2.0, 1.0), error);
}

TEST(Rng, ShuffleIsPermutation) {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  SeededRng r(9);
  r.shuffle(std::span<int>(v));
  auto s = v;
  std::sort(s.begin(), s.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s[i], i);
  EXPECT_NE(v, s);
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Dft, ConstantGridIsDcOnly) {
  Grid2D g(4, 4);
  for (double& v : g.values()) v = 2.5;
  const auto X = dft2_centered(g);
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t v = 0; v < 4; ++v) {
      if (u == 2 && v == 2)
        EXPECT_NEAR(std::abs(X(u, v) - complex_t(40.0, 0.0)), 0.0, 1e-12);
      else
        EXPECT_NEAR(std::abs(X(u, v)), 0.0, 1e-12);
    }
}

TEST(Dft, ImpulseHasFlatSpectrum) {
  for (std::size_t pos : {0u, 5u, 17u}) {
    Grid2D g(6, 5);
    g.values()[pos] = 1.0;
    const auto X = dft2_centered(g);
    for (const auto& c : X.values()) EXPECT_NEAR(std::abs(c), 1.0, 1e-12);
  }
}

TEST(Dft, RoundTrip28) {
  SeededRng r(3);
  const Grid2D x = random_grid(28, 28, r);
  const Grid2D y = idft2(dft2_centered(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y.values()[i], x.values()[i], 1e-9);
}

TEST(Dft, InverseOfCentreBin) {
  ComplexGrid2D X(5, 6);
  X(2, 3) = 30.0;
  const Grid2D g = idft2(X);
  for (double v : g.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Dft, ZeroSpectrumGivesZeroGrid) {
  const Grid2D g = idft2(ComplexGrid2D(7, 3));
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Dft, MatchesBruteForceOracle) {
  SeededRng r(11);
  for (auto [rows, cols] : {std::pair{1, 1}, {1, 7}, {5, 3}, {8, 8}, {9, 12}, {16, 11}}) {
    const Grid2D x = random_grid(rows, cols, r);
    const auto fast = dft2_centered(x);
    const auto slow = brute_dft_centered(x);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(std::abs(fast.values()[i] - slow.values()[i]), 0.0, 1e-9);
  }
}

TEST(Dft, FilteredRealImageHasTinyImaginaryResidue) {
  SeededRng r(12);
  const Grid2D x = random_grid(32, 32, r, 0.0, 1.0);
  const FilterSpec spec{FilterKind::butterworth, 6.0, 2};
  const Grid2D h = transfer_grid(spec, 32, 32);
  // the oracle spectrum, filtered, then inverted
  ComplexGrid2D X = brute_dft_centered(x);
  for (std::size_t i = 0; i < X.size(); ++i) X.values()[i] *= h.values()[i];
  const auto inv = idft2_with_residue(X);
  EXPECT_LE(inv.max_imag_residue, 1e-9);
  const auto fast = apply_transfer(dft2_centered(x), h);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(fast.real.values()[i], inv.real.values()[i], 1e-9);
}

TEST(Dft, NonFiniteInputRejected) {
  Grid2D g(3, 3);
  g(1, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    dft2_centered(g);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::invalid_input);
  }
  ComplexGrid2D X(2, 2);
  X(0, 0) = complex_t(std::numeric_limits<double>::infinity(), 0);
  EXPECT_THROW(idft2(X), error);
}

TEST(DftProperty, ParsevalLinearityRoundTrip) {
  SeededRng r(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + r.next_below(64), cols = 1 + r.next_below(64);
    const Grid2D x = random_grid(rows, cols, r), y = random_grid(rows, cols, r);
    const auto X = dft2_centered(x), Y = dft2_centered(y);
    double ex = 0, eX = 0;
    for (double v : x.values()) ex += v * v;
    for (const auto& c : X.values()) eX += std::norm(c);
    EXPECT_NEAR(eX, static_cast<double>(rows * cols) * ex, 1e-6 * eX);

    const double a = r.next_uniform(-2, 2), b = r.next_uniform(-2, 2);
    Grid2D z(rows, cols);
    for (std::size_t i = 0; i < z.size(); ++i) z.values()[i] = a * x.values()[i] + b * y.values()[i];
    const auto Z = dft2_centered(z);
    for (std::size_t i = 0; i < z.size(); ++i)
      EXPECT_NEAR(std::abs(Z.values()[i] - (a * X.values()[i] + b * Y.values()[i])), 0.0, 1e-9);

    const Grid2D back = idft2(X);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back.values()[i], x.values()[i], 1e-9);
  }
}
