#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "groundvlp/bundle.hpp"
#include "groundvlp/error.hpp"
#include "groundvlp/geometry.hpp"
#include "groundvlp/gradcam.hpp"
#include "groundvlp/matrix.hpp"

namespace groundvlp {

/// Dense non-negative attribution over image pixels, height x width.
struct HeatMap {
  Matrix<double> values;

  std::size_t height() const { return values.rows(); }
  std::size_t width() const { return values.cols(); }
};

/// Summed-area table with a zero top row and left column:
/// values(i+1, j+1) = sum of H over rows <= i and columns <= j.
/// Prefix sums are kept as double-double (`values` + `residual`) so box
/// queries do not inherit cancellation error from the image-wide total;
/// `nonzero` counts non-zero pixels so empty-mass boxes come out exactly 0.
struct IntegralMap {
  Matrix<double> values;
  Matrix<double> residual;
  Matrix<double> nonzero;

  std::size_t height() const { return values.rows() - 1; }
  std::size_t width() const { return values.cols() - 1; }
};

namespace detail {

struct DoubleDouble {
  double hi = 0.0;
  double lo = 0.0;
};

inline DoubleDouble two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

inline DoubleDouble dd_add(DoubleDouble a, DoubleDouble b) {
  DoubleDouble s = two_sum(a.hi, b.hi);
  s.lo += a.lo + b.lo;
  return two_sum(s.hi, s.lo);
}

inline DoubleDouble dd_neg(DoubleDouble a) { return {-a.hi, -a.lo}; }

}  // namespace detail

/// Indices of the `m` largest attribution values, highest first; equal values
/// keep the lower token index first.
inline std::vector<std::size_t> top_tokens(const std::vector<double>& values, std::size_t m) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t keep = std::min(m, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  order.resize(keep);
  return order;
}

/// Superimposes the attribution of the top-m region tokens onto their boxes.
/// A pixel belongs to a box when its centre lies in [x1,x2) x [y1,y2).
inline HeatMap build_region_heatmap(const TokenAttribution& attr, const std::vector<Box>& regions,
                                    std::size_t m, std::size_t height, std::size_t width) {
  if (regions.size() != attr.values.size())
    throw Error(Errc::kBadRegionCount, "visual_layout.regions",
                std::to_string(regions.size()) + " regions for " +
                    std::to_string(attr.values.size()) + " image tokens");
  if (m == 0) throw Error(Errc::kBadRegionCount, "top_m", "m must be at least 1");

  HeatMap out{Matrix<double>(height, width)};
  for (std::size_t k : top_tokens(attr.values, m)) {
    const double v = attr.values[k];
    const Box& b = regions[k];
    const auto cols = covered_pixels(b.x1, b.x2, width);
    const auto rows = covered_pixels(b.y1, b.y2, height);
    for (std::size_t r = rows.begin; r < rows.end; ++r) {
      auto row = out.values.row(r);
      for (std::size_t c = cols.begin; c < cols.end; ++c) row[c] += v;
    }
  }
  return out;
}

/// Catmull-Rom cubic convolution kernel (a = -0.5).
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace detail {

struct CubicTaps {
  std::array<std::size_t, 4> index;
  std::array<double, 4> weight;
};

// Half-pixel centre mapping, source indices clamped at the borders.
inline std::vector<CubicTaps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<CubicTaps> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const auto last = static_cast<std::ptrdiff_t>(in) - 1;
  for (std::size_t i = 0; i < out; ++i) {
    const double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const double t = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto idx = static_cast<std::ptrdiff_t>(base) - 1 + k;
      taps[i].index[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, last));
      taps[i].weight[k] = cubic_kernel(t - static_cast<double>(k - 1));
    }
  }
  return taps;
}

}  // namespace detail

/// Separable bicubic resize of `grid` to out_h x out_w.
inline Matrix<double> bicubic_resize(const Matrix<double>& grid, std::size_t out_h,
                                     std::size_t out_w) {
  if (grid.rows() == 0 || grid.cols() == 0)
    throw Error(Errc::kEmptyInput, "grid", "cannot resize an empty grid");
  const auto col_taps = detail::cubic_taps(grid.cols(), out_w);
  const auto row_taps = detail::cubic_taps(grid.rows(), out_h);

  Matrix<double> horizontal(grid.rows(), out_w);
  for (std::size_t r = 0; r < grid.rows(); ++r) {
    const auto src = grid.row(r);
    auto dst = horizontal.row(r);
    for (std::size_t j = 0; j < out_w; ++j) {
      const auto& tp = col_taps[j];
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tp.weight[k] * src[tp.index[k]];
      dst[j] = acc;
    }
  }

  Matrix<double> out(out_h, out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const auto& tp = row_taps[i];
    auto dst = out.row(i);
    for (int k = 0; k < 4; ++k) {
      const auto src = horizontal.row(tp.index[k]);
      const double w = tp.weight[k];
      for (std::size_t j = 0; j < out_w; ++j) dst[j] += w * src[j];
    }
  }
  return out;
}

/// Upsamples the patch-grid part of the attribution to image size. Cubic
/// overshoot below zero is clamped away.
inline HeatMap build_patch_heatmap(const TokenAttribution& attr, const VisualLayout& layout,
                                   std::size_t height, std::size_t width) {
  if (layout.kind != LayoutKind::kPatchGrid)
    throw Error(Errc::kLayoutMismatch, "visual_layout.kind", "patch heat-map needs a PatchGrid");
  const std::size_t cells = layout.grid_h * layout.grid_w;
  if (cells == 0 || layout.non_grid_prefix + cells != attr.values.size())
    throw Error(Errc::kLayoutMismatch, "visual_layout",
                "non_grid_prefix + grid_h*grid_w must equal the attribution length");

  Matrix<double> grid(layout.grid_h, layout.grid_w);
  std::copy_n(attr.values.begin() + static_cast<std::ptrdiff_t>(layout.non_grid_prefix), cells,
              grid.data().begin());
  HeatMap out{bicubic_resize(grid, height, width)};
  for (double& v : out.values.data()) v = std::max(v, 0.0);
  return out;
}

inline IntegralMap integral_image(const HeatMap& heat) {
  using detail::DoubleDouble;
  const std::size_t h = heat.height();
  const std::size_t w = heat.width();
  IntegralMap out{Matrix<double>(h + 1, w + 1), Matrix<double>(h + 1, w + 1),
                  Matrix<double>(h + 1, w + 1)};
  for (std::size_t r = 0; r < h; ++r) {
    const auto src = heat.values.row(r);
    DoubleDouble row_sum;
    double row_count = 0.0;
    for (std::size_t c = 0; c < w; ++c) {
      row_sum = detail::dd_add(row_sum, {src[c], 0.0});
      row_count += src[c] != 0.0 ? 1.0 : 0.0;
      const auto cell = detail::dd_add({out.values(r, c + 1), out.residual(r, c + 1)}, row_sum);
      out.values(r + 1, c + 1) = cell.hi;
      out.residual(r + 1, c + 1) = cell.lo;
      out.nonzero(r + 1, c + 1) = out.nonzero(r, c + 1) + row_count;
    }
  }
  return out;
}

/// Heat mass of the pixels whose centres fall inside `box`, clamped to the
/// image.
inline double box_sum(const IntegralMap& integral, const Box& box) {
  const auto cols = covered_pixels(box.x1, box.x2, integral.width());
  const auto rows = covered_pixels(box.y1, box.y2, integral.height());
  if (cols.size() == 0 || rows.size() == 0) return 0.0;
  const auto& n = integral.nonzero;
  if (n(rows.end, cols.end) - n(rows.begin, cols.end) - n(rows.end, cols.begin) +
          n(rows.begin, cols.begin) ==
      0.0)
    return 0.0;
  auto at = [&](std::size_t r, std::size_t c) {
    return detail::DoubleDouble{integral.values(r, c), integral.residual(r, c)};
  };
  using detail::dd_add;
  using detail::dd_neg;
  const auto sum = dd_add(dd_add(at(rows.end, cols.end), dd_neg(at(rows.begin, cols.end))),
                          dd_add(dd_neg(at(rows.end, cols.begin)), at(rows.begin, cols.begin)));
  return sum.hi + sum.lo;
}

/// Min-max normalises to 8-bit gray. A zero map stays black; any other
/// constant map becomes mid gray.
inline std::vector<std::uint8_t> to_gray8(const HeatMap& heat) {
  const auto values = heat.values.data();
  std::vector<std::uint8_t> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) {
    std::fill(out.begin(), out.end(), hi == 0.0 ? std::uint8_t{0} : std::uint8_t{128});
    return out;
  }
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround((values[i] - lo) * scale));
  return out;
}

/// Binary PGM (P5, maxval 255).
inline void write_pgm(const std::filesystem::path& path, const HeatMap& heat) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoFailure, path.string(), "cannot open for writing");
  out << "P5\n" << heat.width() << ' ' << heat.height() << "\n255\n";
  const auto gray = to_gray8(heat);
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!out) throw Error(Errc::kIoFailure, path.string(), "write failed");
}

/// Raw little-endian f64 values, row-major.
inline void write_raw_f64(const std::filesystem::path& path, const HeatMap& heat) {
  static_assert(std::endian::native == std::endian::little, "raw dump assumes little-endian host");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoFailure, path.string(), "cannot open for writing");
  const auto values = heat.values.data();
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw Error(Errc::kIoFailure, path.string(), "write failed");
}

}  // namespace groundvlp
