#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace groundvlp {

/// Axis-aligned box in continuous pixel coordinates; x runs along image
/// columns, y along rows.
struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

inline bool is_well_formed(const Box& b, double image_width, double image_height) {
  return 0.0 <= b.x1 && b.x1 < b.x2 && b.x2 <= image_width && 0.0 <= b.y1 &&
         b.y1 < b.y2 && b.y2 <= image_height;
}

/// Half-open integer index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end > begin ? end - begin : 0; }
};

/// Pixels p whose centre p + 0.5 lies in [lo, hi), clamped to [0, extent).
inline IndexRange covered_pixels(double lo, double hi, std::size_t extent) {
  const auto clamp_index = [extent](double v) -> std::size_t {
    if (!(v > 0.0)) return 0;
    if (v >= static_cast<double>(extent)) return extent;
    return static_cast<std::size_t>(v);
  };
  const std::size_t begin = clamp_index(std::ceil(lo - 0.5));
  const std::size_t end = clamp_index(std::ceil(hi - 0.5));
  return {begin, std::max(begin, end)};
}

}  // namespace groundvlp
