#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "defa/tensor.hpp"

namespace defa {

inline constexpr int kSramBanks = 16;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

// Normalized (x, y) in [0, 1] per (query, level): the centre of each query's
// own pixel, projected onto every level.
struct ReferencePoints {
  std::size_t num_queries = 0;
  std::size_t num_levels = 0;
  std::vector<Point2> coords;

  const Point2& at(std::size_t query, std::size_t level) const { return coords[query * num_levels + level]; }
  Point2& at(std::size_t query, std::size_t level) { return coords[query * num_levels + level]; }
};

ReferencePoints grid_reference_points(const MultiScaleLayout& layout);

// Pixel-centre convention: pixel (x, y) sits at integer coordinates.
Point2 reference_in_pixels(Point2 normalized, const LevelShape& shape);

Point2 clamp_offset_levelwise(int level, Point2 reference, Point2 offset, std::span<const BoundedRange> ranges,
                              std::span<const LevelShape> shapes);

// Inter-level mapping: 16 / num_levels banks per level, the 2x2 parity of
// a Neighbor Window selecting the bank inside the level's group.
int bank_of(int level, int x0, int y0, int num_levels = 4);
// Intra-level mapping: level ignored, 4x4 parity over all 16 banks.
int intra_bank_of(int x0, int y0);

struct Neighbor {
  int x = 0;
  int y = 0;
  bool in_range = false;
};

// Corner order: N0 (x0,y0), N1 (x1,y0), N2 (x0,y1), N3 (x1,y1).
struct NeighborSet {
  int level = 0;
  std::array<Neighbor, 4> corners{};
  double t0 = 0.0;  // y - y0
  double t1 = 0.0;  // x - x0
  int64_t t0_fixed = 0;
  int64_t t1_fixed = 0;
};

NeighborSet neighbors_of(int level, Point2 location, std::span<const LevelShape> shapes);
NeighborSet neighbors_of_fixed(int level, int64_t x_fixed, int64_t y_fixed, int frac_bits,
                               std::span<const LevelShape> shapes);

struct PixelRect {
  int x_lo = 0;
  int x_hi = -1;
  int y_lo = 0;
  int y_hi = -1;

  bool empty() const { return x_lo > x_hi || y_lo > y_hi; }
  std::size_t area() const {
    return empty() ? 0 : static_cast<std::size_t>(x_hi - x_lo + 1) * static_cast<std::size_t>(y_hi - y_lo + 1);
  }
  bool contains(int x, int y) const { return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi; }
  bool operator==(const PixelRect&) const = default;
};

// Pixels resident around a centre pixel: [cx - left, cx + right] x [cy - up, cy + down].
struct WindowExtent {
  int left = 0;
  int right = 0;
  int up = 0;
  int down = 0;
};

WindowExtent symmetric_extent(const BoundedRange& range);
// Range plus the right/bottom BI fringe, so every neighbour of a clamped sample is covered.
WindowExtent sampling_extent(const BoundedRange& range);

struct ReuseStep {
  std::vector<std::size_t> reused;
  std::vector<std::size_t> fetched;
};

// Sliding resident set for one level stream. Horizontal slides within a row
// fetch only the new columns; a row or level jump refills the whole window.
class ReuseWindow {
 public:
  ReuseWindow(MultiScaleLayout layout, std::vector<WindowExtent> extents);

  ReuseStep advance(int level, int cx, int cy);
  PixelRect rect_for(int level, int cx, int cy) const;

  const PixelRect& rect() const { return rect_; }
  int level() const { return level_; }
  std::vector<std::size_t> resident() const;
  std::size_t resident_count() const { return rect_.area(); }

 private:
  MultiScaleLayout layout_;
  std::vector<WindowExtent> extents_;
  int level_ = -1;
  int cy_ = 0;
  PixelRect rect_;
};

struct SamplePoint {
  Point2 reference;  // pixels
  Point2 offset;     // pixels
  Point2 location;   // after range narrowing (and fixed-point snapping when enabled)
  int64_t x_fixed = 0;
  int64_t y_fixed = 0;
  NeighborSet neighbors;
};

struct SamplingPlan {
  std::size_t num_queries = 0;
  int num_heads = 0;
  int num_levels = 0;
  int num_points = 0;
  int frac_bits = 0;  // 0: float coordinates
  std::vector<SamplePoint> points;

  std::size_t index(std::size_t q, int h, int l, int p) const {
    return ((q * num_heads + h) * num_levels + l) * num_points + p;
  }
  const SamplePoint& at(std::size_t q, int h, int l, int p) const { return points[index(q, h, l, p)]; }
  std::size_t size() const { return points.size(); }
};

// Offset column for (head, level, point, axis) of the Q * W_S product.
inline std::size_t offset_column(int head, int level, int point, int axis, int num_levels, int num_points) {
  return ((static_cast<std::size_t>(head) * num_levels + level) * num_points + point) * 2 + axis;
}

SamplingPlan build_sampling_plan(const Matrix& offsets, const ReferencePoints& refs, const ModelConfig& config,
                                 int frac_bits = 0);

}  // namespace defa
