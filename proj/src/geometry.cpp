#include "defa/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace defa {

ReferencePoints grid_reference_points(const MultiScaleLayout& layout) {
  ReferencePoints refs;
  refs.num_queries = layout.total_pixels();
  refs.num_levels = layout.num_levels();
  refs.coords.resize(refs.num_queries * refs.num_levels);
  for (std::size_t q = 0; q < refs.num_queries; ++q) {
    const auto px = layout.locate(q);
    const auto& s = layout.shape(px.level);
    const Point2 centre{(px.x + 0.5) / s.width, (px.y + 0.5) / s.height};
    for (std::size_t l = 0; l < refs.num_levels; ++l) refs.at(q, l) = centre;
  }
  return refs;
}

Point2 reference_in_pixels(Point2 normalized, const LevelShape& shape) {
  return {normalized.x * shape.width - 0.5, normalized.y * shape.height - 0.5};
}

Point2 clamp_offset_levelwise(int level, Point2 reference, Point2 offset, std::span<const BoundedRange> ranges,
                              std::span<const LevelShape> shapes) {
  const auto& shape = shapes[level];
  const auto& range = ranges[level];
  Point2 p{reference.x + offset.x, reference.y + offset.y};
  p.x = std::clamp(p.x, reference.x - range.half_width, reference.x + range.half_width);
  p.y = std::clamp(p.y, reference.y - range.half_height, reference.y + range.half_height);
  p.x = std::clamp(p.x, 0.0, static_cast<double>(shape.width - 1));
  p.y = std::clamp(p.y, 0.0, static_cast<double>(shape.height - 1));
  return p;
}

namespace {
int mod(int a, int m) { return ((a % m) + m) % m; }
}  // namespace

int bank_of(int level, int x0, int y0, int num_levels) {
  if (num_levels < 1 || kSramBanks % num_levels != 0) {
    throw std::invalid_argument(fmt::format("{} levels cannot share {} banks evenly", num_levels, kSramBanks));
  }
  if (level < 0 || level >= num_levels) {
    throw std::invalid_argument(fmt::format("level {} outside [0, {})", level, num_levels));
  }
  const int per_level = kSramBanks / num_levels;
  const int parity = 2 * mod(y0, 2) + mod(x0, 2);
  int local = 0;
  if (per_level >= 4) {
    // Extra bank groups interleave whole Neighbor Windows.
    local = parity + 4 * mod(x0 / 2 + y0 / 2, per_level / 4);
  } else {
    local = parity % per_level;
  }
  return per_level * level + local;
}

int intra_bank_of(int x0, int y0) { return 4 * mod(y0, 4) + mod(x0, 4); }

namespace {

NeighborSet make_neighbors(int level, int x0, int y0, std::span<const LevelShape> shapes) {
  const auto& s = shapes[level];
  NeighborSet n;
  n.level = level;
  const std::array<std::pair<int, int>, 4> xy{{{x0, y0}, {x0 + 1, y0}, {x0, y0 + 1}, {x0 + 1, y0 + 1}}};
  for (std::size_t c = 0; c < 4; ++c) {
    const auto [x, y] = xy[c];
    n.corners[c] = {x, y, x >= 0 && x < s.width && y >= 0 && y < s.height};
  }
  return n;
}

}  // namespace

NeighborSet neighbors_of(int level, Point2 location, std::span<const LevelShape> shapes) {
  const double fx = std::floor(location.x);
  const double fy = std::floor(location.y);
  auto n = make_neighbors(level, static_cast<int>(fx), static_cast<int>(fy), shapes);
  n.t1 = location.x - fx;
  n.t0 = location.y - fy;
  return n;
}

NeighborSet neighbors_of_fixed(int level, int64_t x_fixed, int64_t y_fixed, int frac_bits,
                               std::span<const LevelShape> shapes) {
  const int64_t frac_mask = (int64_t{1} << frac_bits) - 1;
  auto n = make_neighbors(level, static_cast<int>(x_fixed >> frac_bits), static_cast<int>(y_fixed >> frac_bits),
                          shapes);
  n.t1_fixed = x_fixed & frac_mask;
  n.t0_fixed = y_fixed & frac_mask;
  n.t1 = std::ldexp(static_cast<double>(n.t1_fixed), -frac_bits);
  n.t0 = std::ldexp(static_cast<double>(n.t0_fixed), -frac_bits);
  return n;
}

WindowExtent symmetric_extent(const BoundedRange& range) {
  return {range.half_width, range.half_width, range.half_height, range.half_height};
}

WindowExtent sampling_extent(const BoundedRange& range) {
  return {range.half_width, range.half_width + 1, range.half_height, range.half_height + 1};
}

ReuseWindow::ReuseWindow(MultiScaleLayout layout, std::vector<WindowExtent> extents)
    : layout_(std::move(layout)), extents_(std::move(extents)) {
  if (extents_.size() != layout_.num_levels()) {
    throw std::invalid_argument(
        fmt::format("{} window extents for {} levels", extents_.size(), layout_.num_levels()));
  }
}

PixelRect ReuseWindow::rect_for(int level, int cx, int cy) const {
  const auto& s = layout_.shape(level);
  const auto& e = extents_[level];
  return {std::max(cx - e.left, 0), std::min(cx + e.right, s.width - 1), std::max(cy - e.up, 0),
          std::min(cy + e.down, s.height - 1)};
}

ReuseStep ReuseWindow::advance(int level, int cx, int cy) {
  const PixelRect next = rect_for(level, cx, cy);
  const bool slide = level == level_ && cy == cy_;
  ReuseStep step;
  for (int y = next.y_lo; y <= next.y_hi; ++y) {
    for (int x = next.x_lo; x <= next.x_hi; ++x) {
      const std::size_t f = layout_.flat_index(level, y, x);
      if (slide && rect_.contains(x, y)) {
        step.reused.push_back(f);
      } else {
        step.fetched.push_back(f);
      }
    }
  }
  level_ = level;
  cy_ = cy;
  rect_ = next;
  return step;
}

std::vector<std::size_t> ReuseWindow::resident() const {
  std::vector<std::size_t> out;
  if (level_ < 0) return out;
  out.reserve(rect_.area());
  for (int y = rect_.y_lo; y <= rect_.y_hi; ++y) {
    for (int x = rect_.x_lo; x <= rect_.x_hi; ++x) out.push_back(layout_.flat_index(level_, y, x));
  }
  return out;
}

SamplingPlan build_sampling_plan(const Matrix& offsets, const ReferencePoints& refs, const ModelConfig& config,
                                 int frac_bits) {
  const std::size_t nq = config.num_queries();
  const std::size_t ncols = 2 * static_cast<std::size_t>(config.num_heads) * config.num_levels * config.num_points;
  if (offsets.rows != nq || offsets.cols != ncols) {
    throw std::invalid_argument(
        fmt::format("offset matrix is {}x{}, expected {}x{}", offsets.rows, offsets.cols, nq, ncols));
  }
  if (refs.num_queries != nq || refs.num_levels != static_cast<std::size_t>(config.num_levels)) {
    throw std::invalid_argument(fmt::format("reference points cover {}x{}, expected {}x{}", refs.num_queries,
                                            refs.num_levels, nq, config.num_levels));
  }
  if (frac_bits < 0 || frac_bits > 24) throw std::invalid_argument(fmt::format("frac_bits {} unsupported", frac_bits));

  const auto& shapes = config.level_shapes;
  SamplingPlan plan;
  plan.num_queries = nq;
  plan.num_heads = config.num_heads;
  plan.num_levels = config.num_levels;
  plan.num_points = config.num_points;
  plan.frac_bits = frac_bits;
  plan.points.resize(nq * config.num_heads * config.num_levels * config.num_points);

  for (std::size_t q = 0; q < nq; ++q) {
    for (int h = 0; h < config.num_heads; ++h) {
      for (int l = 0; l < config.num_levels; ++l) {
        const auto& shape = shapes[l];
        const Point2 ref = reference_in_pixels(refs.at(q, l), shape);
        for (int p = 0; p < config.num_points; ++p) {
          SamplePoint sp;
          sp.reference = ref;
          Point2 off{offsets(q, offset_column(h, l, p, 0, config.num_levels, config.num_points)),
                     offsets(q, offset_column(h, l, p, 1, config.num_levels, config.num_points))};
          if (!config.offsets_in_pixels) {
            off.x *= shape.width;
            off.y *= shape.height;
          }
          if (!std::isfinite(off.x) || !std::isfinite(off.y)) {
            throw std::invalid_argument(fmt::format("non-finite offset for query {} head {} level {} point {}", q,
                                                    h, l, p));
          }
          sp.offset = off;
          sp.location = config.range_narrowing
                            ? clamp_offset_levelwise(l, ref, off, config.bounded_ranges, shapes)
                            : Point2{ref.x + off.x, ref.y + off.y};
          if (!config.range_narrowing) {
            // Beyond one pixel outside the level every neighbour reads zero anyway.
            sp.location.x = std::clamp(sp.location.x, -2.0, static_cast<double>(shape.width + 1));
            sp.location.y = std::clamp(sp.location.y, -2.0, static_cast<double>(shape.height + 1));
          }
          if (frac_bits > 0) {
            sp.x_fixed = static_cast<int64_t>(std::floor(std::ldexp(sp.location.x, frac_bits)));
            sp.y_fixed = static_cast<int64_t>(std::floor(std::ldexp(sp.location.y, frac_bits)));
            sp.location = {std::ldexp(static_cast<double>(sp.x_fixed), -frac_bits),
                           std::ldexp(static_cast<double>(sp.y_fixed), -frac_bits)};
            sp.neighbors = neighbors_of_fixed(l, sp.x_fixed, sp.y_fixed, frac_bits, shapes);
          } else {
            sp.neighbors = neighbors_of(l, sp.location, shapes);
          }
          plan.points[plan.index(q, h, l, p)] = sp;
        }
      }
    }
  }
  return plan;
}

}  // namespace defa
