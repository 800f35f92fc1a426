#include "defa/masks.hpp"

#include <numeric>

namespace defa {

FmapMask FmapMask::all_ones(std::vector<LevelShape> shapes, uint32_t block_index) {
  FmapMask m;
  std::size_t total = 0;
  for (const auto& s : shapes) total += s.area();
  m.shapes = std::move(shapes);
  m.block_index = block_index;
  m.keep.assign(total, 1);
  return m;
}

std::size_t FmapMask::kept_count() const { return std::accumulate(keep.begin(), keep.end(), std::size_t{0}); }

std::size_t FmapMask::kept_in_level(std::size_t level) const {
  std::size_t begin = 0;
  for (std::size_t l = 0; l < level; ++l) begin += shapes[l].area();
  const std::size_t end = begin + shapes.at(level).area();
  return std::accumulate(keep.begin() + begin, keep.begin() + end, std::size_t{0});
}

double FmapMask::keep_ratio(std::size_t level) const {
  return static_cast<double>(kept_in_level(level)) / static_cast<double>(shapes.at(level).area());
}

PointMask PointMask::all_ones(std::size_t num_queries, int num_heads, int num_levels, int num_points,
                              uint32_t block_index) {
  PointMask m;
  m.num_queries = num_queries;
  m.num_heads = num_heads;
  m.num_levels = num_levels;
  m.num_points = num_points;
  m.block_index = block_index;
  m.keep.assign(num_queries * num_heads * num_levels * num_points, 1);
  return m;
}

std::size_t PointMask::kept_count() const { return std::accumulate(keep.begin(), keep.end(), std::size_t{0}); }

}  // namespace defa
