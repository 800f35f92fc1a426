#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "defa/tensor.hpp"

namespace defa {

// Per-pixel keep bits over the flattened multi-scale fmap (1 = keep).
struct FmapMask {
  std::vector<LevelShape> shapes;
  uint32_t block_index = 0;
  std::vector<uint8_t> keep;

  static FmapMask all_ones(std::vector<LevelShape> shapes, uint32_t block_index = 0);

  bool kept(std::size_t flat) const { return keep[flat] != 0; }
  std::size_t size() const { return keep.size(); }
  std::size_t kept_count() const;
  std::size_t kept_in_level(std::size_t level) const;
  double keep_ratio(std::size_t level) const;
  bool operator==(const FmapMask&) const = default;
};

// Keep bits over (query, head, level, point), same order as SamplingPlan.
struct PointMask {
  std::size_t num_queries = 0;
  int num_heads = 0;
  int num_levels = 0;
  int num_points = 0;
  uint32_t block_index = 0;
  std::vector<uint8_t> keep;

  static PointMask all_ones(std::size_t num_queries, int num_heads, int num_levels, int num_points,
                            uint32_t block_index = 0);

  std::size_t index(std::size_t q, int h, int l, int p) const {
    return ((q * num_heads + h) * num_levels + l) * num_points + p;
  }
  bool kept(std::size_t q, int h, int l, int p) const { return keep[index(q, h, l, p)] != 0; }
  std::size_t size() const { return keep.size(); }
  std::size_t kept_count() const;
  bool operator==(const PointMask&) const = default;
};

}  // namespace defa
