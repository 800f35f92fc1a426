#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "defa/geometry.hpp"
#include "defa/masks.hpp"
#include "defa/reference.hpp"
#include "defa/tensor.hpp"

namespace defa {

// Sampled-access counts per pixel, flattened level-major.
struct FrequencyMap {
  std::vector<LevelShape> shapes;
  std::vector<uint32_t> counts;

  explicit FrequencyMap(std::vector<LevelShape> level_shapes = {});

  std::span<const uint32_t> level(std::size_t l) const;
  uint64_t total() const;
  // Associative merge for partitioned counting.
  FrequencyMap& merge(const FrequencyMap& other);
  // One BI access of an in-range pixel.
  void record(std::size_t flat) { ++counts[flat]; }
};

FrequencyMap count_sampled_frequency(const SamplingPlan& plan, const PointMask* point_mask,
                                     const std::vector<LevelShape>& shapes);

// k times the mean sampled frequency of one level.
double fwp_threshold(std::span<const uint32_t> level_counts, double k);

// Keeps pixels whose frequency is not lower than their level's threshold.
FmapMask generate_fmap_mask(const FrequencyMap& freq, double k, uint32_t block_index);

// Keeps points with probability >= epsilon; an all-pruned row keeps its argmax.
PointMask generate_point_mask(const AttentionProbs& probs, int num_levels, int num_points, double epsilon,
                              uint32_t block_index = 0);

struct MaskedProjection {
  Matrix values;
  uint64_t macs = 0;
  uint64_t dense_macs = 0;
};

MaskedProjection apply_fmap_mask_to_projection(const Matrix& fmap, const Matrix& w_value, const FmapMask& mask);

// Largest |entry| over the head's columns of V: the PAP error scale.
double max_abs_head_value(const Matrix& values, int head, int head_dim);

// ---- Mask files ------------------------------------------------------------
//
// Little-endian layout:
//   "DFAM" | u16 format_version | u8 kind (1 fmap, 2 point) | u8 reserved
//   u32 block_index | u32 num_levels | num_levels x (u32 height, u32 width)
//   point masks only: u64 num_queries | u32 heads | u32 points
//   u64 bit_count | ceil(bit_count / 8) bytes, LSB-first bit packing

inline constexpr uint16_t kMaskFormatVersion = 1;

enum class MaskKind : uint8_t { Fmap = 1, Point = 2 };

struct MaskFile {
  MaskKind kind = MaskKind::Fmap;
  std::vector<LevelShape> shapes;
  FmapMask fmap;
  PointMask point;
};

std::vector<uint8_t> encode_mask(const FmapMask& mask);
std::vector<uint8_t> encode_mask(const PointMask& mask, const std::vector<LevelShape>& shapes);
MaskFile decode_mask(std::span<const uint8_t> bytes);

void write_mask_file(const std::string& path, std::span<const uint8_t> bytes);
MaskFile read_mask_file(const std::string& path);

// Outcome of one reference block with both pruning schemes applied.
struct PrunedBlock {
  Matrix output;
  PointMask point_mask;
  FrequencyMap frequency;
  FmapMask next_fmap_mask;
};

PrunedBlock run_pruned_block_reference(const AttentionInputs& inputs, const ModelConfig& config,
                                       const FmapMask& fmap_mask, uint32_t block_index);
PrunedBlock run_pruned_block_quantized(const AttentionInputs& inputs, const ModelConfig& config,
                                       const FmapMask& fmap_mask, uint32_t block_index);

}  // namespace defa
