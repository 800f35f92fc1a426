#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defa/geometry.hpp"
#include "defa/masks.hpp"
#include "defa/pruning.hpp"
#include "defa/reference.hpp"
#include "defa/tensor.hpp"

namespace defa {

enum class PEMode { MM, BA };
enum class Parallelism { Intra, Inter };

std::string to_string(Parallelism p);

struct PEArrayConfig {
  int mm_vector = 16;  // Q elements consumed per cycle
  int mm_tile = 16;    // output columns per cycle (16 x 16 weight tile, output stationary)
  int ba_lanes = 4;    // sampling points per BA cycle
  int bi_multipliers = 3;
  int bi_adders = 7;
  double softmax_elems_per_cycle = 1.0;
};

struct MemoryConfig {
  double clock_mhz = 400.0;
  double dram_bandwidth_gbps = 256.0;  // GB/s
  double dram_pj_per_bit = 1.2;
  double sram_read_pj_per_bit = 0.08;
  double sram_write_pj_per_bit = 0.10;

  double dram_bytes_per_cycle() const { return dram_bandwidth_gbps * 1e9 / (clock_mhz * 1e6); }
};

struct HardwareConfig {
  PEArrayConfig pe;
  MemoryConfig memory;
};

struct SimFlags {
  Parallelism parallelism = Parallelism::Inter;
  bool fused = true;
  bool reuse = true;
  bool pruning = true;
};

struct MmFragment {
  uint64_t cycles = 0;
  uint64_t kept_rows = 0;
  uint64_t macs = 0;
  uint64_t weight_bits = 0;
  uint64_t activation_bits = 0;
  uint64_t dram_read_bits() const { return weight_bits + activation_bits; }
};

// cycles = kept_rows * ceil(inner / 16) * ceil(cols / 16); masked rows are skipped.
MmFragment simulate_mm(std::size_t rows, std::size_t inner, std::size_t cols, const std::vector<uint8_t>* row_mask,
                       int bits, const PEArrayConfig& pe = {});

struct BankCensus {
  std::array<uint32_t, kSramBanks> distinct{};  // distinct addresses requested per bank
  uint32_t max_census() const;
  uint64_t accesses() const;
};

// Requests of the in-range, resident neighbours of a batch. `pixel_kept`
// (nullable) removes pruned pixels, which are served as zeros.
BankCensus bank_census(std::span<const NeighborSet> batch, const MultiScaleLayout& layout, Parallelism mode,
                       const FmapMask* pixel_kept);

struct ConflictResult {
  uint64_t stall_cycles = 0;
  uint64_t detection_cycles = 0;
  BankCensus census;
  uint64_t extra_cycles() const { return stall_cycles + detection_cycles; }
};

// Up to 4 points from one level under the 4x4 intra-level bank mapping.
ConflictResult detect_conflicts_intra(std::span<const NeighborSet> batch, const MultiScaleLayout& layout,
                                      const FmapMask* pixel_kept = nullptr);

struct AccessPlan {
  uint64_t cycles = 1;
  BankCensus census;
};

// At most one point per level (4 levels); conflict-free by construction, checked at runtime.
AccessPlan schedule_inter_level(std::span<const NeighborSet> batch, const MultiScaleLayout& layout,
                                const FmapMask* pixel_kept = nullptr);

struct CycleReport {
  uint64_t probs_cycles = 0;       // logits MM + softmax + point mask
  uint64_t offset_mm_cycles = 0;   // delta-P MM
  uint64_t value_mm_cycles = 0;    // V MM
  uint64_t msgs_cycles = 0;        // fused MSGS + AG (or BI only when unfused)
  uint64_t aggregation_cycles = 0; // separate AG pass, unfused only
  uint64_t total_cycles = 0;

  uint64_t msgs_compute_cycles = 0;  // batch issue + stalls, before any DRAM bound
  uint64_t msgs_batches = 0;
  uint64_t conflict_stall_cycles = 0;
  uint64_t detection_cycles = 0;
  std::array<uint64_t, kSramBanks> bank_accesses{};

  uint64_t phase_sum() const {
    return probs_cycles + offset_mm_cycles + value_mm_cycles + msgs_cycles + aggregation_cycles;
  }
  CycleReport& operator+=(const CycleReport& o);
};

struct TrafficCounters {
  uint64_t dram_read_bits = 0;
  uint64_t dram_write_bits = 0;
  uint64_t fmap_fill_dram_bits = 0;       // included in dram_read_bits
  uint64_t sampling_value_dram_bits = 0;  // included in dram read + write, unfused only

  uint64_t sram_fill_write_bits = 0;
  uint64_t sram_bi_read_bits = 0;
  uint64_t sram_mask_read_bits = 0;
  uint64_t sram_intermediate_write_bits = 0;
  uint64_t sram_intermediate_read_bits = 0;

  uint64_t dram_bits() const { return dram_read_bits + dram_write_bits; }
  uint64_t sram_read_bits() const { return sram_bi_read_bits + sram_mask_read_bits + sram_intermediate_read_bits; }
  uint64_t sram_write_bits() const { return sram_fill_write_bits + sram_intermediate_write_bits; }
  TrafficCounters& operator+=(const TrafficCounters& o);
};

struct EnergyCoefficients {
  double dram_pj_per_bit = 1.2;
  double sram_read_pj_per_bit = 0.08;
  double sram_write_pj_per_bit = 0.10;
};

EnergyCoefficients coefficients_from(const MemoryConfig& memory);

struct EnergyReport {
  TrafficCounters traffic;
  double dram_pj = 0.0;
  double sram_read_pj = 0.0;
  double sram_write_pj = 0.0;
  double total_pj = 0.0;
};

EnergyReport energy_account(const TrafficCounters& traffic, const EnergyCoefficients& coefficients);

struct BlockStats {
  uint64_t total_points = 0;
  uint64_t kept_points = 0;
  uint64_t total_pixels = 0;
  uint64_t kept_pixels = 0;
  uint64_t bi_multiplies = 0;
  uint64_t bi_adds = 0;
  uint64_t ag_macs = 0;
  uint64_t mm_macs = 0;
  uint64_t peak_resident_pixels = 0;
  uint64_t storage_bits = 0;          // peak resident pixels x D_in x bits
  uint64_t uniform_storage_bits = 0;  // same with every level using the widest range
  bool fell_back_to_intra = false;
  BlockStats& operator+=(const BlockStats& o);
};

struct BlockMasks {
  FmapMask fmap;                     // produced by the previous block (all ones for block 0)
  std::optional<PointMask> points;   // replayed instead of generated when set
};

struct BlockResult {
  Matrix output;
  std::vector<int64_t> accumulators;
  CycleReport cycles;
  EnergyReport energy;
  PointMask point_mask;
  FrequencyMap frequency;
  FmapMask next_fmap_mask;
  BlockStats stats;
  std::vector<std::string> warnings;
};

BlockResult simulate_block(const AttentionInputs& inputs, const ModelConfig& config, const BlockMasks& masks,
                           const SimFlags& flags, const HardwareConfig& hw, uint32_t block_index = 0);

}  // namespace defa
