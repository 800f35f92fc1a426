#include "defa/accel_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/core.h>

namespace defa {

std::string to_string(Parallelism p) { return p == Parallelism::Inter ? "inter" : "intra"; }

namespace {
uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }
}  // namespace

MmFragment simulate_mm(std::size_t rows, std::size_t inner, std::size_t cols, const std::vector<uint8_t>* row_mask,
                       int bits, const PEArrayConfig& pe) {
  if (rows < 1 || inner < 1 || cols < 1) {
    throw std::invalid_argument(fmt::format("MM dimensions must be positive, got {}x{}x{}", rows, inner, cols));
  }
  if (row_mask && row_mask->size() != rows) throw std::invalid_argument("MM row mask length mismatch");
  MmFragment f;
  f.kept_rows = row_mask ? static_cast<uint64_t>(std::count(row_mask->begin(), row_mask->end(), uint8_t{1})) : rows;
  f.cycles = f.kept_rows * ceil_div(inner, pe.mm_vector) * ceil_div(cols, pe.mm_tile);
  f.macs = f.kept_rows * inner * cols;
  f.weight_bits = static_cast<uint64_t>(inner) * cols * bits;
  f.activation_bits = f.kept_rows * inner * bits;
  return f;
}

uint32_t BankCensus::max_census() const { return *std::max_element(distinct.begin(), distinct.end()); }

uint64_t BankCensus::accesses() const {
  uint64_t n = 0;
  for (auto d : distinct) n += d;
  return n;
}

BankCensus bank_census(std::span<const NeighborSet> batch, const MultiScaleLayout& layout, Parallelism mode,
                       const FmapMask* pixel_kept) {
  std::array<std::set<std::size_t>, kSramBanks> addresses;
  const int levels = static_cast<int>(layout.num_levels());
  for (const auto& n : batch) {
    for (const auto& c : n.corners) {
      if (!c.in_range) continue;
      const std::size_t flat = layout.flat_index(n.level, c.y, c.x);
      if (pixel_kept && !pixel_kept->kept(flat)) continue;
      const int bank = mode == Parallelism::Inter ? bank_of(n.level, c.x, c.y, levels) : intra_bank_of(c.x, c.y);
      addresses[bank].insert(flat);
    }
  }
  BankCensus census;
  for (int b = 0; b < kSramBanks; ++b) census.distinct[b] = static_cast<uint32_t>(addresses[b].size());
  return census;
}

ConflictResult detect_conflicts_intra(std::span<const NeighborSet> batch, const MultiScaleLayout& layout,
                                      const FmapMask* pixel_kept) {
  if (batch.size() > 4) throw std::invalid_argument(fmt::format("intra-level batch of {} points", batch.size()));
  for (const auto& n : batch) {
    if (n.level != batch.front().level) throw std::invalid_argument("intra-level batch spans several levels");
  }
  ConflictResult r;
  r.census = bank_census(batch, layout, Parallelism::Intra, pixel_kept);
  const uint32_t worst = r.census.max_census();
  if (worst > 1) {
    r.stall_cycles = worst - 1;
    r.detection_cycles = 1;
  }
  return r;
}

AccessPlan schedule_inter_level(std::span<const NeighborSet> batch, const MultiScaleLayout& layout,
                                const FmapMask* pixel_kept) {
  if (layout.num_levels() != 4) {
    throw std::invalid_argument(fmt::format("inter-level mode needs 4 levels, layout has {}", layout.num_levels()));
  }
  std::array<bool, 4> seen{};
  for (const auto& n : batch) {
    if (n.level < 0 || n.level >= 4) throw std::invalid_argument(fmt::format("level {} out of range", n.level));
    if (seen[n.level]) throw std::invalid_argument(fmt::format("two points of level {} in one inter-level batch", n.level));
    seen[n.level] = true;
  }
  AccessPlan plan;
  plan.census = bank_census(batch, layout, Parallelism::Inter, pixel_kept);
  if (plan.census.max_census() > 1) throw std::logic_error("bank conflict in inter-level batch");
  return plan;
}

CycleReport& CycleReport::operator+=(const CycleReport& o) {
  probs_cycles += o.probs_cycles;
  offset_mm_cycles += o.offset_mm_cycles;
  value_mm_cycles += o.value_mm_cycles;
  msgs_cycles += o.msgs_cycles;
  aggregation_cycles += o.aggregation_cycles;
  total_cycles += o.total_cycles;
  msgs_compute_cycles += o.msgs_compute_cycles;
  msgs_batches += o.msgs_batches;
  conflict_stall_cycles += o.conflict_stall_cycles;
  detection_cycles += o.detection_cycles;
  for (int b = 0; b < kSramBanks; ++b) bank_accesses[b] += o.bank_accesses[b];
  return *this;
}

TrafficCounters& TrafficCounters::operator+=(const TrafficCounters& o) {
  dram_read_bits += o.dram_read_bits;
  dram_write_bits += o.dram_write_bits;
  fmap_fill_dram_bits += o.fmap_fill_dram_bits;
  sampling_value_dram_bits += o.sampling_value_dram_bits;
  sram_fill_write_bits += o.sram_fill_write_bits;
  sram_bi_read_bits += o.sram_bi_read_bits;
  sram_mask_read_bits += o.sram_mask_read_bits;
  sram_intermediate_write_bits += o.sram_intermediate_write_bits;
  sram_intermediate_read_bits += o.sram_intermediate_read_bits;
  return *this;
}

BlockStats& BlockStats::operator+=(const BlockStats& o) {
  total_points += o.total_points;
  kept_points += o.kept_points;
  total_pixels += o.total_pixels;
  kept_pixels += o.kept_pixels;
  bi_multiplies += o.bi_multiplies;
  bi_adds += o.bi_adds;
  ag_macs += o.ag_macs;
  mm_macs += o.mm_macs;
  peak_resident_pixels = std::max(peak_resident_pixels, o.peak_resident_pixels);
  storage_bits = std::max(storage_bits, o.storage_bits);
  uniform_storage_bits = std::max(uniform_storage_bits, o.uniform_storage_bits);
  fell_back_to_intra = fell_back_to_intra || o.fell_back_to_intra;
  return *this;
}

EnergyCoefficients coefficients_from(const MemoryConfig& m) {
  return {m.dram_pj_per_bit, m.sram_read_pj_per_bit, m.sram_write_pj_per_bit};
}

EnergyReport energy_account(const TrafficCounters& traffic, const EnergyCoefficients& c) {
  if (c.dram_pj_per_bit < 0.0 || c.sram_read_pj_per_bit < 0.0 || c.sram_write_pj_per_bit < 0.0) {
    throw std::invalid_argument("energy coefficients must be non-negative");
  }
  EnergyReport e;
  e.traffic = traffic;
  e.dram_pj = static_cast<double>(traffic.dram_bits()) * c.dram_pj_per_bit;
  e.sram_read_pj = static_cast<double>(traffic.sram_read_bits()) * c.sram_read_pj_per_bit;
  e.sram_write_pj = static_cast<double>(traffic.sram_write_bits()) * c.sram_write_pj_per_bit;
  e.total_pj = e.dram_pj + e.sram_read_pj + e.sram_write_pj;
  return e;
}

namespace {

uint64_t bound_by_dram(uint64_t compute, uint64_t dram_bits, const MemoryConfig& m) {
  const double bits_per_cycle = m.dram_bytes_per_cycle() * 8.0;
  const auto dram_cycles = static_cast<uint64_t>(std::ceil(static_cast<double>(dram_bits) / bits_per_cycle));
  return std::max(compute, dram_cycles);
}

struct LaneSample {
  int head = 0;
  int level = 0;
  int point = 0;
};

}  // namespace

BlockResult simulate_block(const AttentionInputs& inputs, const ModelConfig& config, const BlockMasks& masks,
                           const SimFlags& flags, const HardwareConfig& hw, uint32_t block_index) {
  validate_inputs(inputs, config);
  const auto layout = config.layout();
  const std::size_t nq = config.num_queries();
  const std::size_t d = static_cast<std::size_t>(config.d_in);
  const int bits = config.quant_bits;
  const int dh = config.head_dim();
  const int nl = config.num_levels;
  const int np = config.num_points;
  const std::size_t heads_points = static_cast<std::size_t>(config.num_heads) * config.points_per_head();

  if (masks.fmap.shapes != config.level_shapes || masks.fmap.size() != nq) {
    throw std::invalid_argument("fmap mask does not match the level shapes");
  }
  if (masks.points) {
    const auto& m = *masks.points;
    if (m.num_queries != nq || m.num_heads != config.num_heads || m.num_levels != nl || m.num_points != np) {
      throw std::invalid_argument("replayed point mask does not match the model");
    }
  }

  BlockResult r;
  Parallelism mode = flags.parallelism;
  if (mode == Parallelism::Inter && (nl != 4 || hw.pe.ba_lanes != 4)) {
    mode = Parallelism::Intra;
    r.stats.fell_back_to_intra = true;
    r.warnings.push_back(fmt::format("inter-level mode needs 4 levels and 4 lanes (have {} and {}); using intra-level",
                                     nl, hw.pe.ba_lanes));
  }
  const FmapMask fmap_mask = flags.pruning ? masks.fmap : FmapMask::all_ones(config.level_shapes, masks.fmap.block_index);

  TrafficCounters traffic;
  const auto ops = quantize_operands(inputs, bits);

  // Phase 1: logits MM, softmax, point mask.
  const auto logits_mm = simulate_mm(nq, d, heads_points, nullptr, bits, hw.pe);
  const auto probs = quantized_probs(ops, config);
  if (masks.points) {
    r.point_mask = *masks.points;
  } else if (flags.pruning) {
    r.point_mask = generate_point_mask(probs, nl, np, config.pap_epsilon, block_index);
  } else {
    r.point_mask = PointMask::all_ones(nq, config.num_heads, nl, np, block_index);
  }
  const auto softmax_cycles = static_cast<uint64_t>(
      std::ceil(static_cast<double>(nq * heads_points) / hw.pe.softmax_elems_per_cycle));
  r.cycles.probs_cycles = bound_by_dram(logits_mm.cycles + softmax_cycles, logits_mm.dram_read_bits(), hw.memory);
  traffic.dram_read_bits += logits_mm.dram_read_bits();
  r.stats.mm_macs += logits_mm.macs;

  // Phase 2: offsets for the kept points only (column-sparse rows).
  uint64_t offset_cycles = 0;
  uint64_t offset_macs = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    const auto begin = r.point_mask.keep.begin() + static_cast<std::ptrdiff_t>(q * heads_points);
    const auto kept = static_cast<uint64_t>(std::count(begin, begin + static_cast<std::ptrdiff_t>(heads_points), uint8_t{1}));
    offset_cycles += ceil_div(d, hw.pe.mm_vector) * ceil_div(2 * kept, hw.pe.mm_tile);
    offset_macs += d * 2 * kept;
  }
  const auto offset_mm = simulate_mm(nq, d, 2 * heads_points, nullptr, bits, hw.pe);
  r.cycles.offset_mm_cycles = bound_by_dram(offset_cycles, offset_mm.dram_read_bits(), hw.memory);
  traffic.dram_read_bits += offset_mm.dram_read_bits();
  if (flags.pruning) traffic.sram_mask_read_bits += r.point_mask.size();
  r.stats.mm_macs += offset_macs;
  const auto plan = build_sampling_plan(quantized_offsets(ops), inputs.refs, config, bits);

  // Phase 3: V projection of the kept pixels, written back to DRAM.
  const auto value_mm = simulate_mm(nq, d, d, &fmap_mask.keep, bits, hw.pe);
  const auto values = quantized_values(ops, &fmap_mask);
  const uint64_t value_write_bits = value_mm.kept_rows * d * bits;
  const uint64_t mask_in_bits = flags.pruning ? nq : 0;
  traffic.dram_read_bits += value_mm.dram_read_bits() + mask_in_bits;
  traffic.dram_write_bits += value_write_bits;
  if (flags.pruning) traffic.sram_mask_read_bits += nq;
  r.cycles.value_mm_cycles =
      bound_by_dram(value_mm.cycles, value_mm.dram_read_bits() + mask_in_bits + value_write_bits, hw.memory);
  r.stats.mm_macs += value_mm.macs;

  // Phase 4: MSGS + aggregation in BA mode.
  std::vector<WindowExtent> extents;
  std::vector<WindowExtent> uniform_extents;
  BoundedRange widest{};
  for (int l = 0; l < nl; ++l) {
    if (config.range_narrowing) {
      widest.half_width = std::max(widest.half_width, config.bounded_ranges[l].half_width);
      widest.half_height = std::max(widest.half_height, config.bounded_ranges[l].half_height);
    }
  }
  for (int l = 0; l < nl; ++l) {
    const auto& s = config.level_shapes[l];
    if (config.range_narrowing) {
      extents.push_back(sampling_extent(config.bounded_ranges[l]));
      uniform_extents.push_back(sampling_extent(widest));
    } else {
      extents.push_back({s.width, s.width, s.height, s.height});
      uniform_extents.push_back(extents.back());
    }
  }
  ReuseWindow probe(layout, uniform_extents);
  std::vector<ReuseWindow> windows(nl, ReuseWindow(layout, extents));

  const uint64_t pixel_bits = d * bits;
  const uint64_t head_bits = static_cast<uint64_t>(dh) * bits;
  r.accumulators.assign(nq * d, 0);
  r.frequency = FrequencyMap(config.level_shapes);
  uint64_t kept_samples = 0;
  uint64_t msgs_dram_bits = 0;

  auto run_sample = [&](std::size_t q, const LaneSample& s) {
    const auto& n = plan.at(q, s.head, s.level, s.point).neighbors;
    const int64_t w = prob_to_fixed(probs.row(q, s.head)[static_cast<std::size_t>(s.level) * np + s.point], bits);
    for (int c = 0; c < dh; ++c) {
      const std::size_t col = static_cast<std::size_t>(s.head) * dh + c;
      r.accumulators[q * d + col] += w * sample_fixed(values, layout, n, col, bits);
    }
    for (const auto& corner : n.corners) {
      if (corner.in_range) r.frequency.record(layout.flat_index(n.level, corner.y, corner.x));
    }
    ++kept_samples;
  };

  auto issue = [&](std::size_t q, std::span<const LaneSample> lanes) {
    std::vector<NeighborSet> batch;
    batch.reserve(lanes.size());
    for (const auto& s : lanes) batch.push_back(plan.at(q, s.head, s.level, s.point).neighbors);
    BankCensus census;
    uint64_t cycles = 1;
    if (mode == Parallelism::Inter) {
      census = schedule_inter_level(batch, layout, &fmap_mask).census;
    } else {
      const auto conflict = detect_conflicts_intra(batch, layout, &fmap_mask);
      census = conflict.census;
      cycles += conflict.extra_cycles();
      r.cycles.conflict_stall_cycles += conflict.stall_cycles;
      r.cycles.detection_cycles += conflict.detection_cycles;
    }
    r.cycles.msgs_compute_cycles += cycles;
    ++r.cycles.msgs_batches;
    for (int b = 0; b < kSramBanks; ++b) r.cycles.bank_accesses[b] += census.distinct[b];
    traffic.sram_bi_read_bits += census.accesses() * head_bits;
    for (const auto& s : lanes) run_sample(q, s);
  };

  for (std::size_t q = 0; q < nq; ++q) {
    uint64_t resident = 0;
    uint64_t uniform_resident = 0;
    for (int l = 0; l < nl; ++l) {
      const auto ref = plan.at(q, 0, l, 0).reference;
      const int cx = static_cast<int>(std::floor(ref.x));
      const int cy = static_cast<int>(std::floor(ref.y));
      if (!flags.reuse) windows[l] = ReuseWindow(layout, extents);
      const auto step = windows[l].advance(l, cx, cy);
      for (auto f : step.fetched) {
        if (flags.pruning) traffic.sram_mask_read_bits += 1;
        if (!fmap_mask.kept(f)) continue;
        traffic.fmap_fill_dram_bits += pixel_bits;
        traffic.sram_fill_write_bits += pixel_bits;
      }
      resident += windows[l].resident_count();
      uniform_resident += probe.rect_for(l, cx, cy).area();
    }
    r.stats.peak_resident_pixels = std::max(r.stats.peak_resident_pixels, resident);
    r.stats.uniform_storage_bits = std::max(r.stats.uniform_storage_bits, uniform_resident * pixel_bits);

    std::vector<std::vector<LaneSample>> per_level(nl);
    for (int h = 0; h < config.num_heads; ++h) {
      for (int l = 0; l < nl; ++l) {
        for (int p = 0; p < np; ++p) {
          if (r.point_mask.kept(q, h, l, p)) per_level[l].push_back({h, l, p});
        }
      }
    }
    if (mode == Parallelism::Inter) {
      std::size_t depth = 0;
      for (const auto& v : per_level) depth = std::max(depth, v.size());
      for (std::size_t i = 0; i < depth; ++i) {
        std::vector<LaneSample> lanes;
        for (int l = 0; l < nl; ++l) {
          if (i < per_level[l].size()) lanes.push_back(per_level[l][i]);
        }
        issue(q, lanes);
      }
    } else {
      for (int h = 0; h < config.num_heads; ++h) {
        for (int l = 0; l < nl; ++l) {
          std::vector<LaneSample> group;
          for (const auto& s : per_level[l]) {
            if (s.head == h) group.push_back(s);
          }
          for (std::size_t i = 0; i < group.size(); i += hw.pe.ba_lanes) {
            const std::size_t n = std::min<std::size_t>(hw.pe.ba_lanes, group.size() - i);
            issue(q, std::span<const LaneSample>(group.data() + i, n));
          }
        }
      }
    }
  }
  traffic.dram_read_bits += traffic.fmap_fill_dram_bits;
  msgs_dram_bits += traffic.fmap_fill_dram_bits;
  r.stats.storage_bits = r.stats.peak_resident_pixels * pixel_bits;

  if (!flags.fused) {
    // Sampling values leave the chip after BI and come back for aggregation.
    const uint64_t s_bits = kept_samples * head_bits;
    traffic.sampling_value_dram_bits = 2 * s_bits;
    traffic.dram_write_bits += s_bits;
    traffic.dram_read_bits += s_bits;
    traffic.sram_intermediate_write_bits += s_bits;
    traffic.sram_intermediate_read_bits += s_bits;
    msgs_dram_bits += s_bits;
    r.cycles.aggregation_cycles = bound_by_dram(ceil_div(kept_samples, hw.pe.ba_lanes), s_bits, hw.memory);
  }
  const uint64_t output_bits = nq * d * bits;
  const uint64_t mask_out_bits = flags.pruning ? nq : 0;
  traffic.dram_write_bits += output_bits + mask_out_bits;
  msgs_dram_bits += output_bits + mask_out_bits;
  r.cycles.msgs_cycles = bound_by_dram(r.cycles.msgs_compute_cycles, msgs_dram_bits, hw.memory);
  r.cycles.total_cycles = r.cycles.phase_sum();

  r.stats.total_points = r.point_mask.size();
  r.stats.kept_points = kept_samples;
  r.stats.total_pixels = nq;
  r.stats.kept_pixels = fmap_mask.kept_count();
  r.stats.bi_multiplies = kept_samples * static_cast<uint64_t>(hw.pe.bi_multipliers) * dh;
  r.stats.bi_adds = kept_samples * static_cast<uint64_t>(hw.pe.bi_adders) * dh;
  r.stats.ag_macs = kept_samples * static_cast<uint64_t>(dh);

  r.energy = energy_account(traffic, coefficients_from(hw.memory));
  r.next_fmap_mask = flags.pruning ? generate_fmap_mask(r.frequency, config.fwp_k, block_index)
                                   : FmapMask::all_ones(config.level_shapes, block_index);

  const double scale = output_scale(values, bits);
  r.output = Matrix(nq, d);
  for (std::size_t i = 0; i < r.accumulators.size(); ++i) r.output.data[i] = static_cast<double>(r.accumulators[i]) * scale;
  return r;
}

}  // namespace defa
