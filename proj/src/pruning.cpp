#include "defa/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <fmt/core.h>

namespace defa {

FrequencyMap::FrequencyMap(std::vector<LevelShape> level_shapes) : shapes(std::move(level_shapes)) {
  std::size_t total = 0;
  for (const auto& s : shapes) total += s.area();
  counts.assign(total, 0);
}

std::span<const uint32_t> FrequencyMap::level(std::size_t l) const {
  std::size_t begin = 0;
  for (std::size_t i = 0; i < l; ++i) begin += shapes[i].area();
  return {counts.data() + begin, shapes.at(l).area()};
}

uint64_t FrequencyMap::total() const {
  uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

FrequencyMap& FrequencyMap::merge(const FrequencyMap& other) {
  if (other.shapes != shapes) throw std::invalid_argument("cannot merge frequency maps of different shapes");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

FrequencyMap count_sampled_frequency(const SamplingPlan& plan, const PointMask* point_mask,
                                     const std::vector<LevelShape>& shapes) {
  const MultiScaleLayout layout(shapes);
  FrequencyMap freq(shapes);
  if (point_mask && point_mask->size() != plan.size()) {
    throw std::invalid_argument("point mask does not cover the sampling plan");
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (point_mask && !point_mask->keep[i]) continue;
    const auto& n = plan.points[i].neighbors;
    for (const auto& c : n.corners) {
      if (c.in_range) freq.record(layout.flat_index(n.level, c.y, c.x));
    }
  }
  return freq;
}

double fwp_threshold(std::span<const uint32_t> level_counts, double k) {
  if (level_counts.empty()) throw std::invalid_argument("FWP threshold of an empty level");
  if (!(k >= 0.0)) throw std::invalid_argument(fmt::format("FWP k must be >= 0, got {}", k));
  uint64_t sum = 0;
  for (auto c : level_counts) sum += c;
  return k * (static_cast<double>(sum) / static_cast<double>(level_counts.size()));
}

FmapMask generate_fmap_mask(const FrequencyMap& freq, double k, uint32_t block_index) {
  FmapMask mask;
  mask.shapes = freq.shapes;
  mask.block_index = block_index;
  mask.keep.reserve(freq.counts.size());
  for (std::size_t l = 0; l < freq.shapes.size(); ++l) {
    const auto counts = freq.level(l);
    const double threshold = fwp_threshold(counts, k);
    for (auto c : counts) mask.keep.push_back(static_cast<double>(c) >= threshold ? 1 : 0);
  }
  return mask;
}

PointMask generate_point_mask(const AttentionProbs& probs, int num_levels, int num_points, double epsilon,
                              uint32_t block_index) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw std::invalid_argument(fmt::format("epsilon {} outside [0, 1)", epsilon));
  if (probs.points_per_head != num_levels * num_points) {
    throw std::invalid_argument("probability rows do not match levels x points");
  }
  auto mask = PointMask::all_ones(probs.num_queries, probs.num_heads, num_levels, num_points, block_index);
  const auto n = static_cast<std::size_t>(probs.points_per_head);
  for (std::size_t q = 0; q < probs.num_queries; ++q) {
    for (int h = 0; h < probs.num_heads; ++h) {
      const auto row = probs.row(q, h);
      uint8_t* bits = mask.keep.data() + (q * probs.num_heads + h) * n;
      bool any = false;
      for (std::size_t k = 0; k < n; ++k) {
        bits[k] = row[k] >= epsilon ? 1 : 0;
        any = any || bits[k];
      }
      if (!any) bits[std::distance(row.begin(), std::max_element(row.begin(), row.end()))] = 1;
    }
  }
  return mask;
}

MaskedProjection apply_fmap_mask_to_projection(const Matrix& fmap, const Matrix& w_value, const FmapMask& mask) {
  if (mask.size() != fmap.rows) {
    throw std::invalid_argument(fmt::format("fmap mask covers {} pixels, fmap has {}", mask.size(), fmap.rows));
  }
  if (fmap.cols != w_value.rows) throw std::invalid_argument("fmap width does not match W_V rows");
  MaskedProjection out;
  out.values = Matrix(fmap.rows, w_value.cols);
  out.dense_macs = static_cast<uint64_t>(fmap.rows) * fmap.cols * w_value.cols;
  for (std::size_t i = 0; i < fmap.rows; ++i) {
    if (!mask.kept(i)) continue;
    for (std::size_t k = 0; k < fmap.cols; ++k) {
      const double a = fmap(i, k);
      for (std::size_t j = 0; j < w_value.cols; ++j) out.values(i, j) += a * w_value(k, j);
    }
    out.macs += static_cast<uint64_t>(fmap.cols) * w_value.cols;
  }
  return out;
}

double max_abs_head_value(const Matrix& values, int head, int head_dim) {
  double m = 0.0;
  for (std::size_t i = 0; i < values.rows; ++i) {
    for (int c = 0; c < head_dim; ++c) m = std::max(m, std::abs(values(i, static_cast<std::size_t>(head) * head_dim + c)));
  }
  return m;
}

namespace {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<uint8_t>((static_cast<uint64_t>(v) >> (8 * i)) & 0xff));
  }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  void bits(const std::vector<uint8_t>& keep) {
    put<uint64_t>(keep.size());
    std::vector<uint8_t> packed((keep.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i]) packed[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    }
    bytes_.insert(bytes_.end(), packed.begin(), packed.end());
  }
  std::vector<uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::vector<uint8_t> bits() {
    const auto n = get<uint64_t>();
    const std::size_t nbytes = (n + 7) / 8;
    need(nbytes);
    std::vector<uint8_t> keep(n);
    for (std::size_t i = 0; i < n; ++i) keep[i] = (bytes_[pos_ + i / 8] >> (i % 8)) & 1u;
    pos_ += nbytes;
    return keep;
  }
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("mask file truncated");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_header(ByteWriter& w, MaskKind kind, uint32_t block_index, const std::vector<LevelShape>& shapes) {
  w.raw("DFAM", 4);
  w.put<uint16_t>(kMaskFormatVersion);
  w.put<uint8_t>(static_cast<uint8_t>(kind));
  w.put<uint8_t>(0);
  w.put<uint32_t>(block_index);
  w.put<uint32_t>(static_cast<uint32_t>(shapes.size()));
  for (const auto& s : shapes) {
    w.put<uint32_t>(static_cast<uint32_t>(s.height));
    w.put<uint32_t>(static_cast<uint32_t>(s.width));
  }
}

}  // namespace

std::vector<uint8_t> encode_mask(const FmapMask& mask) {
  ByteWriter w;
  write_header(w, MaskKind::Fmap, mask.block_index, mask.shapes);
  w.bits(mask.keep);
  return w.take();
}

std::vector<uint8_t> encode_mask(const PointMask& mask, const std::vector<LevelShape>& shapes) {
  if (shapes.size() != static_cast<std::size_t>(mask.num_levels)) {
    throw std::invalid_argument("level shapes do not match the point mask");
  }
  ByteWriter w;
  write_header(w, MaskKind::Point, mask.block_index, shapes);
  w.put<uint64_t>(mask.num_queries);
  w.put<uint32_t>(static_cast<uint32_t>(mask.num_heads));
  w.put<uint32_t>(static_cast<uint32_t>(mask.num_points));
  w.bits(mask.keep);
  return w.take();
}

MaskFile decode_mask(std::span<const uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "DFAM", 4) != 0) throw std::runtime_error("not a mask file");
  ByteReader r(bytes.subspan(4));
  const auto version = r.get<uint16_t>();
  if (version != kMaskFormatVersion) throw std::runtime_error(fmt::format("unsupported mask format version {}", version));
  const auto kind = r.get<uint8_t>();
  r.get<uint8_t>();
  const auto block = r.get<uint32_t>();
  const auto levels = r.get<uint32_t>();
  MaskFile f;
  for (uint32_t l = 0; l < levels; ++l) {
    const auto h = r.get<uint32_t>();
    const auto w = r.get<uint32_t>();
    f.shapes.push_back({static_cast<int>(h), static_cast<int>(w)});
  }
  if (kind == static_cast<uint8_t>(MaskKind::Fmap)) {
    f.kind = MaskKind::Fmap;
    f.fmap.shapes = f.shapes;
    f.fmap.block_index = block;
    f.fmap.keep = r.bits();
    if (f.fmap.keep.size() != MultiScaleLayout(f.shapes).total_pixels()) {
      throw std::runtime_error("fmap mask bit count does not match level shapes");
    }
  } else if (kind == static_cast<uint8_t>(MaskKind::Point)) {
    f.kind = MaskKind::Point;
    f.point.num_queries = r.get<uint64_t>();
    f.point.num_heads = static_cast<int>(r.get<uint32_t>());
    f.point.num_points = static_cast<int>(r.get<uint32_t>());
    f.point.num_levels = static_cast<int>(levels);
    f.point.block_index = block;
    f.point.keep = r.bits();
    if (f.point.keep.size() != f.point.num_queries * f.point.num_heads * f.point.num_levels * f.point.num_points) {
      throw std::runtime_error("point mask bit count does not match its dimensions");
    }
  } else {
    throw std::runtime_error(fmt::format("unknown mask kind {}", kind));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after mask payload");
  return f;
}

void write_mask_file(const std::string& path, std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot open {} for writing", path));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path));
}

MaskFile read_mask_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open {}", path));
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_mask(bytes);
}

PrunedBlock run_pruned_block_reference(const AttentionInputs& inputs, const ModelConfig& config,
                                       const FmapMask& fmap_mask, uint32_t block_index) {
  validate_inputs(inputs, config);
  PrunedBlock b;
  const auto probs = compute_probs(matmul(inputs.query, inputs.weights.attn), config);
  b.point_mask = generate_point_mask(probs, config.num_levels, config.num_points, config.pap_epsilon, block_index);
  auto r = msdeform_attn_reference(inputs, config, {&fmap_mask, &b.point_mask});
  b.output = std::move(r.output);
  b.frequency = count_sampled_frequency(r.plan, &b.point_mask, config.level_shapes);
  b.next_fmap_mask = generate_fmap_mask(b.frequency, config.fwp_k, block_index);
  return b;
}

PrunedBlock run_pruned_block_quantized(const AttentionInputs& inputs, const ModelConfig& config,
                                       const FmapMask& fmap_mask, uint32_t block_index) {
  validate_inputs(inputs, config);
  PrunedBlock b;
  const auto ops = quantize_operands(inputs, config.quant_bits);
  const auto probs = quantized_probs(ops, config);
  b.point_mask = generate_point_mask(probs, config.num_levels, config.num_points, config.pap_epsilon, block_index);
  auto r = msdeform_attn_quantized(inputs, config, {&fmap_mask, &b.point_mask});
  b.output = std::move(r.output);
  b.frequency = count_sampled_frequency(r.plan, &b.point_mask, config.level_shapes);
  b.next_fmap_mask = generate_fmap_mask(b.frequency, config.fwp_k, block_index);
  return b;
}

}  // namespace defa
