#include "defa/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace defa {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax of an empty vector");
  double peak = logits[0];
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument(fmt::format("non-finite logit {}", v));
    peak = std::max(peak, v);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> bilinear_sample(const Matrix& values, const MultiScaleLayout& layout, int level, double x,
                                    double y, std::size_t col_begin, std::size_t col_count) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw std::invalid_argument(fmt::format("non-finite sampling coordinate ({}, {})", x, y));
  }
  if (col_begin + col_count > values.cols) {
    throw std::invalid_argument(fmt::format("columns [{}, {}) exceed width {}", col_begin, col_begin + col_count,
                                            values.cols));
  }
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  std::vector<double> out(col_count, 0.0);
  const std::array<std::pair<int, int>, 4> corners{{{x0, y0}, {x0 + 1, y0}, {x0, y0 + 1}, {x0 + 1, y0 + 1}}};
  std::array<const double*, 4> rows{};
  for (std::size_t c = 0; c < 4; ++c) {
    const auto [cx, cy] = corners[c];
    rows[c] = layout.contains(level, cy, cx) ? values.row(layout.flat_index(level, cy, cx)).data() + col_begin
                                             : nullptr;
  }
  for (std::size_t ch = 0; ch < col_count; ++ch) {
    auto v = [&](std::size_t c) { return rows[c] ? rows[c][ch] : 0.0; };
    out[ch] = bilinear_corner_form(v(0), v(1), v(2), v(3), x, y, fx, fy);
  }
  return out;
}

std::vector<double> bilinear_sample_fused(std::span<const double> n0, std::span<const double> n1,
                                          std::span<const double> n2, std::span<const double> n3, double t0,
                                          double t1) {
  if (!(t0 >= 0.0 && t0 < 1.0) || !(t1 >= 0.0 && t1 < 1.0)) {
    throw std::invalid_argument(fmt::format("fractional weights ({}, {}) outside [0, 1)", t0, t1));
  }
  if (n1.size() != n0.size() || n2.size() != n0.size() || n3.size() != n0.size()) {
    throw std::invalid_argument("neighbour vectors differ in width");
  }
  std::vector<double> out(n0.size());
  for (std::size_t c = 0; c < n0.size(); ++c) out[c] = bilinear_fused_form(n0[c], n1[c], n2[c], n3[c], t0, t1);
  return out;
}

std::vector<double> aggregate(std::span<const double> probs, const std::vector<std::vector<double>>& values) {
  if (probs.size() != values.size()) {
    throw std::invalid_argument(fmt::format("{} probabilities for {} sampling values", probs.size(), values.size()));
  }
  if (values.empty()) return {};
  std::vector<double> out(values[0].size(), 0.0);
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (values[k].size() != out.size()) throw std::invalid_argument("sampling values differ in width");
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += probs[k] * values[k][c];
  }
  return out;
}

void validate_inputs(const AttentionInputs& in, const ModelConfig& config) {
  config.validate();
  const std::size_t nq = config.num_queries();
  const auto d = static_cast<std::size_t>(config.d_in);
  const std::size_t heads_points = static_cast<std::size_t>(config.num_heads) * config.points_per_head();
  auto check = [](const char* what, std::size_t got, std::size_t want) {
    if (got != want) throw std::invalid_argument(fmt::format("{} is {}, expected {}", what, got, want));
  };
  check("query rows", in.query.rows, nq);
  check("query cols (D_in)", in.query.cols, d);
  check("fmap rows (N_in)", in.fmap.rows, nq);
  check("fmap cols (D_in)", in.fmap.cols, d);
  check("W_A rows", in.weights.attn.rows, d);
  check("W_A cols", in.weights.attn.cols, heads_points);
  check("W_V rows", in.weights.value.rows, d);
  check("W_V cols", in.weights.value.cols, d);
  check("W_S rows", in.weights.offset.rows, d);
  check("W_S cols", in.weights.offset.cols, 2 * heads_points);
  check("reference point queries", in.refs.num_queries, nq);
  check("reference point levels", in.refs.num_levels, static_cast<std::size_t>(config.num_levels));
}

AttentionProbs compute_probs(const Matrix& logits, const ModelConfig& config) {
  AttentionProbs probs;
  probs.num_queries = logits.rows;
  probs.num_heads = config.num_heads;
  probs.points_per_head = config.points_per_head();
  if (logits.cols != static_cast<std::size_t>(probs.num_heads * probs.points_per_head)) {
    throw std::invalid_argument(fmt::format("logit width {} != heads x points {}", logits.cols,
                                            probs.num_heads * probs.points_per_head));
  }
  probs.values.resize(logits.rows * logits.cols);
  for (std::size_t q = 0; q < logits.rows; ++q) {
    for (int h = 0; h < probs.num_heads; ++h) {
      const auto row = logits.row(q).subspan(static_cast<std::size_t>(h) * probs.points_per_head,
                                             probs.points_per_head);
      const auto p = softmax(row);
      std::copy(p.begin(), p.end(), probs.row(q, h).begin());
    }
  }
  return probs;
}

namespace {

void check_masks(const PruningInputs& pruning, const ModelConfig& config) {
  if (pruning.fmap_mask) {
    if (pruning.fmap_mask->shapes != config.level_shapes || pruning.fmap_mask->size() != config.num_queries()) {
      throw std::invalid_argument("fmap mask shape does not match the level shapes");
    }
  }
  if (pruning.point_mask) {
    const auto& m = *pruning.point_mask;
    if (m.num_queries != config.num_queries() || m.num_heads != config.num_heads ||
        m.num_levels != config.num_levels || m.num_points != config.num_points ||
        m.size() != m.num_queries * m.num_heads * m.num_levels * m.num_points) {
      throw std::invalid_argument("point mask dimensions do not match the model");
    }
  }
}

bool point_kept(const PruningInputs& pruning, std::size_t q, int h, int l, int p) {
  return pruning.point_mask == nullptr || pruning.point_mask->kept(q, h, l, p);
}

}  // namespace

ReferenceResult msdeform_attn_reference(const AttentionInputs& in, const ModelConfig& config,
                                        const PruningInputs& pruning) {
  validate_inputs(in, config);
  check_masks(pruning, config);
  const auto layout = config.layout();
  const int dh = config.head_dim();

  ReferenceResult r;
  r.values = matmul(in.fmap, in.weights.value);
  if (pruning.fmap_mask) {
    for (std::size_t i = 0; i < r.values.rows; ++i) {
      if (!pruning.fmap_mask->kept(i)) std::fill(r.values.row(i).begin(), r.values.row(i).end(), 0.0);
    }
  }
  r.probs = compute_probs(matmul(in.query, in.weights.attn), config);
  r.plan = build_sampling_plan(matmul(in.query, in.weights.offset), in.refs, config);

  r.output = Matrix(config.num_queries(), config.d_in);
  for (std::size_t q = 0; q < config.num_queries(); ++q) {
    for (int h = 0; h < config.num_heads; ++h) {
      const auto probs = r.probs.row(q, h);
      auto out = r.output.row(q).subspan(static_cast<std::size_t>(h) * dh, dh);
      for (int l = 0; l < config.num_levels; ++l) {
        for (int p = 0; p < config.num_points; ++p) {
          if (!point_kept(pruning, q, h, l, p)) continue;
          const auto& sp = r.plan.at(q, h, l, p);
          const auto s = bilinear_sample(r.values, layout, l, sp.location.x, sp.location.y,
                                         static_cast<std::size_t>(h) * dh, dh);
          const double w = probs[static_cast<std::size_t>(l) * config.num_points + p];
          for (int c = 0; c < dh; ++c) out[c] += w * s[c];
        }
      }
    }
  }
  return r;
}

QuantizedOperands quantize_operands(const AttentionInputs& in, int bits) {
  return {quantize(in.query, bits), quantize(in.fmap, bits), quantize(in.weights.attn, bits),
          quantize(in.weights.value, bits), quantize(in.weights.offset, bits)};
}

std::vector<int64_t> int_matmul_raw(const QuantTensor& a, const QuantTensor& b, const std::vector<uint8_t>* row_mask) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    throw std::invalid_argument("integer matmul operands are not conformable matrices");
  }
  const std::size_t rows = a.shape[0];
  const std::size_t inner = a.shape[1];
  const std::size_t cols = b.shape[1];
  if (row_mask && row_mask->size() != rows) throw std::invalid_argument("row mask length mismatch");
  std::vector<int64_t> acc(rows * cols, 0);
  for (std::size_t i = 0; i < rows; ++i) {
    if (row_mask && !(*row_mask)[i]) continue;
    for (std::size_t k = 0; k < inner; ++k) {
      const int64_t av = a.values[i * inner + k];
      if (av == 0) continue;
      for (std::size_t j = 0; j < cols; ++j) acc[i * cols + j] += av * b.values[k * cols + j];
    }
  }
  return acc;
}

Matrix int_matmul(const QuantTensor& a, const QuantTensor& b) {
  const auto acc = int_matmul_raw(a, b, nullptr);
  Matrix out(a.shape[0], b.shape[1]);
  const double s = a.scale * b.scale;
  for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<double>(acc[i]) * s;
  return out;
}

AttentionProbs quantized_probs(const QuantizedOperands& ops, const ModelConfig& config) {
  return compute_probs(int_matmul(ops.query, ops.w_attn), config);
}

Matrix quantized_offsets(const QuantizedOperands& ops) { return int_matmul(ops.query, ops.w_offset); }

QuantTensor quantized_values(const QuantizedOperands& ops, const FmapMask* fmap_mask) {
  const auto acc = int_matmul_raw(ops.fmap, ops.w_value, fmap_mask ? &fmap_mask->keep : nullptr);
  std::vector<double> real(acc.size());
  const double s = ops.fmap.scale * ops.w_value.scale;
  for (std::size_t i = 0; i < acc.size(); ++i) real[i] = static_cast<double>(acc[i]) * s;
  return quantize(real, {ops.fmap.shape[0], ops.w_value.shape[1]}, ops.fmap.bits);
}

int64_t prob_to_fixed(double prob, int bits) {
  return static_cast<int64_t>(std::nearbyint(std::ldexp(std::clamp(prob, 0.0, 1.0), bits - 1)));
}

int64_t fused_bi_fixed(int64_t n0, int64_t n1, int64_t n2, int64_t n3, int64_t t0, int64_t t1, int frac_bits) {
  // Same factoring as bilinear_fused_form with N scaled by 2^frac_bits.
  const int64_t down = n2 - n0;
  const int64_t right = n1 - n0;
  const int64_t cross = (n3 - n2) - right;
  return ((n0 << frac_bits) + down * t0) * (int64_t{1} << frac_bits) + ((right << frac_bits) + cross * t0) * t1;
}

int64_t sample_fixed(const QuantTensor& values, const MultiScaleLayout& layout, const NeighborSet& n,
                     std::size_t channel, int frac_bits) {
  const std::size_t width = values.shape[1];
  std::array<int64_t, 4> v{};
  for (std::size_t c = 0; c < 4; ++c) {
    const auto& corner = n.corners[c];
    if (corner.in_range) v[c] = values.values[layout.flat_index(n.level, corner.y, corner.x) * width + channel];
  }
  return fused_bi_fixed(v[0], v[1], v[2], v[3], n.t0_fixed, n.t1_fixed, frac_bits);
}

double output_scale(const QuantTensor& values, int bits) {
  return std::ldexp(values.scale, -(2 * bits + bits - 1));
}

QuantizedResult msdeform_attn_quantized(const AttentionInputs& in, const ModelConfig& config,
                                        const PruningInputs& pruning) {
  validate_inputs(in, config);
  check_masks(pruning, config);
  const auto layout = config.layout();
  const int bits = config.quant_bits;
  const int dh = config.head_dim();
  const auto ops = quantize_operands(in, bits);

  QuantizedResult r;
  r.probs = quantized_probs(ops, config);
  r.plan = build_sampling_plan(quantized_offsets(ops), in.refs, config, bits);
  r.values = quantized_values(ops, pruning.fmap_mask);

  const std::size_t nq = config.num_queries();
  r.accumulators.assign(nq * config.d_in, 0);
  for (std::size_t q = 0; q < nq; ++q) {
    for (int h = 0; h < config.num_heads; ++h) {
      const auto probs = r.probs.row(q, h);
      for (int l = 0; l < config.num_levels; ++l) {
        for (int p = 0; p < config.num_points; ++p) {
          if (!point_kept(pruning, q, h, l, p)) continue;
          const auto& n = r.plan.at(q, h, l, p).neighbors;
          const int64_t w = prob_to_fixed(probs[static_cast<std::size_t>(l) * config.num_points + p], bits);
          for (int c = 0; c < dh; ++c) {
            const std::size_t col = static_cast<std::size_t>(h) * dh + c;
            r.accumulators[q * config.d_in + col] += w * sample_fixed(r.values, layout, n, col, bits);
          }
        }
      }
    }
  }
  const double scale = output_scale(r.values, bits);
  r.output = Matrix(nq, config.d_in);
  for (std::size_t i = 0; i < r.accumulators.size(); ++i) r.output.data[i] = static_cast<double>(r.accumulators[i]) * scale;
  return r;
}

}  // namespace defa
