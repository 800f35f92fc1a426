#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "defa/geometry.hpp"
#include "defa/masks.hpp"
#include "defa/tensor.hpp"

namespace defa {

// Corner-weight bilinear interpolation over one channel:
//   S = N0 (x1-x)(y1-y) + N1 (x-x0)(y1-y) + N2 (x1-x)(y-y0) + N3 (x-x0)(y-y0)
// with x1 = x0 + 1, y1 = y0 + 1.
template <typename T>
T bilinear_corner_form(const T& n0, const T& n1, const T& n2, const T& n3, const T& x, const T& y, const T& x0,
                       const T& y0) {
  const T x1 = x0 + T(1);
  const T y1 = y0 + T(1);
  return n0 * (x1 - x) * (y1 - y) + n1 * (x - x0) * (y1 - y) + n2 * (x1 - x) * (y - y0) +
         n3 * (x - x0) * (y - y0);
}

// Factored form used by the BA-mode lane: 3 multiplies, 7 adds.
//   S = N0 + (N2-N0) t0 + [(N1-N0) + (N3-N2-N1+N0) t0] t1
template <typename T>
T bilinear_fused_form(const T& n0, const T& n1, const T& n2, const T& n3, const T& t0, const T& t1) {
  const T down = n2 - n0;
  const T right = n1 - n0;
  const T cross = (n3 - n2) - right;
  return (n0 + down * t0) + (right + cross * t0) * t1;
}

std::vector<double> softmax(std::span<const double> logits);

// Zero-padded bilinear sample of columns [col_begin, col_begin + col_count)
// of `values` at fractional pixel (x, y) of `level`.
std::vector<double> bilinear_sample(const Matrix& values, const MultiScaleLayout& layout, int level, double x,
                                    double y, std::size_t col_begin, std::size_t col_count);

std::vector<double> bilinear_sample_fused(std::span<const double> n0, std::span<const double> n1,
                                          std::span<const double> n2, std::span<const double> n3, double t0,
                                          double t1);

std::vector<double> aggregate(std::span<const double> probs, const std::vector<std::vector<double>>& values);

struct WeightSet {
  Matrix attn;    // D_in x (N_h N_l N_p)
  Matrix value;   // D_in x D_in
  Matrix offset;  // D_in x (2 N_h N_l N_p)
};

struct AttentionInputs {
  Matrix query;  // N_in x D_in
  Matrix fmap;   // N_in x D_in
  ReferencePoints refs;
  WeightSet weights;
};

// Throws std::invalid_argument naming the first mismatched dimension.
void validate_inputs(const AttentionInputs& inputs, const ModelConfig& config);

struct AttentionProbs {
  std::size_t num_queries = 0;
  int num_heads = 0;
  int points_per_head = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t q, int h) const {
    return {values.data() + (q * num_heads + h) * points_per_head, static_cast<std::size_t>(points_per_head)};
  }
  std::span<double> row(std::size_t q, int h) {
    return {values.data() + (q * num_heads + h) * points_per_head, static_cast<std::size_t>(points_per_head)};
  }
};

// Softmax per (query, head) over the N_l * N_p logits of that head.
AttentionProbs compute_probs(const Matrix& logits, const ModelConfig& config);

struct PruningInputs {
  const FmapMask* fmap_mask = nullptr;    // from the previous block
  const PointMask* point_mask = nullptr;  // from this block's probabilities
};

struct ReferenceResult {
  Matrix output;  // N_in x D_in, heads concatenated in order
  Matrix values;  // V after fmap masking
  AttentionProbs probs;
  SamplingPlan plan;
};

ReferenceResult msdeform_attn_reference(const AttentionInputs& inputs, const ModelConfig& config,
                                        const PruningInputs& pruning = {});

// ---- INT path ------------------------------------------------------------
//
// Operands are quantized per tensor to quant_bits. Matrix products accumulate
// exactly in int64. V is requantized to quant_bits; sampling coordinates carry
// quant_bits fractional bits; probabilities are unsigned fixed point with
// quant_bits - 1 fractional bits. BI and aggregation are exact integer
// arithmetic, so the result does not depend on evaluation order.

struct QuantizedOperands {
  QuantTensor query;
  QuantTensor fmap;
  QuantTensor w_attn;
  QuantTensor w_value;
  QuantTensor w_offset;
};

QuantizedOperands quantize_operands(const AttentionInputs& inputs, int bits);

// Exact integer product, returned dequantized (acc * scale_a * scale_b).
Matrix int_matmul(const QuantTensor& a, const QuantTensor& b);
// Integer product restricted to the kept rows of `row_mask` (others zero).
std::vector<int64_t> int_matmul_raw(const QuantTensor& a, const QuantTensor& b, const std::vector<uint8_t>* row_mask);

AttentionProbs quantized_probs(const QuantizedOperands& ops, const ModelConfig& config);
Matrix quantized_offsets(const QuantizedOperands& ops);
QuantTensor quantized_values(const QuantizedOperands& ops, const FmapMask* fmap_mask);

int64_t prob_to_fixed(double prob, int bits);

// Integer form of the factored BI; result carries 2 * frac_bits fractional bits.
int64_t fused_bi_fixed(int64_t n0, int64_t n1, int64_t n2, int64_t n3, int64_t t0, int64_t t1, int frac_bits);

// Reads the four neighbours (zero when out of range) of one channel of V.
int64_t sample_fixed(const QuantTensor& values, const MultiScaleLayout& layout, const NeighborSet& n,
                     std::size_t channel, int frac_bits);

// Dequantization factor from an aggregation accumulator to a real output.
double output_scale(const QuantTensor& values, int bits);

struct QuantizedResult {
  Matrix output;
  std::vector<int64_t> accumulators;  // N_in x D_in
  QuantTensor values;
  AttentionProbs probs;
  SamplingPlan plan;
};

QuantizedResult msdeform_attn_quantized(const AttentionInputs& inputs, const ModelConfig& config,
                                        const PruningInputs& pruning = {});

}  // namespace defa
