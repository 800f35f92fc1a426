#pragma once

// Hand-built simulator workloads.

#include <array>
#include <utility>

#include "defa/bench.hpp"

namespace testing_support {

// Four 16x16 levels, one head, four points per level at offsets 4 px apart:
// every intra-level batch puts four different pixels into each touched bank.
inline std::pair<defa::ModelConfig, defa::AttentionInputs> colliding_workload() {
  defa::ModelConfig c;
  c.num_levels = 4;
  c.num_points = 4;
  c.num_heads = 1;
  c.d_in = 4;
  c.level_shapes = {{16, 16}, {16, 16}, {16, 16}, {16, 16}};
  c.bounded_ranges.assign(4, {4, 4});
  const std::array<std::pair<double, double>, 4> offs{{{-2.5, -2.5}, {1.5, -2.5}, {-2.5, 1.5}, {1.5, 1.5}}};
  defa::AttentionInputs in;
  const auto nq = c.num_queries();
  in.query = defa::Matrix(nq, 4, 0.0);
  for (std::size_t q = 0; q < nq; ++q) in.query(q, 0) = 1.0;
  in.fmap = defa::Matrix(nq, 4);
  for (std::size_t i = 0; i < in.fmap.data.size(); ++i) in.fmap.data[i] = static_cast<double>((i * 37) % 19) - 9.0;
  in.weights.attn = defa::Matrix(4, 16, 0.0);
  in.weights.value = defa::Matrix::identity(4);
  in.weights.offset = defa::Matrix(4, 32, 0.0);
  for (int l = 0; l < 4; ++l) {
    for (int p = 0; p < 4; ++p) {
      in.weights.offset(0, defa::offset_column(0, l, p, 0, 4, 4)) = offs[p].first;
      in.weights.offset(0, defa::offset_column(0, l, p, 1, 4, 4)) = offs[p].second;
    }
  }
  in.refs = defa::grid_reference_points(c.layout());
  return {c, in};
}

// One-level model, for row-sweep reuse accounting.
inline defa::ModelConfig single_level_config(int h, int w, int half_w, int half_h, int d_in) {
  defa::ModelConfig c;
  c.num_levels = 1;
  c.num_points = 2;
  c.num_heads = 1;
  c.d_in = d_in;
  c.level_shapes = {{h, w}};
  c.bounded_ranges = {{half_w, half_h}};
  return c;
}

}  // namespace testing_support
