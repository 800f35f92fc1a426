#pragma once

// Random small problem instances shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <utility>

#include "defa/reference.hpp"
#include "defa/tensor.hpp"
#include "naive_oracle.hpp"

namespace testing_support {

struct Instance {
  defa::ModelConfig config;
  defa::AttentionInputs inputs;
};

inline defa::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  defa::Matrix m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

// levels <= 8x8, D_in <= 16, heads <= 4, points <= 4, levels in {1, 2, 4}.
inline Instance random_instance(uint64_t seed, bool allow_no_narrowing = true) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Instance in;
  auto& c = in.config;
  const int level_choices[3] = {1, 2, 4};
  c.num_levels = level_choices[pick(0, 2)];
  c.num_points = pick(1, 4);
  c.num_heads = pick(1, 4);
  c.d_in = c.num_heads * pick(1, 16 / c.num_heads);
  for (int l = 0; l < c.num_levels; ++l) c.level_shapes.push_back({pick(1, 8), pick(1, 8)});
  c.range_narrowing = !allow_no_narrowing || pick(0, 3) != 0;
  c.offsets_in_pixels = pick(0, 4) != 0;
  if (c.range_narrowing) {
    for (const auto& s : c.level_shapes) c.bounded_ranges.push_back({pick(0, (s.width - 1) / 2), pick(0, (s.height - 1) / 2)});
  }
  const auto nq = c.num_queries();
  const auto d = static_cast<std::size_t>(c.d_in);
  const auto hp = static_cast<std::size_t>(c.num_heads * c.points_per_head());
  in.inputs.query = random_matrix(rng, nq, d, 1.0);
  in.inputs.fmap = random_matrix(rng, nq, d, 1.0);
  in.inputs.weights.attn = random_matrix(rng, d, hp, 1.5);
  in.inputs.weights.value = random_matrix(rng, d, d, 1.0);
  in.inputs.weights.offset = random_matrix(rng, d, 2 * hp, c.offsets_in_pixels ? 1.5 : 0.3);
  in.inputs.refs.num_queries = nq;
  in.inputs.refs.num_levels = static_cast<std::size_t>(c.num_levels);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::size_t i = 0; i < nq * c.num_levels; ++i) in.inputs.refs.coords.push_back({u01(rng), u01(rng)});
  return in;
}

inline oracle::Problem to_problem(const Instance& in) {
  const auto& c = in.config;
  oracle::Problem p;
  p.levels = c.num_levels;
  p.points = c.num_points;
  p.heads = c.num_heads;
  p.d = c.d_in;
  for (const auto& s : c.level_shapes) {
    p.h.push_back(s.height);
    p.w.push_back(s.width);
  }
  for (const auto& r : c.bounded_ranges) {
    p.range_w.push_back(r.half_width);
    p.range_h.push_back(r.half_height);
  }
  p.narrowing = c.range_narrowing;
  p.offsets_in_pixels = c.offsets_in_pixels;
  p.q = in.inputs.query.data;
  p.x = in.inputs.fmap.data;
  p.wa = in.inputs.weights.attn.data;
  p.wv = in.inputs.weights.value.data;
  p.ws = in.inputs.weights.offset.data;
  for (const auto& r : in.inputs.refs.coords) {
    p.ref.push_back(r.x);
    p.ref.push_back(r.y);
  }
  return p;
}

}  // namespace testing_support
