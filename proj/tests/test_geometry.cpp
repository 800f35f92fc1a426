#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>
#include <vector>
#include <stdexcept>

#include "defa/geometry.hpp"

using namespace defa;

TEST_CASE("range clamp") {
  const std::vector<LevelShape> shapes{{16, 16}};
  const std::vector<BoundedRange> ranges{{2, 2}};
  const Point2 ref{7.5, 7.5};
  CHECK(clamp_offset_levelwise(0, ref, {0, 0}, ranges, shapes) == ref);
  CHECK(clamp_offset_levelwise(0, ref, {5, 0}, ranges, shapes).x == 9.5);
  CHECK(clamp_offset_levelwise(0, ref, {-1.25, 0.5}, ranges, shapes) == Point2{6.25, 8.0});
}

TEST_CASE("border clamp composes range and fmap bounds") {
  const std::vector<LevelShape> shapes{{6, 6}};
  const std::vector<BoundedRange> ranges{{2, 2}};
  for (int cy = 0; cy < 6; ++cy) {
    for (int cx = 0; cx < 6; ++cx) {
      if (cx != 0 && cx != 5 && cy != 0 && cy != 5) continue;
      for (double ox : {-40.0, -2.5, -0.3, 0.0, 1.7, 40.0}) {
        for (double oy : {-40.0, -1.1, 0.0, 2.5, 40.0}) {
          const Point2 ref{static_cast<double>(cx), static_cast<double>(cy)};
          const auto got = clamp_offset_levelwise(0, ref, {ox, oy}, ranges, shapes);
          // Brute force: the admissible set is the intersection of two intervals.
          const double lox = std::max(ref.x - 2, 0.0), hix = std::min(ref.x + 2, 5.0);
          const double loy = std::max(ref.y - 2, 0.0), hiy = std::min(ref.y + 2, 5.0);
          CHECK(got.x == std::min(std::max(ref.x + ox, lox), hix));
          CHECK(got.y == std::min(std::max(ref.y + oy, loy), hiy));
        }
      }
    }
  }
}

TEST_CASE("bank examples") {
  CHECK(bank_of(0, 0, 0) == 0);
  CHECK(bank_of(0, 1, 0) == 1);
  CHECK(bank_of(0, 0, 1) == 2);
  CHECK(bank_of(0, 1, 1) == 3);
  CHECK(bank_of(3, 5, 7) == 15);
  CHECK_THROWS_AS(bank_of(4, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(bank_of(0, 0, 0, 3), std::invalid_argument);
}

TEST_CASE("any 2x2 window hits four distinct banks") {
  for (int nl : {1, 2, 4, 8, 16}) {
    for (int l = 0; l < nl; ++l) {
      for (int y = -3; y < 40; ++y) {
        for (int x = -3; x < 40; ++x) {
          std::set<int> banks{bank_of(l, x, y, nl), bank_of(l, x + 1, y, nl), bank_of(l, x, y + 1, nl),
                              bank_of(l, x + 1, y + 1, nl)};
          const int expect = std::min(4, 16 / nl);
          CHECK(static_cast<int>(banks.size()) == expect);
        }
      }
    }
  }
}

TEST_CASE("neighbour examples") {
  const std::vector<LevelShape> shapes{{8, 8}};
  const auto n = neighbors_of(0, {1.25, 2.5}, shapes);
  CHECK(n.corners[0].x == 1);
  CHECK(n.corners[0].y == 2);
  CHECK(n.t1 == 0.25);
  CHECK(n.t0 == 0.5);
  const auto m = neighbors_of(0, {3.0, 4.0}, shapes);
  CHECK(m.t0 == 0.0);
  CHECK(m.t1 == 0.0);
  const auto e = neighbors_of(0, {7.0, 3.5}, shapes);
  CHECK(e.corners[0].in_range);
  CHECK_FALSE(e.corners[1].in_range);
  CHECK(e.corners[2].in_range);
  CHECK_FALSE(e.corners[3].in_range);
}

TEST_CASE("fixed point neighbours") {
  const std::vector<LevelShape> shapes{{8, 8}};
  // (1.25, 2.5) with 12 fractional bits
  const auto n = neighbors_of_fixed(0, 5120, 10240, 12, shapes);
  CHECK(n.corners[0].x == 1);
  CHECK(n.corners[0].y == 2);
  CHECK(n.t1_fixed == 1024);
  CHECK(n.t0_fixed == 2048);
}

namespace {

std::set<std::size_t> rect_set(const MultiScaleLayout& layout, int level, const PixelRect& r) {
  std::set<std::size_t> s;
  for (int y = r.y_lo; y <= r.y_hi; ++y)
    for (int x = r.x_lo; x <= r.x_hi; ++x) s.insert(layout.flat_index(level, y, x));
  return s;
}

}  // namespace

TEST_CASE("reuse slide fetches one column") {
  const MultiScaleLayout layout({{20, 20}, {10, 10}});
  const BoundedRange r{2, 3};
  ReuseWindow w(layout, {symmetric_extent(r), symmetric_extent(r)});
  auto first = w.advance(0, 8, 8);
  CHECK(first.fetched.size() == 5 * 7);
  CHECK(first.reused.empty());
  auto step = w.advance(0, 9, 8);
  CHECK(step.fetched.size() == 7);
  CHECK(step.reused.size() == 4 * 7);
  for (auto f : step.fetched) CHECK(layout.locate(f).x == 11);
  auto same = w.advance(0, 9, 8);
  CHECK(same.fetched.empty());
  auto jump = w.advance(1, 4, 4);
  CHECK(jump.fetched.size() == 5 * 7);
}

TEST_CASE("reuse matches a set-difference oracle") {
  const MultiScaleLayout layout({{9, 13}, {5, 7}});
  const std::vector<WindowExtent> ext{{2, 3, 1, 2}, {1, 2, 1, 2}};
  ReuseWindow w(layout, ext);
  std::mt19937_64 rng(4);
  std::set<std::size_t> resident;
  int prev_level = -1, prev_cy = -1;
  for (int i = 0; i < 2000; ++i) {
    const int level = (rng() % 5 == 0) ? 1 - std::max(prev_level, 0) : std::max(prev_level, 0);
    const auto& s = layout.shape(level);
    const int cy = (rng() % 4 == 0) ? static_cast<int>(rng() % s.height) : std::min(std::max(prev_cy, 0), s.height - 1);
    const int cx = static_cast<int>(rng() % s.width);
    const auto next = rect_set(layout, level, w.rect_for(level, cx, cy));
    const bool slide = level == prev_level && cy == prev_cy;
    std::set<std::size_t> want_fetch;
    for (auto f : next)
      if (!slide || !resident.count(f)) want_fetch.insert(f);
    const auto step = w.advance(level, cx, cy);
    CHECK(std::set<std::size_t>(step.fetched.begin(), step.fetched.end()) == want_fetch);
    CHECK(step.fetched.size() + step.reused.size() == next.size());
    resident = next;
    prev_level = level;
    prev_cy = cy;
  }
}

TEST_CASE("grid references sit on each query's own pixel") {
  const MultiScaleLayout layout({{4, 6}, {2, 3}});
  const auto refs = grid_reference_points(layout);
  CHECK(refs.num_queries == 30);
  const auto p = reference_in_pixels(refs.at(layout.flat_index(0, 3, 5), 0), layout.shape(0));
  CHECK(p == Point2{5.0, 3.0});
  const auto c = reference_in_pixels(refs.at(layout.flat_index(1, 1, 2), 1), layout.shape(1));
  CHECK(c == Point2{2.0, 1.0});
}

TEST_CASE("sampling plan offset layout") {
  ModelConfig c;
  c.num_levels = 2;
  c.num_points = 2;
  c.num_heads = 2;
  c.d_in = 4;
  c.level_shapes = {{8, 8}, {4, 4}};
  c.range_narrowing = false;
  const auto refs = grid_reference_points(c.layout());
  Matrix off(c.num_queries(), 16, 0.0);
  const std::size_t q = c.layout().flat_index(0, 2, 3);
  off(q, offset_column(1, 1, 0, 0, 2, 2)) = 0.75;
  off(q, offset_column(1, 1, 0, 1, 2, 2)) = -0.5;
  const auto plan = build_sampling_plan(off, refs, c);
  const auto& sp = plan.at(q, 1, 1, 0);
  // Level 1 reference of pixel (3, 2) of level 0: (3.5/8*4 - 0.5, 2.5/8*4 - 0.5)
  CHECK(sp.reference.x == doctest::Approx(1.25));
  CHECK(sp.reference.y == doctest::Approx(0.75));
  CHECK(sp.location.x == doctest::Approx(2.0));
  CHECK(sp.location.y == doctest::Approx(0.25));
  CHECK_THROWS_AS(build_sampling_plan(Matrix(3, 16), refs, c), std::invalid_argument);
}
