#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>
#include <stdexcept>

#include "defa/reference.hpp"
#include "instances.hpp"

using namespace defa;

TEST_CASE("softmax examples") {
  const std::vector<double> zeros(4, 0.0);
  for (double p : softmax(zeros)) CHECK(p == doctest::Approx(0.25));
  const std::vector<double> big{1000.0, 0.0};
  const auto s = softmax(big);
  CHECK(std::abs(s[0] - 1.0) < 1e-12);
  CHECK(std::abs(s[1]) < 1e-12);
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto t = softmax(v);
  CHECK(t[0] == doctest::Approx(0.09003057).epsilon(1e-7));
  CHECK(t[1] == doctest::Approx(0.24472847).epsilon(1e-7));
  CHECK(t[2] == doctest::Approx(0.66524096).epsilon(1e-7));
  CHECK_THROWS_AS(softmax(std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::numeric_limits<double>::infinity()}), std::invalid_argument);
}

TEST_CASE("corner form examples") {
  CHECK(bilinear_corner_form(0.0, 4.0, 8.0, 12.0, 3.25, 7.5, 3.0, 7.0) == 5.0);
  CHECK(bilinear_corner_form(9.0, 4.0, 8.0, 12.0, 3.0, 7.0, 3.0, 7.0) == 9.0);
  CHECK(bilinear_corner_form(2.5, 2.5, 2.5, 2.5, 0.3, 0.9, 0.0, 0.0) == doctest::Approx(2.5));
}

TEST_CASE("fused form examples") {
  CHECK(bilinear_fused_form(0.0, 4.0, 8.0, 12.0, 0.5, 0.25) == 5.0);
  CHECK(bilinear_fused_form(3.0, 4.0, 8.0, 12.0, 0.0, 0.0) == 3.0);
  const std::vector<double> n0{1.0}, n1{2.0}, n2{3.0}, n3{4.0};
  CHECK_THROWS_AS(bilinear_sample_fused(n0, n1, n2, n3, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bilinear_sample_fused(n0, n1, n2, n3, 0.0, -0.1), std::invalid_argument);
  const double t = std::nextafter(1.0, 0.0);
  const double a = bilinear_fused_form(1.0, -3.0, 7.0, 2.0, t, t);
  const double b = bilinear_corner_form(1.0, -3.0, 7.0, 2.0, t, t, 0.0, 0.0);
  CHECK(std::abs(a - b) <= 4 * std::numeric_limits<double>::epsilon() * 7.0);
}

namespace {

// Scalar that counts arithmetic operations.
struct Counted {
  double v = 0.0;
  static inline int mul = 0;
  static inline int add = 0;
  Counted() = default;
  explicit Counted(double x) : v(x) {}
};
Counted operator+(const Counted& a, const Counted& b) {
  ++Counted::add;
  return Counted(a.v + b.v);
}
Counted operator-(const Counted& a, const Counted& b) {
  ++Counted::add;
  return Counted(a.v - b.v);
}
Counted operator*(const Counted& a, const Counted& b) {
  ++Counted::mul;
  return Counted(a.v * b.v);
}

}  // namespace

TEST_CASE("fused form uses three multiplies and seven adds") {
  Counted::mul = Counted::add = 0;
  const auto r = bilinear_fused_form(Counted(0), Counted(4), Counted(8), Counted(12), Counted(0.5), Counted(0.25));
  CHECK(r.v == 5.0);
  CHECK(Counted::mul == 3);
  CHECK(Counted::add == 7);
}

TEST_CASE("aggregate examples") {
  const std::vector<double> p{0.7, 0.2, 0.1};
  const auto r = aggregate(p, {{1.0}, {2.0}, {3.0}});
  CHECK(r[0] == doctest::Approx(1.4).epsilon(1e-15));
  CHECK(aggregate(std::vector<double>{1.0, 0.0}, {{3.0, 4.0}, {5.0, 6.0}}) == std::vector<double>{3.0, 4.0});
  CHECK(aggregate(std::vector<double>{0.5, 0.5}, {{3.0}, {3.0}})[0] == 3.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{1.0}, {{1.0}, {2.0}}), std::invalid_argument);
}

TEST_CASE("bilinear sample zero pads at the border") {
  const MultiScaleLayout layout({{2, 3}});
  Matrix v(6, 1);
  v.data = {1, 2, 3, 4, 5, 6};
  // x = W-1: right neighbours missing, interpolation only in y.
  const auto s = bilinear_sample(v, layout, 0, 2.0, 0.5, 0, 1);
  CHECK(s[0] == doctest::Approx(0.5 * 3 + 0.5 * 6));
  const auto t = bilinear_sample(v, layout, 0, 2.5, 0.0, 0, 1);
  CHECK(t[0] == doctest::Approx(0.5 * 3));
  CHECK_THROWS_AS(bilinear_sample(v, layout, 0, std::nan(""), 0.0, 0, 1), std::invalid_argument);
}

namespace {

ModelConfig single_point_config(int h, int w) {
  ModelConfig c;
  c.num_levels = 1;
  c.num_points = 1;
  c.num_heads = 1;
  c.d_in = 3;
  c.level_shapes = {{h, w}};
  c.apply_default_ranges();
  return c;
}

}  // namespace

TEST_CASE("single point attention copies the pixel") {
  const auto c = single_point_config(3, 4);
  AttentionInputs in;
  in.query = Matrix(12, 3, 0.25);
  in.fmap = Matrix(12, 3);
  for (std::size_t i = 0; i < in.fmap.data.size(); ++i) in.fmap.data[i] = static_cast<double>(i) - 7.0;
  in.weights.attn = Matrix(3, 1, 0.3);
  in.weights.value = Matrix::identity(3);
  in.weights.offset = Matrix(3, 2, 0.0);
  in.refs = grid_reference_points(c.layout());
  const auto r = msdeform_attn_reference(in, c);
  CHECK(r.output == in.fmap);
}

TEST_CASE("uniform probs on one pixel give that pixel") {
  auto c = single_point_config(4, 4);
  c.num_points = 3;
  c.range_narrowing = false;
  AttentionInputs in;
  in.query = Matrix(16, 3, 1.0);
  in.fmap = Matrix(16, 3);
  for (std::size_t i = 0; i < in.fmap.data.size(); ++i) in.fmap.data[i] = std::sin(static_cast<double>(i));
  in.weights.attn = Matrix(3, 3, 0.0);
  in.weights.value = Matrix(3, 3);
  for (std::size_t i = 0; i < 9; ++i) in.weights.value.data[i] = 0.1 * static_cast<double>(i) - 0.3;
  in.weights.offset = Matrix(3, 6, 0.0);
  // Every point lands one pixel right and one down of the query's own pixel.
  for (int p = 0; p < 3; ++p) {
    in.weights.offset(0, static_cast<std::size_t>(2 * p)) = 1.0;
    in.weights.offset(0, static_cast<std::size_t>(2 * p + 1)) = 1.0;
  }
  in.refs = grid_reference_points(c.layout());
  const auto r = msdeform_attn_reference(in, c);
  const auto v = matmul(in.fmap, in.weights.value);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      const std::size_t q = static_cast<std::size_t>(y * 4 + x);
      const std::size_t target = static_cast<std::size_t>((y + 1) * 4 + x + 1);
      for (std::size_t ch = 0; ch < 3; ++ch) CHECK(r.output(q, ch) == doctest::Approx(v(target, ch)).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-level instance matches the naive oracle") {
  ModelConfig c;
  c.num_levels = 2;
  c.num_points = 2;
  c.num_heads = 2;
  c.d_in = 4;
  c.level_shapes = {{4, 4}, {2, 2}};
  c.bounded_ranges = {{1, 1}, {0, 0}};
  std::mt19937_64 rng(5);
  testing_support::Instance inst;
  inst.config = c;
  inst.inputs.query = testing_support::random_matrix(rng, 20, 4, 1.0);
  inst.inputs.fmap = testing_support::random_matrix(rng, 20, 4, 1.0);
  inst.inputs.weights.attn = testing_support::random_matrix(rng, 4, 8, 1.0);
  inst.inputs.weights.value = testing_support::random_matrix(rng, 4, 4, 1.0);
  inst.inputs.weights.offset = testing_support::random_matrix(rng, 4, 16, 1.5);
  inst.inputs.refs = grid_reference_points(c.layout());
  const auto got = msdeform_attn_reference(inst.inputs, c).output;
  const auto want = oracle::run(testing_support::to_problem(inst));
  REQUIRE(got.data.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got.data[i] - want[i]) <= 1e-9);
}

TEST_CASE("shape mismatch names the dimension") {
  auto inst = testing_support::random_instance(3);
  inst.inputs.weights.value = Matrix(inst.config.d_in + 1, inst.config.d_in);
  try {
    msdeform_attn_reference(inst.inputs, inst.config);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("W_V rows") != std::string::npos);
  }
}

TEST_CASE("fixed point fused BI equals the exact corner form") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int64_t> n(-2047, 2047);
  std::uniform_int_distribution<int64_t> t(0, 4095);
  for (int i = 0; i < 5000; ++i) {
    const int64_t n0 = n(rng), n1 = n(rng), n2 = n(rng), n3 = n(rng), t0 = t(rng), t1 = t(rng);
    const int64_t one = 4096;
    const int64_t corner = n0 * (one - t1) * (one - t0) + n1 * t1 * (one - t0) + n2 * (one - t1) * t0 + n3 * t1 * t0;
    CHECK(fused_bi_fixed(n0, n1, n2, n3, t0, t1, 12) == corner);
  }
}

TEST_CASE("quantized path with no pruning equals itself under explicit all-ones masks") {
  const auto inst = testing_support::random_instance(21);
  const auto& c = inst.config;
  const auto fmap = FmapMask::all_ones(c.level_shapes);
  const auto pts = PointMask::all_ones(c.num_queries(), c.num_heads, c.num_levels, c.num_points);
  const auto a = msdeform_attn_quantized(inst.inputs, c);
  const auto b = msdeform_attn_quantized(inst.inputs, c, {&fmap, &pts});
  CHECK(a.accumulators == b.accumulators);
}
