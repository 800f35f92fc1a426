#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace defa {

struct LevelShape {
  int height = 0;
  int width = 0;

  std::size_t area() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  bool operator==(const LevelShape&) const = default;
};

struct PixelCoord {
  int level = 0;
  int y = 0;
  int x = 0;
  bool operator==(const PixelCoord&) const = default;
};

// Level-major, row-major flattening of a multi-scale feature map.
class MultiScaleLayout {
 public:
  MultiScaleLayout() = default;
  explicit MultiScaleLayout(std::vector<LevelShape> shapes);

  std::size_t num_levels() const { return shapes_.size(); }
  const LevelShape& shape(std::size_t level) const { return shapes_.at(level); }
  const std::vector<LevelShape>& shapes() const { return shapes_; }
  std::size_t offset(std::size_t level) const { return offsets_.at(level); }
  std::size_t total_pixels() const { return total_; }

  std::size_t flat_index(int level, int y, int x) const;
  PixelCoord locate(std::size_t flat) const;
  bool contains(int level, int y, int x) const;

 private:
  std::vector<LevelShape> shapes_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

std::size_t flat_index(int level, int y, int x, std::span<const LevelShape> shapes);
PixelCoord unflatten_index(std::size_t flat, std::span<const LevelShape> shapes);

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  static Matrix identity(std::size_t n);
  bool operator==(const Matrix&) const = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);

struct QuantTensor {
  std::vector<int32_t> values;
  double scale = 1.0;
  std::vector<std::size_t> shape;
  int bits = 12;

  int32_t max_code() const { return (int32_t{1} << (bits - 1)) - 1; }
  int32_t min_code() const { return -(int32_t{1} << (bits - 1)); }
  bool operator==(const QuantTensor&) const = default;
};

// Per-tensor symmetric quantization, round-half-to-even, saturating.
QuantTensor quantize(std::span<const double> tensor, std::vector<std::size_t> shape, int bits);
QuantTensor quantize(const Matrix& m, int bits);
std::vector<double> dequantize(const QuantTensor& q);

struct BoundedRange {
  int half_width = 0;
  int half_height = 0;
  bool operator==(const BoundedRange&) const = default;
};

struct ModelConfig {
  int num_levels = 4;
  int num_points = 4;
  int num_heads = 8;
  int d_in = 256;
  std::vector<LevelShape> level_shapes;
  int quant_bits = 12;
  std::vector<BoundedRange> bounded_ranges;
  bool range_narrowing = true;
  bool offsets_in_pixels = true;
  double fwp_k = 0.0;
  double pap_epsilon = 1e-2;

  int head_dim() const { return d_in / num_heads; }
  int points_per_head() const { return num_levels * num_points; }
  std::size_t num_queries() const;
  MultiScaleLayout layout() const { return MultiScaleLayout(level_shapes); }

  // Fills empty bounded_ranges with ceil(dim / 8) per axis.
  void apply_default_ranges();
  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

std::vector<BoundedRange> default_bounded_ranges(std::span<const LevelShape> shapes);

}  // namespace defa
