#include "defa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

namespace defa {

MultiScaleLayout::MultiScaleLayout(std::vector<LevelShape> shapes) : shapes_(std::move(shapes)) {
  offsets_.reserve(shapes_.size());
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const auto& s = shapes_[l];
    if (s.height < 1 || s.width < 1) {
      throw std::invalid_argument(fmt::format("level {} has non-positive shape {}x{}", l, s.height, s.width));
    }
    offsets_.push_back(total_);
    total_ += s.area();
  }
}

bool MultiScaleLayout::contains(int level, int y, int x) const {
  if (level < 0 || static_cast<std::size_t>(level) >= shapes_.size()) return false;
  const auto& s = shapes_[level];
  return y >= 0 && y < s.height && x >= 0 && x < s.width;
}

std::size_t MultiScaleLayout::flat_index(int level, int y, int x) const {
  if (!contains(level, y, x)) {
    throw std::out_of_range(fmt::format("pixel (level {}, y {}, x {}) outside layout", level, y, x));
  }
  return offsets_[level] + static_cast<std::size_t>(y) * shapes_[level].width + static_cast<std::size_t>(x);
}

PixelCoord MultiScaleLayout::locate(std::size_t flat) const {
  if (flat >= total_) throw std::out_of_range(fmt::format("flat index {} >= {}", flat, total_));
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
  const auto level = static_cast<std::size_t>(std::distance(offsets_.begin(), it) - 1);
  const std::size_t local = flat - offsets_[level];
  const auto w = static_cast<std::size_t>(shapes_[level].width);
  return {static_cast<int>(level), static_cast<int>(local / w), static_cast<int>(local % w)};
}

std::size_t flat_index(int level, int y, int x, std::span<const LevelShape> shapes) {
  return MultiScaleLayout({shapes.begin(), shapes.end()}).flat_index(level, y, x);
}

PixelCoord unflatten_index(std::size_t flat, std::span<const LevelShape> shapes) {
  return MultiScaleLayout({shapes.begin(), shapes.end()}).locate(flat);
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument(fmt::format("matmul inner dimension mismatch: {} vs {}", a.cols, b.rows));
  }
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += av * b(k, j);
    }
  }
  return out;
}

QuantTensor quantize(std::span<const double> tensor, std::vector<std::size_t> shape, int bits) {
  if (bits < 4 || bits > 16) throw std::invalid_argument(fmt::format("quantization bits {} outside [4, 16]", bits));
  std::size_t count = 1;
  for (auto n : shape) count *= n;
  if (count != tensor.size()) {
    throw std::invalid_argument(fmt::format("shape holds {} elements, tensor has {}", count, tensor.size()));
  }
  double max_abs = 0.0;
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    if (!std::isfinite(tensor[i])) {
      throw std::invalid_argument(fmt::format("non-finite value {} at element {}", tensor[i], i));
    }
    max_abs = std::max(max_abs, std::abs(tensor[i]));
  }
  QuantTensor q;
  q.bits = bits;
  q.shape = std::move(shape);
  const int32_t hi = q.max_code();
  const int32_t lo = q.min_code();
  q.scale = max_abs > 0.0 ? max_abs / hi : 1.0;
  q.values.resize(tensor.size());
  // nearbyint honours the default FE_TONEAREST mode: ties go to even.
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    const double r = std::nearbyint(tensor[i] / q.scale);
    q.values[i] = static_cast<int32_t>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
  }
  return q;
}

QuantTensor quantize(const Matrix& m, int bits) { return quantize(m.data, {m.rows, m.cols}, bits); }

std::vector<double> dequantize(const QuantTensor& q) {
  std::vector<double> out(q.values.size());
  for (std::size_t i = 0; i < q.values.size(); ++i) out[i] = q.values[i] * q.scale;
  return out;
}

std::size_t ModelConfig::num_queries() const {
  std::size_t n = 0;
  for (const auto& s : level_shapes) n += s.area();
  return n;
}

std::vector<BoundedRange> default_bounded_ranges(std::span<const LevelShape> shapes) {
  std::vector<BoundedRange> ranges;
  ranges.reserve(shapes.size());
  // ceil(dim / 8), capped so the range window still fits a tiny level
  auto half = [](int dim) { return std::min((dim + 7) / 8, (dim - 1) / 2); };
  for (const auto& s : shapes) ranges.push_back({half(s.width), half(s.height)});
  return ranges;
}

void ModelConfig::apply_default_ranges() {
  if (bounded_ranges.empty()) bounded_ranges = default_bounded_ranges(level_shapes);
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (num_levels < 1) fail(fmt::format("num_levels must be positive, got {}", num_levels));
  if (num_points < 1) fail(fmt::format("num_points must be positive, got {}", num_points));
  if (num_heads < 1) fail(fmt::format("num_heads must be positive, got {}", num_heads));
  if (d_in < 1) fail(fmt::format("d_in must be positive, got {}", d_in));
  if (d_in % num_heads != 0) fail(fmt::format("d_in {} not divisible by num_heads {}", d_in, num_heads));
  if (level_shapes.size() != static_cast<std::size_t>(num_levels)) {
    fail(fmt::format("level_shapes has {} entries, num_levels is {}", level_shapes.size(), num_levels));
  }
  for (std::size_t l = 0; l < level_shapes.size(); ++l) {
    if (level_shapes[l].height < 1 || level_shapes[l].width < 1) {
      fail(fmt::format("level {} shape {}x{} not positive", l, level_shapes[l].height, level_shapes[l].width));
    }
  }
  if (quant_bits < 4 || quant_bits > 16) fail(fmt::format("quant_bits {} outside [4, 16]", quant_bits));
  if (!(fwp_k >= 0.0) || !std::isfinite(fwp_k)) fail(fmt::format("fwp_k must be finite and >= 0, got {}", fwp_k));
  if (!(pap_epsilon >= 0.0 && pap_epsilon < 1.0)) fail(fmt::format("pap_epsilon {} outside [0, 1)", pap_epsilon));
  if (range_narrowing) {
    if (bounded_ranges.size() != level_shapes.size()) {
      fail(fmt::format("bounded_ranges has {} entries, expected {}", bounded_ranges.size(), level_shapes.size()));
    }
    for (std::size_t l = 0; l < bounded_ranges.size(); ++l) {
      const auto& r = bounded_ranges[l];
      const auto& s = level_shapes[l];
      if (r.half_width < 0 || r.half_height < 0 || 2 * r.half_width + 1 > s.width ||
          2 * r.half_height + 1 > s.height) {
        fail(fmt::format("bounded range {}x{} (half sizes) does not fit level {} of {}x{}", r.half_width,
                         r.half_height, l, s.height, s.width));
      }
    }
  }
}

}  // namespace defa
