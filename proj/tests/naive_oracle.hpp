#pragma once

// Second, deliberately plain implementation of multi-scale deformable
// attention: nested loops over raw vectors, no library helpers beyond the
// config fields. Written to cross-check the library pipeline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Problem {
  int levels = 0;
  int points = 0;
  int heads = 0;
  int d = 0;
  std::vector<int> h;  // per level height
  std::vector<int> w;  // per level width
  std::vector<int> range_w;  // half sizes; ignored when narrowing is off
  std::vector<int> range_h;
  bool narrowing = true;
  bool offsets_in_pixels = true;
  std::vector<double> q;     // n x d
  std::vector<double> x;     // n x d
  std::vector<double> wa;    // d x heads*levels*points
  std::vector<double> wv;    // d x d
  std::vector<double> ws;    // d x 2*heads*levels*points
  std::vector<double> ref;   // n x levels x 2 (normalized x, y)
};

inline int total_pixels(const Problem& p) {
  int n = 0;
  for (int l = 0; l < p.levels; ++l) n += p.h[l] * p.w[l];
  return n;
}

inline std::vector<double> run(const Problem& p) {
  const int n = total_pixels(p);
  const int hp = p.heads * p.levels * p.points;
  const int dh = p.d / p.heads;

  std::vector<int> base(p.levels, 0);
  for (int l = 1; l < p.levels; ++l) base[l] = base[l - 1] + p.h[l - 1] * p.w[l - 1];

  std::vector<double> v(static_cast<std::size_t>(n) * p.d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p.d; ++j)
      for (int k = 0; k < p.d; ++k) v[i * p.d + j] += p.x[i * p.d + k] * p.wv[k * p.d + j];

  std::vector<double> out(static_cast<std::size_t>(n) * p.d, 0.0);
  for (int qi = 0; qi < n; ++qi) {
    for (int hh = 0; hh < p.heads; ++hh) {
      std::vector<double> logit(p.levels * p.points, 0.0);
      for (int l = 0; l < p.levels; ++l)
        for (int pt = 0; pt < p.points; ++pt)
          for (int k = 0; k < p.d; ++k)
            logit[l * p.points + pt] += p.q[qi * p.d + k] * p.wa[k * hp + (hh * p.levels + l) * p.points + pt];
      double m = logit[0];
      for (double z : logit) m = std::max(m, z);
      double sum = 0.0;
      for (double& z : logit) {
        z = std::exp(z - m);
        sum += z;
      }
      for (int l = 0; l < p.levels; ++l) {
        for (int pt = 0; pt < p.points; ++pt) {
          const double prob = logit[l * p.points + pt] / sum;
          double ox = 0.0, oy = 0.0;
          const int col = ((hh * p.levels + l) * p.points + pt) * 2;
          for (int k = 0; k < p.d; ++k) {
            ox += p.q[qi * p.d + k] * p.ws[k * 2 * hp + col];
            oy += p.q[qi * p.d + k] * p.ws[k * 2 * hp + col + 1];
          }
          if (!p.offsets_in_pixels) {
            ox *= p.w[l];
            oy *= p.h[l];
          }
          const double rx = p.ref[(qi * p.levels + l) * 2] * p.w[l] - 0.5;
          const double ry = p.ref[(qi * p.levels + l) * 2 + 1] * p.h[l] - 0.5;
          double sx = rx + ox;
          double sy = ry + oy;
          if (p.narrowing) {
            sx = std::min(std::max(sx, rx - p.range_w[l]), rx + p.range_w[l]);
            sy = std::min(std::max(sy, ry - p.range_h[l]), ry + p.range_h[l]);
            sx = std::min(std::max(sx, 0.0), p.w[l] - 1.0);
            sy = std::min(std::max(sy, 0.0), p.h[l] - 1.0);
          }
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          for (int c = 0; c < dh; ++c) {
            double s = 0.0;
            for (int dy = 0; dy <= 1; ++dy) {
              for (int dx = 0; dx <= 1; ++dx) {
                const int xx = x0 + dx;
                const int yy = y0 + dy;
                if (xx < 0 || yy < 0 || xx >= p.w[l] || yy >= p.h[l]) continue;
                const double wx = dx ? sx - x0 : 1.0 - (sx - x0);
                const double wy = dy ? sy - y0 : 1.0 - (sy - y0);
                s += wx * wy * v[(base[l] + yy * p.w[l] + xx) * p.d + hh * dh + c];
              }
            }
            out[qi * p.d + hh * dh + c] += prob * s;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace oracle
