#pragma once

// Straight-line reference implementations used only by tests. They work on
// plain row-major vectors and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Vec random_ints(std::mt19937_64& rng, std::size_t n, int lo, int hi) {
  std::uniform_int_distribution<int> dist(lo, hi);
  Vec v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// out[n,m] = a[n,k] b[k,m]
inline Vec matmul(const Vec& a, const Vec& b, std::size_t n, std::size_t k, std::size_t m) {
  Vec out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
      out[i * m + j] = s;
    }
  return out;
}

// Multi-head attention by explicit loops: for each head, query row and key
// row, exponentiate the scaled dot product and normalise by the row total.
inline Vec attention(const Vec& q, const Vec& k, const Vec& v, std::size_t n, std::size_t m,
                     std::size_t d, std::size_t heads) {
  const std::size_t dh = d / heads;
  Vec out(n * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      Vec logits(m);
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        logits[j] = s / std::sqrt(static_cast<double>(dh));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t c = 0; c < dh; ++c)
          out[i * d + h * dh + c] += logits[j] / z * v[j * d + h * dh + c];
    }
  }
  return out;
}

inline Vec softmax_rows(const Vec& a, std::size_t n, std::size_t m) {
  Vec out(a.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = a[i * m];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, a[i * m + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(a[i * m + j] - mx);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = std::exp(a[i * m + j] - mx) / z;
  }
  return out;
}

// Zero-padded cross-correlation, one output element at a time.
inline Vec conv2d(const Vec& x, std::size_t cin, std::size_t h, std::size_t w, const Vec& wt,
                  std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad,
                  const Vec* bias, std::size_t& oh, std::size_t& ow) {
  oh = (h + 2 * pad - k) / stride + 1;
  ow = (w + 2 * pad - k) / stride + 1;
  Vec out(cout * oh * ow, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double s = bias ? (*bias)[co] : 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = 0; b < k; ++b) {
              const long iy = static_cast<long>(y * stride + a) - static_cast<long>(pad);
              const long ix = static_cast<long>(xx * stride + b) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                continue;
              s += wt[((co * cin + ci) * k + a) * k + b] *
                   x[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
        out[(co * oh + y) * ow + xx] = s;
      }
  return out;
}

inline Vec gap(const Vec& x, std::size_t c, std::size_t h, std::size_t w) {
  Vec out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) s += x[(ch * h + y) * w + xx];
    out[ch] = s / static_cast<double>(h * w);
  }
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

// Adaptive average pooling with windows [floor(i*H/o), ceil((i+1)*H/o)).
inline Vec adaptive_pool(const Vec& x, std::size_t c, std::size_t h, std::size_t w, std::size_t oh,
                         std::size_t ow) {
  Vec out(c * oh * ow, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t y0 = i * h / oh, y1 = ((i + 1) * h + oh - 1) / oh;
        const std::size_t x0 = j * w / ow, x1 = ((j + 1) * w + ow - 1) / ow;
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t xx = x0; xx < x1; ++xx) s += x[(ch * h + y) * w + xx];
        out[(ch * oh + i) * ow + j] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
  return out;
}

// Per-site affine map: out[o, s] = b[o] + sum_i W[o, i] x[i, s].
inline Vec pointwise_affine(const Vec& x, std::size_t cin, std::size_t sites, const Vec& wt,
                            const Vec& b, std::size_t cout) {
  Vec out(cout * sites);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t s = 0; s < sites; ++s) {
      double acc = b[o];
      for (std::size_t i = 0; i < cin; ++i) acc += wt[o * cin + i] * x[i * sites + s];
      out[o * sites + s] = acc;
    }
  return out;
}

struct Map {
  Vec v;
  std::size_t c, h, w;
};

// Scale fusion in the textbook order: project every stage at full
// resolution, pool to the deepest grid, concatenate, 1x1 conv.
inline Vec fuse_scales(const std::vector<Map>& stages, const std::vector<Vec>& pw,
                       const std::vector<Vec>& pb, const Vec& fw, const Vec& fb, std::size_t d_o) {
  const std::size_t h = stages.back().h, w = stages.back().w;
  Vec cat;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    Vec proj = pointwise_affine(s.v, s.c, s.h * s.w, pw[i], pb[i], d_o);
    Vec pooled = adaptive_pool(proj, d_o, s.h, s.w, h, w);
    cat.insert(cat.end(), pooled.begin(), pooled.end());
  }
  return pointwise_affine(cat, stages.size() * d_o, h * w, fw, fb, d_o);
}

// Cross-view fusion written out step by step for three [D_o,H,W] maps.
inline Vec cross_view_fuse(const std::vector<Vec>& maps, std::size_t d_o, std::size_t h, std::size_t w,
                           const Vec& wd, const Vec& wu, std::size_t d_l, std::size_t heads) {
  Vec low(3 * d_l, 0.0);
  for (std::size_t j = 0; j < 3; ++j) {
    Vec f = gap(maps[j], d_o, h, w);
    for (std::size_t l = 0; l < d_l; ++l)
      for (std::size_t c = 0; c < d_o; ++c) low[j * d_l + l] += f[c] * wd[c * d_l + l];
  }
  Vec g = attention(low, low, low, 3, 3, d_l, heads);
  Vec u = matmul(g, wu, 3, d_l, d_o);
  Vec out(d_o * h * w, 0.0);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t c = 0; c < d_o; ++c)
      for (std::size_t s = 0; s < h * w; ++s) out[c * h * w + s] += maps[j][c * h * w + s] * u[j * d_o + c] / 3.0;
  return out;
}

// Task-token decoder: F given as [D_o, P] (channels by positions).
inline Vec decode(Vec t, std::size_t k, std::size_t d, const Vec& f, std::size_t positions,
                  std::size_t heads, std::size_t passes) {
  Vec kv(positions * d);
  for (std::size_t p = 0; p < positions; ++p)
    for (std::size_t c = 0; c < d; ++c) kv[p * d + c] = f[c * positions + p];
  for (std::size_t pass = 0; pass < passes; ++pass) {
    Vec self = attention(t, t, t, k, k, d, heads);
    t = attention(self, kv, kv, k, positions, d, heads);
  }
  return t;
}

// Three-layer perceptron on one row vector, GELU after the first two layers.
inline double head(const Vec& x, std::size_t d, const Vec& w1, const Vec& b1, const Vec& w2, const Vec& b2,
                   const Vec& w3, double b3, std::size_t hid) {
  Vec h1 = matmul(x, w1, 1, d, hid);
  for (std::size_t i = 0; i < hid; ++i) h1[i] = gelu(h1[i] + b1[i]);
  Vec h2 = matmul(h1, w2, 1, hid, hid);
  for (std::size_t i = 0; i < hid; ++i) h2[i] = gelu(h2[i] + b2[i]);
  return matmul(h2, w3, 1, hid, 1)[0] + b3;
}

// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline Vec count_ranks(const Vec& x) {
  Vec r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

// Two-pass covariance formula.
inline double pearson(const Vec& x, const Vec& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx) / std::sqrt(vy);
}

inline double spearman(const Vec& x, const Vec& y) { return pearson(count_ranks(x), count_ranks(y)); }

// Least squares through the normal equations X^T X b = X^T y, solved by
// Gaussian elimination with partial pivoting. x is rows x cols, row-major.
inline Vec normal_equations(const Vec& x, const Vec& y, std::size_t rows, std::size_t cols) {
  Vec a(cols * (cols + 1), 0.0);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t r = 0; r < rows; ++r) a[i * (cols + 1) + j] += x[r * cols + i] * x[r * cols + j];
    for (std::size_t r = 0; r < rows; ++r) a[i * (cols + 1) + cols] += x[r * cols + i] * y[r];
  }
  const std::size_t w = cols + 1;
  for (std::size_t c = 0; c < cols; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < cols; ++r)
      if (std::abs(a[r * w + c]) > std::abs(a[p * w + c])) p = r;
    for (std::size_t j = 0; j < w; ++j) std::swap(a[c * w + j], a[p * w + j]);
    for (std::size_t r = c + 1; r < cols; ++r) {
      const double f = a[r * w + c] / a[c * w + c];
      for (std::size_t j = c; j < w; ++j) a[r * w + j] -= f * a[c * w + j];
    }
  }
  Vec b(cols);
  for (std::size_t c = cols; c-- > 0;) {
    double s = a[c * w + cols];
    for (std::size_t j = c + 1; j < cols; ++j) s -= a[c * w + j] * b[j];
    b[c] = s / a[c * w + c];
  }
  return b;
}

}  // namespace oracle
