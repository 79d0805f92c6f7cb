#include "faceqa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace faceqa::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(a.shape()));
  }
}

// Gradient buffer of an input, or nullptr when it does not want one.
double* grad_of(const Tensor& t) {
  return t.requires_grad() ? t.impl()->grad_buffer().data() : nullptr;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    for (auto* g : {grad_of(a), grad_of(b)}) {
      if (!g) continue;
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
    if (auto* g = grad_of(b))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [a, b](const TensorImpl& o) {
    auto x = a.data(), y = b.data();
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * y[i];
    if (auto* g = grad_of(b))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * x[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [a, factor](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + value;
  return make_result(a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor log(const Tensor& a) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0)) throw NumericalError("log", "non-positive input");
    out[i] = std::log(x[i]);
  }
  return make_result(a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
    if (auto* g = grad_of(a)) {
      auto x = a.data();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / x[i];
    }
  });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (bias.numel() != d) {
    throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " vs rows of width " +
                         std::to_string(d));
  }
  auto xv = x.data(), bv = bias.data();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
  return make_result(x.shape(), std::move(out), {x, bias}, [x, bias, n, d](const TensorImpl& o) {
    if (auto* g = grad_of(x))
      for (std::size_t i = 0; i < n * d; ++i) g[i] += o.grad[i];
    if (auto* g = grad_of(bias))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result(Shape{1}, {s}, {a}, [a](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < a.numel(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " @ " +
                         shape_str(b.shape()));
  }
  auto av = a.data(), bv = b.data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result(Shape{n, m}, std::move(out), {a, b}, [a, b, n, k, m](const TensorImpl& o) {
    auto av = a.data(), bv = b.data();
    const auto& go = o.grad;
    if (auto* ga = grad_of(a)) {
      // dA = dO @ B^T
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += go[i * m + j] * bv[p * m + j];
          ga[i * k + p] += s;
        }
    }
    if (auto* gb = grad_of(b)) {
      // dB = A^T @ dO
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += aip * go[i * m + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t n = a.dim(0), m = a.dim(1);
  auto av = a.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
  return make_result(Shape{m, n}, std::move(out), {a}, [a, n, m](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) g[i * m + j] += o.grad[j * n + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [a](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (count == 0 || start + count > d) throw DimensionError("slice_cols: range out of bounds");
  auto av = a.data();
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = av[i * d + start + j];
  return make_result(Shape{n, count}, std::move(out), {a},
                     [a, n, d, start, count](const TensorImpl& o) {
                       if (auto* g = grad_of(a))
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < count; ++j)
                             g[i * d + start + j] += o.grad[i * count + j];
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().dim(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != n) throw DimensionError("concat_cols: row counts differ");
    total += p.dim(1);
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    auto pv = p.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + offset + j] = pv[i * w + j];
    offset += w;
  }
  return make_result(Shape{n, total}, std::move(out), parts, [parts, n, total](const TensorImpl& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.dim(1);
      if (auto* g = grad_of(p))
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o.grad[i * total + offset + j];
      offset += w;
    }
  });
}

Tensor row(const Tensor& a, std::size_t i) {
  require_rank(a, 2, "row");
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (i >= n) throw DimensionError("row: index out of range");
  auto av = a.data();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(i * d),
                          av.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  return make_result(Shape{1, d}, std::move(out), {a}, [a, i, d](const TensorImpl& o) {
    if (auto* g = grad_of(a))
      for (std::size_t j = 0; j < d; ++j) g[i * d + j] += o.grad[j];
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t d = rows.front().numel();
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.numel() != d) throw DimensionError("stack_rows: rows of unequal width");
    out.insert(out.end(), r.data().begin(), r.data().end());
  }
  return make_result(Shape{rows.size(), d}, std::move(out), rows, [rows, d](const TensorImpl& o) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (auto* g = grad_of(rows[i]))
        for (std::size_t j = 0; j < d; ++j) g[j] += o.grad[i * d + j];
  });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const std::size_t h = parts.front().dim(1), w = parts.front().dim(2);
  std::size_t channels = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_rank(p, 3, "concat_channels");
    if (p.dim(1) != h || p.dim(2) != w) {
      throw DimensionError("concat_channels: spatial sizes differ " + shape_str(p.shape()));
    }
    channels += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result(Shape{channels, h, w}, std::move(out), parts, [parts](const TensorImpl& o) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.numel();
      if (auto* g = grad_of(p))
        for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offset + i];
      offset += len;
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t n = a.dim(0), m = a.dim(1);
  auto av = a.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* in = &av[i * m];
    double* dst = &out[i * m];
    const double mx = *std::max_element(in, in + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      dst[j] = std::exp(in[j] - mx);
      z += dst[j];
    }
    for (std::size_t j = 0; j < m; ++j) dst[j] /= z;
  }
  return make_result(Shape{n, m}, std::move(out), {a}, [a, n, m](const TensorImpl& o) {
    auto* g = grad_of(a);
    if (!g) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double* y = &o.data[i * m];
      const double* gy = &o.grad[i * m];
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < m; ++j) g[i * m + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor gelu(const Tensor& a) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * std::numbers::sqrt2 / 2.0));
  }
  return make_result(a.shape(), std::move(out), {a}, [a](const TensorImpl& o) {
    auto* g = grad_of(a);
    if (!g) return;
    auto av = a.data();
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      g[i] += o.grad[i] * (cdf + x * pdf);
    }
  });
}

namespace {

// Output positions o in [lo, hi) for which o*stride + tap - pad lands in [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out_extent, std::size_t extent,
                                                std::size_t stride, std::size_t tap,
                                                std::size_t pad) {
  std::size_t lo = 0;
  if (pad > tap) lo = (pad - tap + stride - 1) / stride;
  // need o*stride + tap - pad <= extent - 1
  const std::ptrdiff_t lim = static_cast<std::ptrdiff_t>(extent) - 1 +
                             static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(tap);
  if (lim < 0) return {0, 0};
  std::size_t hi = std::min(out_extent, static_cast<std::size_t>(lim) / stride + 1);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw DimensionError("conv2d: weight " + shape_str(weight.shape()) + " expects " +
                         std::to_string(weight.dim(1)) + " input channels, got " +
                         std::to_string(cin));
  }
  if (weight.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                         shape_str(x.shape()));
  }
  if (bias.defined() && bias.numel() != cout) throw DimensionError("conv2d: bias size mismatch");
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;

  auto xv = x.data(), wv = weight.data();
  std::vector<double> out(cout * oh * ow, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    double* dst = &out[co * oh * ow];
    if (bias.defined()) std::fill(dst, dst + oh * ow, bias.data()[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* src = &xv[ci * h * w];
      for (std::size_t kh = 0; kh < k; ++kh) {
        const auto [y0, y1] = valid_range(oh, h, stride, kh, padding);
        for (std::size_t kw = 0; kw < k; ++kw) {
          const auto [x0, x1] = valid_range(ow, w, stride, kw, padding);
          const double wt = wv[((co * cin + ci) * k + kh) * k + kw];
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const double* srow = src + (oy * stride + kh - padding) * w;
            double* drow = dst + oy * ow;
            for (std::size_t ox = x0; ox < x1; ++ox) drow[ox] += wt * srow[ox * stride + kw - padding];
          }
        }
      }
    }
  }

  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      Shape{cout, oh, ow}, std::move(out), std::move(inputs),
      [x, weight, bias, cin, cout, h, w, k, oh, ow, stride, padding](const TensorImpl& o) {
        auto xv = x.data(), wv = weight.data();
        double* gx = grad_of(x);
        double* gw = grad_of(weight);
        double* gb = bias.defined() ? grad_of(bias) : nullptr;
        for (std::size_t co = 0; co < cout; ++co) {
          const double* go = &o.grad[co * oh * ow];
          if (gb)
            for (std::size_t i = 0; i < oh * ow; ++i) gb[co] += go[i];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double* src = &xv[ci * h * w];
            double* gsrc = gx ? gx + ci * h * w : nullptr;
            for (std::size_t kh = 0; kh < k; ++kh) {
              const auto [y0, y1] = valid_range(oh, h, stride, kh, padding);
              for (std::size_t kw = 0; kw < k; ++kw) {
                const auto [x0, x1] = valid_range(ow, w, stride, kw, padding);
                const std::size_t widx = ((co * cin + ci) * k + kh) * k + kw;
                const double wt = wv[widx];
                double acc = 0.0;
                for (std::size_t oy = y0; oy < y1; ++oy) {
                  const std::size_t iy = oy * stride + kh - padding;
                  const double* grow = go + oy * ow;
                  const double* srow = src + iy * w;
                  for (std::size_t ox = x0; ox < x1; ++ox) {
                    const std::size_t ix = ox * stride + kw - padding;
                    acc += grow[ox] * srow[ix];
                    if (gsrc) gsrc[iy * w + ix] += wt * grow[ox];
                  }
                }
                if (gw) gw[widx] += acc;
              }
            }
          }
        }
      });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, std::size_t stride, std::size_t padding) {
  return conv2d(x, weight, Tensor{}, stride, padding);
}

Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 3, "adaptive_avg_pool2d");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
    throw DimensionError("adaptive_avg_pool2d: cannot pool " + shape_str(x.shape()) + " to " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  auto bounds = [](std::size_t i, std::size_t in, std::size_t out) {
    return std::pair{i * in / out, ((i + 1) * in + out - 1) / out};
  };
  auto xv = x.data();
  std::vector<double> out(c * out_h * out_w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto [ya, yb] = bounds(oy, h, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto [xa, xb] = bounds(ox, w, out_w);
        double s = 0.0;
        for (std::size_t y = ya; y < yb; ++y)
          for (std::size_t xx = xa; xx < xb; ++xx) s += xv[(ch * h + y) * w + xx];
        out[(ch * out_h + oy) * out_w + ox] = s / static_cast<double>((yb - ya) * (xb - xa));
      }
    }
  return make_result(Shape{c, out_h, out_w}, std::move(out), {x},
                     [x, c, h, w, out_h, out_w, bounds](const TensorImpl& o) {
                       auto* g = grad_of(x);
                       if (!g) return;
                       for (std::size_t ch = 0; ch < c; ++ch)
                         for (std::size_t oy = 0; oy < out_h; ++oy) {
                           const auto [ya, yb] = bounds(oy, h, out_h);
                           for (std::size_t ox = 0; ox < out_w; ++ox) {
                             const auto [xa, xb] = bounds(ox, w, out_w);
                             const double share = o.grad[(ch * out_h + oy) * out_w + ox] /
                                                  static_cast<double>((yb - ya) * (xb - xa));
                             for (std::size_t y = ya; y < yb; ++y)
                               for (std::size_t xx = xa; xx < xb; ++xx)
                                 g[(ch * h + y) * w + xx] += share;
                           }
                         }
                     });
}

Tensor global_average_pool(const Tensor& x) {
  require_rank(x, 3, "global_average_pool");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  auto xv = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += xv[ch * hw + i];
    out[ch] = s / static_cast<double>(hw);
  }
  return make_result(Shape{c}, std::move(out), {x}, [x, c, hw](const TensorImpl& o) {
    if (auto* g = grad_of(x))
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double share = o.grad[ch] / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) g[ch * hw + i] += share;
      }
  });
}

Tensor channel_scale(const Tensor& x, const Tensor& s) {
  require_rank(x, 3, "channel_scale");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  if (s.numel() != c) {
    throw DimensionError("channel_scale: " + std::to_string(s.numel()) + " scales for " +
                         std::to_string(c) + " channels");
  }
  auto xv = x.data(), sv = s.data();
  std::vector<double> out(c * hw);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] * sv[ch];
  return make_result(x.shape(), std::move(out), {x, s}, [x, s, c, hw](const TensorImpl& o) {
    auto xv = x.data(), sv = s.data();
    auto* gx = grad_of(x);
    auto* gs = grad_of(s);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) {
        const double go = o.grad[ch * hw + i];
        if (gx) gx[ch * hw + i] += go * sv[ch];
        acc += go * xv[ch * hw + i];
      }
      if (gs) gs[ch] += acc;
    }
  });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads) {
  require_rank(q, 2, "attention");
  require_rank(k, 2, "attention");
  require_rank(v, 2, "attention");
  const std::size_t d = q.dim(1);
  if (k.dim(1) != d || v.dim(1) != d) {
    throw DimensionError("attention: feature widths differ Q" + shape_str(q.shape()) + " K" +
                         shape_str(k.shape()) + " V" + shape_str(v.shape()));
  }
  if (k.dim(0) != v.dim(0)) throw DimensionError("attention: K and V have different lengths");
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(d));
  }
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto head = [&](const Tensor& qh, const Tensor& kh, const Tensor& vh) {
    return matmul(softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale)), vh);
  };
  if (heads == 1) return head(q, k, v);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t hi = 0; hi < heads; ++hi) {
    outs.push_back(head(slice_cols(q, hi * dh, dh), slice_cols(k, hi * dh, dh),
                        slice_cols(v, hi * dh, dh)));
  }
  return concat_cols(outs);
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.numel() != target.numel()) {
    throw DimensionError("mse_loss: " + shape_str(prediction.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  if (!all_finite(prediction.data())) throw NumericalError("prediction", "non-finite value in loss");
  if (!all_finite(target.data())) throw NumericalError("target", "non-finite value in loss");
  auto p = prediction.data(), t = target.data();
  const double n = static_cast<double>(p.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  Tensor tc = target.detach();
  return make_result(Shape{1}, {s / n}, {prediction}, [prediction, tc, n](const TensorImpl& o) {
    auto* g = grad_of(prediction);
    if (!g) return;
    auto p = prediction.data(), t = tc.data();
    for (std::size_t i = 0; i < p.size(); ++i) g[i] += o.grad[0] * 2.0 * (p[i] - t[i]) / n;
  });
}

}  // namespace faceqa::ops
