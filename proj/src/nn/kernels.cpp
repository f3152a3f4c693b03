#include "longiseg/nn/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace longiseg::nn::kernels {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha,
              a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha,
              a, lda, b, ldb, beta, c, ldc);
}

namespace {

template <typename T>
std::vector<T>& scratch(std::size_t n, int slot) {
  thread_local std::vector<T> buffers[3];
  auto& buf = buffers[slot];
  if (buf.size() < n) buf.resize(n);
  return buf;
}

template <typename T>
void add_bias(T* y, const T* bias, int channels, std::size_t plane) {
  if (!bias) return;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T* p = y + c * plane;
    const T b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

template <typename T>
void bias_grad(const T* dy, int channels, std::size_t plane, T* dbias) {
  if (!dbias) return;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const T* p = dy + c * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    dbias[c] += static_cast<T>(s);
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

template <typename T>
void im2col(const T* image, int channels, int h, int w, const ConvGeometry& g, T* col) {
  const int oh = g.out_size(h), ow = g.out_size(w);
  const int kk = g.kernel * g.kernel;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    const T* src = image + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        T* dst = col + (static_cast<std::size_t>(c) * kk + ki * g.kernel + kj) * out_plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ki;
          T* row = dst + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + ow, T{});
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kj;
            row[x] = (ix >= 0 && ix < w) ? srow[ix] : T{};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, const ConvGeometry& g, T* image) {
  const int oh = g.out_size(h), ow = g.out_size(w);
  const int kk = g.kernel * g.kernel;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels; ++c) {
    T* dst = image + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const T* src = col + (static_cast<std::size_t>(c) * kk + ki * g.kernel + kj) * out_plane;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ki;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + static_cast<std::size_t>(y) * ow;
          T* drow = dst + static_cast<std::size_t>(iy) * w;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * g.stride - g.pad + kj;
            if (ix >= 0 && ix < w) drow[ix] += row[x];
          }
        }
      }
    }
  }
}

namespace {

// Output pixels per im2row tile. Keeps the tile buffer near L2 size for typical channel counts.
constexpr int kTilePixels = 2048;

// Pixel-major patch matrix for output rows [y0, y1): one row of c*k*k values per output pixel.
template <typename T>
void im2row(const T* image, int channels, int h, int w, const ConvGeometry& g, int y0, int y1, T* rows) {
  const int ow = g.out_size(w);
  const int k = g.kernel;
  const int ckk = channels * k * k;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
  for (int y = y0; y < y1; ++y) {
    const int iy0 = y * g.stride - g.pad;
    const bool rows_inside = iy0 >= 0 && iy0 + k <= h;
    for (int x = 0; x < ow; ++x) {
      T* r = rows + (static_cast<std::size_t>(y - y0) * ow + x) * ckk;
      const int ix0 = x * g.stride - g.pad;
      if (rows_inside && ix0 >= 0 && ix0 + k <= w) {
        const T* src = image + static_cast<std::size_t>(iy0) * w + ix0;
        if (k == 3) {
          for (int c = 0; c < channels; ++c, src += plane, r += 9) {
            r[0] = src[0], r[1] = src[1], r[2] = src[2];
            r[3] = src[w], r[4] = src[w + 1], r[5] = src[w + 2];
            r[6] = src[2 * w], r[7] = src[2 * w + 1], r[8] = src[2 * w + 2];
          }
        } else {
          for (int c = 0; c < channels; ++c, src += plane)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) *r++ = src[ki * w + kj];
        }
        continue;
      }
      for (int c = 0; c < channels; ++c) {
        const T* src = image + c * plane;
        for (int ki = 0; ki < k; ++ki) {
          const int iy = iy0 + ki;
          for (int kj = 0; kj < k; ++kj) {
            const int ix = ix0 + kj;
            *r++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[iy * w + ix] : T{};
          }
        }
      }
    }
  }
}

template <typename T>
void row2im_add(const T* rows, int channels, int h, int w, const ConvGeometry& g, int y0, int y1, T* image) {
  const int ow = g.out_size(w);
  const int k = g.kernel;
  const int ckk = channels * k * k;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  constexpr int kBlock = 8;
  const int blocks = (channels + kBlock - 1) / kBlock;
  // Channel blocks touch disjoint image planes, so they parallelise without races.
#pragma omp parallel for schedule(static)
  for (int blk = 0; blk < blocks; ++blk) {
    const int c0 = blk * kBlock, c1 = std::min(channels, c0 + kBlock);
    for (int y = y0; y < y1; ++y) {
      const int iy0 = y * g.stride - g.pad;
      for (int x = 0; x < ow; ++x) {
        const T* r = rows + (static_cast<std::size_t>(y - y0) * ow + x) * ckk + c0 * k * k;
        const int ix0 = x * g.stride - g.pad;
        const bool inside = iy0 >= 0 && iy0 + k <= h && ix0 >= 0 && ix0 + k <= w;
        for (int c = c0; c < c1; ++c) {
          T* dst = image + c * plane;
          for (int ki = 0; ki < k; ++ki) {
            const int iy = iy0 + ki;
            for (int kj = 0; kj < k; ++kj, ++r) {
              const int ix = ix0 + kj;
              if (inside || (iy >= 0 && iy < h && ix >= 0 && ix < w)) dst[iy * w + ix] += *r;
            }
          }
        }
      }
    }
  }
}

int tile_rows(int ow) { return std::max(1, kTilePixels / std::max(1, ow)); }

}  // namespace

namespace {

// Patch-matrix convolution for non-pointwise kernels; accumulates into y when asked.
template <typename T>
void conv_rows(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y, bool accumulate) {
  const int ckk = x.c * g.kernel * g.kernel;
  const int step = tile_rows(y.w);
  auto& rows = scratch<T>(static_cast<std::size_t>(step) * y.w * ckk, 0);
  auto& out = scratch<T>(static_cast<std::size_t>(step) * y.w * y.c, 1);
  for (int b = 0; b < x.n; ++b) {
    for (int y0 = 0; y0 < y.h; y0 += step) {
      const int y1 = std::min(y.h, y0 + step);
      const int np = (y1 - y0) * y.w;
      im2row(x.item(b), x.c, x.h, x.w, g, y0, y1, rows.data());
      gemm(false, true, np, y.c, ckk, T{1}, rows.data(), ckk, weight, ckk, T{0}, out.data(), y.c);
      const std::size_t offset = static_cast<std::size_t>(y0) * y.w;
#pragma omp parallel for schedule(static)
      for (int co = 0; co < y.c; ++co) {
        T* dst = y.channel(b, co) + offset;
        const T bv = bias ? bias[co] : T{};
        const T* src = out.data() + co;
        if (accumulate) {
          for (int p = 0; p < np; ++p) dst[p] += src[static_cast<std::size_t>(p) * y.c] + bv;
        } else {
          for (int p = 0; p < np; ++p) dst[p] = src[static_cast<std::size_t>(p) * y.c] + bv;
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y) {
  const int ckk = x.c * g.kernel * g.kernel;
  const int out_plane = y.h * y.w;
  if (!is_pointwise(g)) {
    conv_rows(x, weight, bias, g, y, false);
    return;
  }
  for (int b = 0; b < x.n; ++b) {
    gemm(false, false, y.c, out_plane, ckk, T{1}, weight, ckk, x.item(b), out_plane, T{0}, y.item(b), out_plane);
    add_bias(y.item(b), bias, y.c, y.plane());
  }
}

template <typename T>
void conv2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g, View<T> dx,
                     T* dweight, T* dbias) {
  const int k = g.kernel;
  const int ckk = x.c * k * k;
  const int out_plane = dy.h * dy.w;
  if (is_pointwise(g)) {
    for (int b = 0; b < x.n; ++b) {
      gemm(false, true, dy.c, ckk, out_plane, T{1}, dy.item(b), out_plane, x.item(b), out_plane, T{1}, dweight, ckk);
      bias_grad(dy.item(b), dy.c, dy.plane(), dbias);
      if (dx.data) {
        gemm(true, false, ckk, out_plane, dy.c, T{1}, weight, ckk, dy.item(b), out_plane, T{1}, dx.item(b),
             out_plane);
      }
    }
    return;
  }
  const int step = tile_rows(dy.w);
  const std::size_t tile = static_cast<std::size_t>(step) * dy.w;
  auto& rows = scratch<T>(tile * ckk, 0);
  auto& dyt = scratch<T>(tile * dy.c, 1);
  for (int b = 0; b < x.n; ++b) {
    bias_grad(dy.item(b), dy.c, dy.plane(), dbias);
    for (int y0 = 0; y0 < dy.h; y0 += step) {
      const int y1 = std::min(dy.h, y0 + step);
      const int np = (y1 - y0) * dy.w;
      const std::size_t offset = static_cast<std::size_t>(y0) * dy.w;
      for (int co = 0; co < dy.c; ++co) {
        const T* src = dy.channel(b, co) + offset;
        for (int p = 0; p < np; ++p) dyt[static_cast<std::size_t>(p) * dy.c + co] = src[p];
      }
      im2row(x.item(b), x.c, x.h, x.w, g, y0, y1, rows.data());
      gemm(true, false, dy.c, ckk, np, T{1}, dyt.data(), dy.c, rows.data(), ckk, T{1}, dweight, ckk);
    }
  }
  if (!dx.data) return;

  if (g.stride == 1 && 2 * g.pad == k - 1) {
    // Same-size stride-1 case: dx is dy convolved with the flipped, in/out-swapped kernel.
    std::vector<T> flipped(static_cast<std::size_t>(dy.c) * ckk);
    for (int co = 0; co < dy.c; ++co)
      for (int ci = 0; ci < x.c; ++ci)
        for (int ki = 0; ki < k; ++ki)
          for (int kj = 0; kj < k; ++kj) {
            flipped[((static_cast<std::size_t>(ci) * dy.c + co) * k + (k - 1 - ki)) * k + (k - 1 - kj)] =
                weight[((static_cast<std::size_t>(co) * x.c + ci) * k + ki) * k + kj];
          }
    conv_rows<T>(dy, flipped.data(), nullptr, g, dx, true);
    return;
  }

  auto& drows = scratch<T>(tile * ckk, 2);
  for (int b = 0; b < x.n; ++b) {
    for (int y0 = 0; y0 < dy.h; y0 += step) {
      const int y1 = std::min(dy.h, y0 + step);
      const int np = (y1 - y0) * dy.w;
      const std::size_t offset = static_cast<std::size_t>(y0) * dy.w;
      for (int co = 0; co < dy.c; ++co) {
        const T* src = dy.channel(b, co) + offset;
        for (int p = 0; p < np; ++p) dyt[static_cast<std::size_t>(p) * dy.c + co] = src[p];
      }
      gemm(false, false, np, ckk, dy.c, T{1}, dyt.data(), dy.c, weight, ckk, T{0}, drows.data(), ckk);
      row2im_add(drows.data(), dx.c, dx.h, dx.w, g, y0, y1, dx.item(b));
    }
  }
}

template <typename T>
void conv_transpose2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y) {
  const int okk = y.c * g.kernel * g.kernel;
  const int in_plane = x.h * x.w;
  auto& col = scratch<T>(static_cast<std::size_t>(okk) * in_plane, 0);
  for (int b = 0; b < x.n; ++b) {
    gemm(true, false, okk, in_plane, x.c, T{1}, weight, okk, x.item(b), in_plane, T{0}, col.data(), in_plane);
    std::fill(y.item(b), y.item(b) + y.c * y.plane(), T{});
    col2im_add(col.data(), y.c, y.h, y.w, g, y.item(b));
    add_bias(y.item(b), bias, y.c, y.plane());
  }
}

template <typename T>
void conv_transpose2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g,
                               View<T> dx, T* dweight, T* dbias) {
  const int okk = dy.c * g.kernel * g.kernel;
  const int in_plane = x.h * x.w;
  auto& dcol = scratch<T>(static_cast<std::size_t>(okk) * in_plane, 0);
  for (int b = 0; b < x.n; ++b) {
    im2col(dy.item(b), dy.c, dy.h, dy.w, g, dcol.data());
    gemm(false, true, x.c, okk, in_plane, T{1}, x.item(b), in_plane, dcol.data(), in_plane, T{1}, dweight, okk);
    bias_grad(dy.item(b), dy.c, dy.plane(), dbias);
    if (dx.data) {
      gemm(false, false, x.c, in_plane, okk, T{1}, weight, okk, dcol.data(), in_plane, T{1}, dx.item(b), in_plane);
    }
  }
}

template <typename T>
void batchnorm_forward_train(View<const T> x, const T* gamma, const T* beta, T eps, View<T> xhat, View<T> y,
                             T* mean, T* var) {
  const std::size_t plane = x.plane();
  const double count = static_cast<double>(x.n) * plane;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < x.c; ++c) {
    double s = 0.0;
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.channel(b, c);
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
    }
    const double mu = s / count;
    double ss = 0.0;
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.channel(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mu;
        ss += d * d;
      }
    }
    const double v = ss / count;
    mean[c] = static_cast<T>(mu);
    var[c] = static_cast<T>(v);
    const T inv = static_cast<T>(1.0 / std::sqrt(v + eps));
    const T m = static_cast<T>(mu);
    for (int b = 0; b < x.n; ++b) {
      const T* p = x.channel(b, c);
      T* xh = xhat.channel(b, c);
      T* o = y.channel(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - m) * inv;
        o[i] = gamma[c] * xh[i] + beta[c];
      }
    }
  }
}

template <typename T>
void batchnorm_forward_eval(View<const T> x, const T* gamma, const T* beta, const T* running_mean,
                            const T* running_var, T eps, View<T> y) {
  const std::size_t plane = x.plane();
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < x.n; ++b) {
    for (int c = 0; c < x.c; ++c) {
      const T scale = gamma[c] / std::sqrt(running_var[c] + eps);
      const T shift = beta[c] - running_mean[c] * scale;
      const T* p = x.channel(b, c);
      T* o = y.channel(b, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] * scale + shift;
    }
  }
}

template <typename T>
void batchnorm_backward(View<const T> dy, View<const T> xhat, const T* gamma, const T* var, T eps, View<T> dx,
                        T* dgamma, T* dbeta) {
  const std::size_t plane = dy.plane();
  const double count = static_cast<double>(dy.n) * plane;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < dy.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int b = 0; b < dy.n; ++b) {
      const T* g = dy.channel(b, c);
      const T* xh = xhat.channel(b, c);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    if (!dx.data) continue;
    const double k = gamma[c] / std::sqrt(static_cast<double>(var[c]) + eps) / count;
    const double mdy = sum_dy, mdx = sum_dy_xhat;
    for (int b = 0; b < dy.n; ++b) {
      const T* g = dy.channel(b, c);
      const T* xh = xhat.channel(b, c);
      T* o = dx.channel(b, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] += static_cast<T>(k * (count * g[i] - mdy - xh[i] * mdx));
    }
  }
}

template <typename T>
void relu_inplace(View<T> x) {
  const std::size_t len = static_cast<std::size_t>(x.c) * x.plane();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < x.n; ++b) {
    T* p = x.item(b);
    for (std::size_t i = 0; i < len; ++i) p[i] = p[i] > T{0} ? p[i] : T{0};
  }
}

template <typename T>
void relu_backward_inplace(View<const T> activation, View<T> dy) {
  const std::size_t len = static_cast<std::size_t>(dy.c) * dy.plane();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < dy.n; ++b) {
    const T* a = activation.item(b);
    T* g = dy.item(b);
    for (std::size_t i = 0; i < len; ++i) {
      if (!(a[i] > T{0})) g[i] = T{0};
    }
  }
}

template <typename T>
void maxpool2_forward(View<const T> x, View<T> y, std::int32_t* argmax) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < x.n; ++b) {
    for (int c = 0; c < x.c; ++c) {
      const T* p = x.channel(b, c);
      T* o = y.channel(b, c);
      std::int32_t* am = argmax + (static_cast<std::size_t>(b) * x.c + c) * y.plane();
      for (int oy = 0; oy < y.h; ++oy) {
        const T* r0 = p + (2 * oy) * x.w;
        const T* r1 = r0 + x.w;
        T* orow = o + oy * y.w;
        std::int32_t* arow = am + oy * y.w;
        const std::int32_t base = (2 * oy) * x.w;
#pragma omp simd
        for (int ox = 0; ox < y.w; ++ox) {
          // first maximum in (0,0), (0,1), (1,0), (1,1) order
          T m = r0[2 * ox];
          std::int32_t best = base + 2 * ox;
          const T b = r0[2 * ox + 1];
          best = b > m ? base + 2 * ox + 1 : best;
          m = b > m ? b : m;
          const T c2 = r1[2 * ox];
          best = c2 > m ? base + x.w + 2 * ox : best;
          m = c2 > m ? c2 : m;
          const T d = r1[2 * ox + 1];
          best = d > m ? base + x.w + 2 * ox + 1 : best;
          m = d > m ? d : m;
          orow[ox] = m;
          arow[ox] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool2_backward(View<const T> dy, const std::int32_t* argmax, View<T> dx) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int b = 0; b < dy.n; ++b) {
    for (int c = 0; c < dy.c; ++c) {
      const T* g = dy.channel(b, c);
      T* o = dx.channel(b, c);
      const std::int32_t* am = argmax + (static_cast<std::size_t>(b) * dy.c + c) * dy.plane();
      for (std::size_t i = 0; i < dy.plane(); ++i) o[am[i]] += g[i];
    }
  }
}

template <typename T>
void softmax_channels(View<const T> logits, View<T> probs) {
  const std::size_t plane = logits.plane();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < logits.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      T mx = logits.channel(b, 0)[i];
      for (int c = 1; c < logits.c; ++c) mx = std::max(mx, logits.channel(b, c)[i]);
      T sum{0};
      for (int c = 0; c < logits.c; ++c) {
        const T e = std::exp(logits.channel(b, c)[i] - mx);
        probs.channel(b, c)[i] = e;
        sum += e;
      }
      for (int c = 0; c < logits.c; ++c) probs.channel(b, c)[i] /= sum;
    }
  }
}

template <typename T>
void softmax_backward(View<const T> probs, View<const T> dprobs, View<T> dlogits) {
  const std::size_t plane = probs.plane();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < probs.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      T dot{0};
      for (int c = 0; c < probs.c; ++c) dot += probs.channel(b, c)[i] * dprobs.channel(b, c)[i];
      for (int c = 0; c < probs.c; ++c) {
        dlogits.channel(b, c)[i] = probs.channel(b, c)[i] * (dprobs.channel(b, c)[i] - dot);
      }
    }
  }
}

template <typename T>
void copy(View<const T> src, View<T> dst) {
  const std::size_t len = static_cast<std::size_t>(src.c) * src.plane();
  for (int b = 0; b < src.n; ++b) std::memcpy(dst.item(b), src.item(b), len * sizeof(T));
}

template <typename T>
void add(View<const T> src, View<T> dst) {
  const std::size_t len = static_cast<std::size_t>(src.c) * src.plane();
#pragma omp parallel for schedule(static)
  for (int b = 0; b < src.n; ++b) {
    const T* s = src.item(b);
    T* d = dst.item(b);
    for (std::size_t i = 0; i < len; ++i) d[i] += s[i];
  }
}

#define LONGISEG_INSTANTIATE(T)                                                                                     \
  template void im2col<T>(const T*, int, int, int, const ConvGeometry&, T*);                                        \
  template void col2im_add<T>(const T*, int, int, int, const ConvGeometry&, T*);                                    \
  template void conv2d_forward<T>(View<const T>, const T*, const T*, const ConvGeometry&, View<T>);                 \
  template void conv2d_backward<T>(View<const T>, const T*, View<const T>, const ConvGeometry&, View<T>, T*, T*);   \
  template void conv_transpose2d_forward<T>(View<const T>, const T*, const T*, const ConvGeometry&, View<T>);       \
  template void conv_transpose2d_backward<T>(View<const T>, const T*, View<const T>, const ConvGeometry&, View<T>,  \
                                             T*, T*);                                                               \
  template void batchnorm_forward_train<T>(View<const T>, const T*, const T*, T, View<T>, View<T>, T*, T*);         \
  template void batchnorm_forward_eval<T>(View<const T>, const T*, const T*, const T*, const T*, T, View<T>);       \
  template void batchnorm_backward<T>(View<const T>, View<const T>, const T*, const T*, T, View<T>, T*, T*);        \
  template void relu_inplace<T>(View<T>);                                                                           \
  template void relu_backward_inplace<T>(View<const T>, View<T>);                                                   \
  template void maxpool2_forward<T>(View<const T>, View<T>, std::int32_t*);                                         \
  template void maxpool2_backward<T>(View<const T>, const std::int32_t*, View<T>);                                  \
  template void softmax_channels<T>(View<const T>, View<T>);                                                        \
  template void softmax_backward<T>(View<const T>, View<const T>, View<T>);                                         \
  template void copy<T>(View<const T>, View<T>);                                                                    \
  template void add<T>(View<const T>, View<T>);

LONGISEG_INSTANTIATE(float)
LONGISEG_INSTANTIATE(double)

#undef LONGISEG_INSTANTIATE

}  // namespace longiseg::nn::kernels
