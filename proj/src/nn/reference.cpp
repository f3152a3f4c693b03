#include "longiseg/nn/reference.hpp"

#include <algorithm>
#include <cmath>

namespace longiseg::nn::reference {

template <typename T>
void conv2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y) {
  const int k = g.kernel;
  for (int b = 0; b < x.n; ++b)
    for (int co = 0; co < y.c; ++co)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (int ci = 0; ci < x.c; ++ci)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int iy = oy * g.stride - g.pad + ki, ix = ox * g.stride - g.pad + kj;
                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                acc += static_cast<double>(weight[((co * x.c + ci) * k + ki) * k + kj]) * x.channel(b, ci)[iy * x.w + ix];
              }
          y.channel(b, co)[oy * y.w + ox] = static_cast<T>(acc);
        }
}

template <typename T>
void conv2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g, View<T> dx,
                     T* dweight, T* dbias) {
  const int k = g.kernel;
  for (int b = 0; b < x.n; ++b)
    for (int co = 0; co < dy.c; ++co)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox) {
          const T gval = dy.channel(b, co)[oy * dy.w + ox];
          if (dbias) dbias[co] += gval;
          for (int ci = 0; ci < x.c; ++ci)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int iy = oy * g.stride - g.pad + ki, ix = ox * g.stride - g.pad + kj;
                if (iy < 0 || ix < 0 || iy >= x.h || ix >= x.w) continue;
                const std::size_t widx = ((co * x.c + ci) * k + ki) * k + kj;
                dweight[widx] += gval * x.channel(b, ci)[iy * x.w + ix];
                if (dx.data) dx.channel(b, ci)[iy * x.w + ix] += gval * weight[widx];
              }
        }
}

template <typename T>
void conv_transpose2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y) {
  const int k = g.kernel;
  for (int b = 0; b < y.n; ++b)
    for (int co = 0; co < y.c; ++co) std::fill(y.channel(b, co), y.channel(b, co) + y.plane(), bias ? bias[co] : T{});
  for (int b = 0; b < x.n; ++b)
    for (int ci = 0; ci < x.c; ++ci)
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          const T v = x.channel(b, ci)[iy * x.w + ix];
          for (int co = 0; co < y.c; ++co)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int oy = iy * g.stride - g.pad + ki, ox = ix * g.stride - g.pad + kj;
                if (oy < 0 || ox < 0 || oy >= y.h || ox >= y.w) continue;
                y.channel(b, co)[oy * y.w + ox] += v * weight[((ci * y.c + co) * k + ki) * k + kj];
              }
        }
}

template <typename T>
void conv_transpose2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g,
                               View<T> dx, T* dweight, T* dbias) {
  const int k = g.kernel;
  if (dbias) {
    for (int b = 0; b < dy.n; ++b)
      for (int co = 0; co < dy.c; ++co)
        for (std::size_t i = 0; i < dy.plane(); ++i) dbias[co] += dy.channel(b, co)[i];
  }
  for (int b = 0; b < x.n; ++b)
    for (int ci = 0; ci < x.c; ++ci)
      for (int iy = 0; iy < x.h; ++iy)
        for (int ix = 0; ix < x.w; ++ix) {
          const T v = x.channel(b, ci)[iy * x.w + ix];
          for (int co = 0; co < dy.c; ++co)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                const int oy = iy * g.stride - g.pad + ki, ox = ix * g.stride - g.pad + kj;
                if (oy < 0 || ox < 0 || oy >= dy.h || ox >= dy.w) continue;
                const std::size_t widx = ((ci * dy.c + co) * k + ki) * k + kj;
                const T gv = dy.channel(b, co)[oy * dy.w + ox];
                dweight[widx] += v * gv;
                if (dx.data) dx.channel(b, ci)[iy * x.w + ix] += weight[widx] * gv;
              }
        }
}

template <typename T>
void batchnorm_forward_train(View<const T> x, const T* gamma, const T* beta, T eps, View<T> xhat, View<T> y,
                             T* mean, T* var) {
  const double count = static_cast<double>(x.n) * x.plane();
  for (int c = 0; c < x.c; ++c) {
    double s = 0.0;
    for (int b = 0; b < x.n; ++b)
      for (std::size_t i = 0; i < x.plane(); ++i) s += x.channel(b, c)[i];
    const double mu = s / count;
    double ss = 0.0;
    for (int b = 0; b < x.n; ++b)
      for (std::size_t i = 0; i < x.plane(); ++i) ss += (x.channel(b, c)[i] - mu) * (x.channel(b, c)[i] - mu);
    mean[c] = static_cast<T>(mu);
    var[c] = static_cast<T>(ss / count);
    const double inv = 1.0 / std::sqrt(ss / count + eps);
    for (int b = 0; b < x.n; ++b)
      for (std::size_t i = 0; i < x.plane(); ++i) {
        const double xh = (x.channel(b, c)[i] - mu) * inv;
        xhat.channel(b, c)[i] = static_cast<T>(xh);
        y.channel(b, c)[i] = static_cast<T>(gamma[c] * xh + beta[c]);
      }
  }
}

template <typename T>
void batchnorm_backward(View<const T> dy, View<const T> xhat, const T* gamma, const T* var, T eps, View<T> dx,
                        T* dgamma, T* dbeta) {
  const double count = static_cast<double>(dy.n) * dy.plane();
  for (int c = 0; c < dy.c; ++c) {
    double sdy = 0.0, sdx = 0.0;
    for (int b = 0; b < dy.n; ++b)
      for (std::size_t i = 0; i < dy.plane(); ++i) {
        sdy += dy.channel(b, c)[i];
        sdx += dy.channel(b, c)[i] * xhat.channel(b, c)[i];
      }
    dgamma[c] += static_cast<T>(sdx);
    dbeta[c] += static_cast<T>(sdy);
    const double inv = 1.0 / std::sqrt(static_cast<double>(var[c]) + eps);
    for (int b = 0; b < dy.n; ++b)
      for (std::size_t i = 0; i < dy.plane(); ++i) {
        const double g = dy.channel(b, c)[i], xh = xhat.channel(b, c)[i];
        dx.channel(b, c)[i] += static_cast<T>(gamma[c] * inv * (g - sdy / count - xh * sdx / count));
      }
  }
}

template <typename T>
void maxpool2_forward(View<const T> x, View<T> y) {
  for (int b = 0; b < x.n; ++b)
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < y.h; ++oy)
        for (int ox = 0; ox < y.w; ++ox) {
          const T* p = x.channel(b, c);
          T m = p[(2 * oy) * x.w + 2 * ox];
          m = std::max(m, p[(2 * oy) * x.w + 2 * ox + 1]);
          m = std::max(m, p[(2 * oy + 1) * x.w + 2 * ox]);
          m = std::max(m, p[(2 * oy + 1) * x.w + 2 * ox + 1]);
          y.channel(b, c)[oy * y.w + ox] = m;
        }
}

template <typename T>
void softmax_channels(View<const T> logits, View<T> probs) {
  for (int b = 0; b < logits.n; ++b)
    for (std::size_t i = 0; i < logits.plane(); ++i) {
      double sum = 0.0;
      for (int c = 0; c < logits.c; ++c) sum += std::exp(static_cast<double>(logits.channel(b, c)[i]));
      for (int c = 0; c < logits.c; ++c) {
        probs.channel(b, c)[i] = static_cast<T>(std::exp(static_cast<double>(logits.channel(b, c)[i])) / sum);
      }
    }
}

#define LONGISEG_INSTANTIATE(T)                                                                                    \
  template void conv2d_forward<T>(View<const T>, const T*, const T*, const ConvGeometry&, View<T>);                \
  template void conv2d_backward<T>(View<const T>, const T*, View<const T>, const ConvGeometry&, View<T>, T*, T*);  \
  template void conv_transpose2d_forward<T>(View<const T>, const T*, const T*, const ConvGeometry&, View<T>);      \
  template void conv_transpose2d_backward<T>(View<const T>, const T*, View<const T>, const ConvGeometry&, View<T>, \
                                             T*, T*);                                                              \
  template void batchnorm_forward_train<T>(View<const T>, const T*, const T*, T, View<T>, View<T>, T*, T*);        \
  template void batchnorm_backward<T>(View<const T>, View<const T>, const T*, const T*, T, View<T>, T*, T*);       \
  template void maxpool2_forward<T>(View<const T>, View<T>);                                                       \
  template void softmax_channels<T>(View<const T>, View<T>);

LONGISEG_INSTANTIATE(float)
LONGISEG_INSTANTIATE(double)

#undef LONGISEG_INSTANTIATE

}  // namespace longiseg::nn::reference
