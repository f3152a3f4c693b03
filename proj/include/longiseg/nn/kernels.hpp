#pragma once

#include <cstdint>
#include <vector>

#include "longiseg/nn/tensor.hpp"

// OpenMP-parallel layer kernels. Each has a serial counterpart in reference.hpp
// that the tests compare against. Gradients are accumulated (+=), never overwritten.
namespace longiseg::nn::kernels {

/// C = alpha * op(A) * op(B) + beta * C, row-major.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc);

/// Square-kernel convolution geometry.
struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

template <typename T>
void im2col(const T* image, int channels, int h, int w, const ConvGeometry& g, T* col);

template <typename T>
void col2im_add(const T* col, int channels, int h, int w, const ConvGeometry& g, T* image);

/// y = conv(x, weight[cout][cin][k][k]) + bias, stride 1.
template <typename T>
void conv2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y);

/// dx may have a null data pointer when the input gradient is not needed.
template <typename T>
void conv2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g, View<T> dx,
                     T* dweight, T* dbias);

/// Transposed convolution, weight[cin][cout][k][k]. Output is 2x the input for k3/s2/p1 + output padding 1.
template <typename T>
void conv_transpose2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y);

template <typename T>
void conv_transpose2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g,
                               View<T> dx, T* dweight, T* dbias);

/// Training-mode batch normalisation: writes xhat and y = gamma * xhat + beta, returns batch mean/var.
template <typename T>
void batchnorm_forward_train(View<const T> x, const T* gamma, const T* beta, T eps, View<T> xhat, View<T> y,
                             T* mean, T* var);

template <typename T>
void batchnorm_forward_eval(View<const T> x, const T* gamma, const T* beta, const T* running_mean,
                            const T* running_var, T eps, View<T> y);

/// dx += d/dx of training-mode batch norm, given dy on its output.
template <typename T>
void batchnorm_backward(View<const T> dy, View<const T> xhat, const T* gamma, const T* var, T eps, View<T> dx,
                        T* dgamma, T* dbeta);

template <typename T>
void relu_inplace(View<T> x);

/// dy *= (activation > 0)
template <typename T>
void relu_backward_inplace(View<const T> activation, View<T> dy);

/// 2x2 stride-2 max pooling; argmax holds the flat in-plane source index.
template <typename T>
void maxpool2_forward(View<const T> x, View<T> y, std::int32_t* argmax);

template <typename T>
void maxpool2_backward(View<const T> dy, const std::int32_t* argmax, View<T> dx);

/// Softmax over channels at every pixel.
template <typename T>
void softmax_channels(View<const T> logits, View<T> probs);

template <typename T>
void softmax_backward(View<const T> probs, View<const T> dprobs, View<T> dlogits);

template <typename T>
void copy(View<const T> src, View<T> dst);

template <typename T>
void add(View<const T> src, View<T> dst);

}  // namespace longiseg::nn::kernels
