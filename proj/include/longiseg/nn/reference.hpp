#pragma once

#include <cstdint>

#include "longiseg/nn/kernels.hpp"

// Serial direct-loop versions of the kernels. Slow; kept for tests and the benchmark.
namespace longiseg::nn::reference {

using kernels::ConvGeometry;

template <typename T>
void conv2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y);

template <typename T>
void conv2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g, View<T> dx,
                     T* dweight, T* dbias);

template <typename T>
void conv_transpose2d_forward(View<const T> x, const T* weight, const T* bias, const ConvGeometry& g, View<T> y);

template <typename T>
void conv_transpose2d_backward(View<const T> x, const T* weight, View<const T> dy, const ConvGeometry& g,
                               View<T> dx, T* dweight, T* dbias);

template <typename T>
void batchnorm_forward_train(View<const T> x, const T* gamma, const T* beta, T eps, View<T> xhat, View<T> y,
                             T* mean, T* var);

template <typename T>
void batchnorm_backward(View<const T> dy, View<const T> xhat, const T* gamma, const T* var, T eps, View<T> dx,
                        T* dgamma, T* dbeta);

template <typename T>
void maxpool2_forward(View<const T> x, View<T> y);

template <typename T>
void softmax_channels(View<const T> logits, View<T> probs);

}  // namespace longiseg::nn::reference
