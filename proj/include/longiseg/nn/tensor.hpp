#pragma once

#include <cstddef>
#include <algorithm>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace longiseg::nn {

/// Batch-major view over NCHW storage. `batch_stride` lets a view cover a channel
/// range of a larger buffer (dense-block concatenation without copies).
template <typename T>
struct View {
  T* data = nullptr;
  int n = 0, c = 0, h = 0, w = 0;
  std::size_t batch_stride = 0;

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  T* item(int b) const { return data + b * batch_stride; }
  T* channel(int b, int ch) const { return item(b) + ch * plane(); }
  View channels(int c0, int c1) const { return View{data + c0 * plane(), n, c1 - c0, h, w, batch_stride}; }
  operator View<const T>() const
    requires(!std::is_const_v<T>)
  {
    return View<const T>{data, n, c, h, w, batch_stride};
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T{})
      : n_(n), c_(c), h_(h), w_(w), data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h_) * w_; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& at(int b, int ch, int y, int x) { return data_[((static_cast<std::size_t>(b) * c_ + ch) * h_ + y) * w_ + x]; }
  const T& at(int b, int ch, int y, int x) const {
    return data_[((static_cast<std::size_t>(b) * c_ + ch) * h_ + y) * w_ + x];
  }

  View<T> view() { return View<T>{data_.data(), n_, c_, h_, w_, c_ * plane()}; }
  View<const T> view() const { return View<const T>{data_.data(), n_, c_, h_, w_, c_ * plane()}; }
  View<T> channels(int c0, int c1) { return view().channels(c0, c1); }
  View<const T> channels(int c0, int c1) const { return view().channels(c0, c1); }

  void zero() { std::fill(data_.begin(), data_.end(), T{}); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

}  // namespace longiseg::nn
