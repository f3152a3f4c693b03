#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace longiseg {

/// Raised when two inputs that must share a grid do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major grid. The last axis is contiguous.
template <typename T, std::size_t Rank>
class Grid {
 public:
  using value_type = T;
  using Extents = std::array<int, Rank>;

  Grid() = default;

  explicit Grid(Extents extents, T fill = T{}) : extents_(extents) {
    data_.assign(count(extents), fill);
  }

  Grid(Extents extents, std::vector<T> data) : extents_(extents), data_(std::move(data)) {
    if (data_.size() != count(extents)) {
      throw ShapeError("grid data size does not match extents");
    }
  }

  const Extents& extents() const { return extents_; }
  int extent(std::size_t axis) const { return extents_[axis]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int i, int j)
    requires(Rank == 2)
  {
    return data_[static_cast<std::size_t>(i) * extents_[1] + j];
  }
  const T& operator()(int i, int j) const
    requires(Rank == 2)
  {
    return data_[static_cast<std::size_t>(i) * extents_[1] + j];
  }

  T& operator()(int i, int j, int k)
    requires(Rank == 3)
  {
    return data_[index(i, j, k)];
  }
  const T& operator()(int i, int j, int k) const
    requires(Rank == 3)
  {
    return data_[index(i, j, k)];
  }

  std::size_t index(int i, int j, int k) const
    requires(Rank == 3)
  {
    return (static_cast<std::size_t>(i) * extents_[1] + j) * extents_[2] + k;
  }

  bool contains(int i, int j) const
    requires(Rank == 2)
  {
    return i >= 0 && j >= 0 && i < extents_[0] && j < extents_[1];
  }
  bool contains(int i, int j, int k) const
    requires(Rank == 3)
  {
    return i >= 0 && j >= 0 && k >= 0 && i < extents_[0] && j < extents_[1] && k < extents_[2];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid&, const Grid&) = default;

  static std::size_t count(const Extents& e) {
    std::size_t n = 1;
    for (int v : e) {
      if (v < 0) throw ShapeError("negative grid extent");
      n *= static_cast<std::size_t>(v);
    }
    return n;
  }

 private:
  Extents extents_{};
  std::vector<T> data_;
};

template <typename T>
using Image = Grid<T, 2>;
template <typename T>
using VoxelGrid = Grid<T, 3>;

template <typename A, typename B, std::size_t Rank>
void require_same_extents(const Grid<A, Rank>& a, const Grid<B, Rank>& b, const std::string& what) {
  if (a.extents() != b.extents()) {
    throw ShapeError("shape mismatch: " + what);
  }
}

template <std::size_t Rank>
std::string extents_string(const std::array<int, Rank>& e) {
  std::string s;
  for (std::size_t i = 0; i < Rank; ++i) {
    if (i) s += "x";
    s += std::to_string(e[i]);
  }
  return s;
}

}  // namespace longiseg
