#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "longiseg/grid.hpp"

namespace longiseg {

inline constexpr int kForegroundClasses = 2;  // GGO, CONS
inline constexpr int kNumClasses = kForegroundClasses + 1;
inline constexpr int kInputChannels = 8;

enum Label : std::uint8_t { kBackground = 0, kGGO = 1, kCONS = 2 };

using LabelImage = Image<std::uint8_t>;
using LabelVolume = VoxelGrid<std::uint8_t>;

/// Normalized intensity volume stored as (h, w, s).
struct Volume {
  VoxelGrid<float> data;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string id;
};

/// Per-class probabilities, one grid per class (background first).
template <std::size_t Rank>
struct ProbMap {
  std::array<Grid<float, Rank>, kNumClasses> probs;

  ProbMap() = default;
  explicit ProbMap(typename Grid<float, Rank>::Extents e) {
    for (auto& p : probs) p = Grid<float, Rank>(e);
  }
  const typename Grid<float, Rank>::Extents& extents() const { return probs[0].extents(); }
  std::size_t size() const { return probs[0].size(); }
};

/// Per-class scribble state in {-1, 0, +1}. Channel 0 is GGO, channel 1 is CONS.
template <std::size_t Rank>
struct EditMask {
  std::array<Grid<std::int8_t, Rank>, kForegroundClasses> channels;

  EditMask() = default;
  explicit EditMask(typename Grid<std::int8_t, Rank>::Extents e) {
    for (auto& c : channels) c = Grid<std::int8_t, Rank>(e);
  }
  const typename Grid<std::int8_t, Rank>::Extents& extents() const { return channels[0].extents(); }
  Grid<std::int8_t, Rank>& for_class(int cls) { return channels[cls - 1]; }
  const Grid<std::int8_t, Rank>& for_class(int cls) const { return channels[cls - 1]; }
  friend bool operator==(const EditMask&, const EditMask&) = default;
};

/// Model input channel order.
enum class InputChannel : int {
  kReferenceImage = 0,
  kReferenceGGO = 1,
  kReferenceCONS = 2,
  kTargetImage = 3,
  kPreviousMaxProb = 4,
  kPreviousLabels = 5,
  kEditGGO = 6,
  kEditCONS = 7,
};

/// Eight channel-major planes of rows x cols.
class InputStack {
 public:
  InputStack() = default;
  InputStack(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(kInputChannels) * rows * cols, 0.0f) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int channels() const { return kInputChannels; }
  std::size_t plane_size() const { return static_cast<std::size_t>(rows_) * cols_; }

  std::span<float> channel(InputChannel c) { return channel(static_cast<int>(c)); }
  std::span<const float> channel(InputChannel c) const { return channel(static_cast<int>(c)); }
  std::span<float> channel(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::span<const float> values() const { return data_; }
  friend bool operator==(const InputStack&, const InputStack&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<float> data_;
};

/// Builds one model input. Absent optional inputs become zero channels; labels
/// are stored as value / kForegroundClasses.
InputStack assemble_input(const Image<float>& reference, const LabelImage& reference_seg,
                          const Image<float>& target, const Image<float>* previous_max_prob = nullptr,
                          const LabelImage* previous_labels = nullptr, const EditMask<2>* edits = nullptr);

InputStack assemble_input(const Image<float>& reference, const LabelImage& reference_seg,
                          const Image<float>& target, const ProbMap<2>* previous_prob,
                          const LabelImage* previous_labels, const EditMask<2>* edits);

/// clip(2 * current + previous, -1, 1): a current nonzero edit always wins.
inline std::int8_t accumulate_edit_value(std::int8_t previous, std::int8_t current) {
  return static_cast<std::int8_t>(std::clamp(2 * current + previous, -1, 1));
}

template <std::size_t Rank>
EditMask<Rank> accumulate_edits(const EditMask<Rank>& previous, const EditMask<Rank>& current) {
  EditMask<Rank> out(current.extents());
  for (int c = 0; c < kForegroundClasses; ++c) {
    require_same_extents(previous.channels[c], current.channels[c], "accumulate_edits previous vs current");
    auto p = previous.channels[c].values();
    auto q = current.channels[c].values();
    auto o = out.channels[c].values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = accumulate_edit_value(p[i], q[i]);
  }
  return out;
}

// Anatomical planes. Volumes are stored (h, w, s):
//   axial    fixes s, slice is h x w
//   coronal  fixes h, slice is w x s
//   sagittal fixes w, slice is h x s
enum class Plane : int { kAxial = 0, kCoronal = 1, kSagittal = 2 };

inline constexpr std::array<Plane, 3> kAllPlanes{Plane::kAxial, Plane::kCoronal, Plane::kSagittal};

std::string_view plane_name(Plane p);
Plane parse_plane(std::string_view name);

/// Axis of the (h, w, s) grid held fixed by a plane.
inline int normal_axis(Plane p) {
  switch (p) {
    case Plane::kAxial: return 2;
    case Plane::kCoronal: return 0;
    case Plane::kSagittal: return 1;
  }
  return 2;
}

inline std::array<int, 2> slice_extents(const std::array<int, 3>& e, Plane p) {
  switch (p) {
    case Plane::kAxial: return {e[0], e[1]};
    case Plane::kCoronal: return {e[1], e[2]};
    case Plane::kSagittal: return {e[0], e[2]};
  }
  return {e[0], e[1]};
}

/// Volume coordinates of slice `index` pixel (r, c).
inline std::array<int, 3> slice_to_volume(Plane p, int index, int r, int c) {
  switch (p) {
    case Plane::kAxial: return {r, c, index};
    case Plane::kCoronal: return {index, r, c};
    case Plane::kSagittal: return {r, index, c};
  }
  return {r, c, index};
}

template <typename T>
Image<T> extract_slice(const VoxelGrid<T>& v, Plane p, int index) {
  Image<T> out(slice_extents(v.extents(), p));
  const int rows = out.extent(0);
  const int cols = out.extent(1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto [i, j, k] = slice_to_volume(p, index, r, c);
      out(r, c) = v(i, j, k);
    }
  }
  return out;
}

template <typename T>
void insert_slice(VoxelGrid<T>& v, Plane p, int index, const Image<T>& slice) {
  if (slice.extents() != slice_extents(v.extents(), p)) {
    throw ShapeError("insert_slice: slice extents do not match the volume plane");
  }
  const int rows = slice.extent(0);
  const int cols = slice.extent(1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      auto [i, j, k] = slice_to_volume(p, index, r, c);
      v(i, j, k) = slice(r, c);
    }
  }
}

template <typename T>
std::vector<Image<T>> extract_slices(const VoxelGrid<T>& v, Plane p) {
  if (v.empty()) throw ShapeError("extract_slices: empty volume");
  const int n = v.extent(normal_axis(p));
  std::vector<Image<T>> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(extract_slice(v, p, i));
  return out;
}

template <typename T>
VoxelGrid<T> restack(const std::vector<Image<T>>& slices, Plane p) {
  if (slices.empty()) throw ShapeError("restack: no slices");
  const auto se = slices.front().extents();
  std::array<int, 3> e{};
  const int n = static_cast<int>(slices.size());
  switch (p) {
    case Plane::kAxial: e = {se[0], se[1], n}; break;
    case Plane::kCoronal: e = {n, se[0], se[1]}; break;
    case Plane::kSagittal: e = {se[0], n, se[1]}; break;
  }
  VoxelGrid<T> v(e);
  for (int i = 0; i < n; ++i) insert_slice(v, p, i, slices[i]);
  return v;
}

template <std::size_t Rank>
ProbMap<2> extract_slice(const ProbMap<Rank>& m, Plane p, int index)
  requires(Rank == 3)
{
  ProbMap<2> out;
  for (int c = 0; c < kNumClasses; ++c) out.probs[c] = extract_slice(m.probs[c], p, index);
  return out;
}

template <std::size_t Rank>
EditMask<2> extract_slice(const EditMask<Rank>& m, Plane p, int index)
  requires(Rank == 3)
{
  EditMask<2> out;
  for (int c = 0; c < kForegroundClasses; ++c) out.channels[c] = extract_slice(m.channels[c], p, index);
  return out;
}

template <std::size_t Rank>
struct ArgmaxResult {
  Grid<float, Rank> max_prob;
  Grid<std::uint8_t, Rank> labels;
};

/// Per-voxel argmax; ties resolve to the lowest class index.
template <std::size_t Rank>
ArgmaxResult<Rank> labels_from_probs(const ProbMap<Rank>& m) {
  ArgmaxResult<Rank> out{Grid<float, Rank>(m.extents()), Grid<std::uint8_t, Rank>(m.extents())};
  auto mp = out.max_prob.values();
  auto lb = out.labels.values();
  for (std::size_t i = 0; i < mp.size(); ++i) {
    float best = m.probs[0].values()[i];
    std::uint8_t arg = 0;
    for (int c = 1; c < kNumClasses; ++c) {
      const float v = m.probs[c].values()[i];
      if (v > best) {
        best = v;
        arg = static_cast<std::uint8_t>(c);
      }
    }
    mp[i] = best;
    lb[i] = arg;
  }
  return out;
}

struct FusedPrediction {
  ProbMap<3> probs;
  LabelVolume labels;
};

/// Mean of the three per-view class probabilities followed by argmax. The three
/// terms are summed in sorted order so the result does not depend on argument order.
FusedPrediction fuse_views(const ProbMap<3>& axial, const ProbMap<3>& coronal, const ProbMap<3>& sagittal);

/// Binary per-class decomposition used for the reference segmentation channels.
template <std::size_t Rank>
Grid<float, Rank> class_indicator(const Grid<std::uint8_t, Rank>& labels, int cls) {
  Grid<float, Rank> out(labels.extents());
  auto in = labels.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] == cls ? 1.0f : 0.0f;
  return out;
}

}  // namespace longiseg
