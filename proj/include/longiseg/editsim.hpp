#pragma once

#include <array>
#include <compare>
#include <optional>
#include <vector>

#include "longiseg/core.hpp"

namespace longiseg::editsim {

inline constexpr int kTopRegions = 5;
inline constexpr int kDefaultEditCap = 20;

struct Pixel {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// under: false negative for `cls`; over: false positive for `cls`.
enum class Polarity : int { kUnder = 0, kOver = 1 };

struct SliceRef {
  Plane plane = Plane::kAxial;
  int index = 0;
};

/// One 8-connected wrongly segmented component on a slice.
struct ErrorRegion {
  int cls = 1;
  Polarity polarity = Polarity::kUnder;
  std::vector<Pixel> voxels;  // row-major sorted
  std::optional<SliceRef> slice_ref;

  int area() const { return static_cast<int>(voxels.size()); }
};

/// 8-connected components of {gt=c, pred!=c} and {pred=c, gt!=c} for c = 1, 2.
/// Ordered by class, then under before over, then by first voxel.
std::vector<ErrorRegion> error_regions(const LabelImage& pred, const LabelImage& gt);

/// Largest `k` regions. Ties: class, then under first, then smallest first voxel.
std::vector<ErrorRegion> select_topk(std::vector<ErrorRegion> regions, int k = kTopRegions);

/// Digital line between the farthest pair of boundary voxels, clipped to the region.
std::vector<Pixel> synthesize_scribble(const ErrorRegion& region);

/// Digital line from a to b, inclusive of both ends.
std::vector<Pixel> digital_line(Pixel a, Pixel b);

struct Scribble {
  int cls = 1;
  std::int8_t value = 1;
  std::vector<Pixel> pixels;
};

struct SimulatedEdits {
  EditMask<2> mask;
  std::vector<Scribble> scribbles;
};

/// Scripted user for one slice. At most min(5, cap) scribbles are drawn.
SimulatedEdits simulate_edits_detailed(const LabelImage& pred, const LabelImage& gt, int cap = kDefaultEditCap);

EditMask<2> simulate_edits(const LabelImage& pred, const LabelImage& gt, int cap = kDefaultEditCap);

}  // namespace longiseg::editsim
