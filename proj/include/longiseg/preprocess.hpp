#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "longiseg/core.hpp"

namespace longiseg::preprocess {

inline constexpr float kClipLow = -1024.0f;
inline constexpr float kClipHigh = 600.0f;
/// Slices whose max - min is below this fraction of the unit range are empty.
inline constexpr float kEmptySliceVariation = 1e-5f;
inline constexpr std::array<int, 3> kModelExtents{150, 150, 150};

/// One acquisition in native intensity units together with its lung mask.
struct RawStudy {
  VoxelGrid<float> raw_volume;
  LabelVolume lung_mask;
  int timepoint = 1;
  std::string patient_id;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
};

/// Inclusive-exclusive box [lo, hi) per axis.
struct BoundingBox {
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};
  std::array<int, 3> extents() const { return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]}; }
};

/// Tight box around the nonzero voxels. Throws on an empty mask.
BoundingBox mask_bounding_box(const LabelVolume& mask);

template <typename T>
VoxelGrid<T> crop(const VoxelGrid<T>& v, const BoundingBox& box) {
  VoxelGrid<T> out(box.extents());
  for (int i = box.lo[0]; i < box.hi[0]; ++i)
    for (int j = box.lo[1]; j < box.hi[1]; ++j)
      for (int k = box.lo[2]; k < box.hi[2]; ++k) out(i - box.lo[0], j - box.lo[1], k - box.lo[2]) = v(i, j, k);
  return out;
}

/// Box crop of the raw volume to its lung mask; voxels outside the mask are kept.
VoxelGrid<float> crop_to_lung(const RawStudy& raw);

/// Clip to [-1024, 600], then min-max to [0, 1]. A constant grid maps to zeros.
Volume clip_normalize(const VoxelGrid<float>& grid);

struct DroppedSlices {
  Volume volume;
  std::vector<int> kept;
};

/// Removes slices along `plane` with max - min < kEmptySliceVariation.
DroppedSlices drop_empty_slices(const Volume& vol, Plane plane);

template <typename T>
VoxelGrid<T> select_slices(const VoxelGrid<T>& v, Plane plane, const std::vector<int>& kept) {
  std::vector<Image<T>> slices;
  slices.reserve(kept.size());
  for (int idx : kept) slices.push_back(extract_slice(v, plane, idx));
  return restack(slices, plane);
}

enum class Kind { kImage, kMask };

/// Trilinear for images, nearest neighbour for masks. Same-size input is returned unchanged.
VoxelGrid<float> resize(const VoxelGrid<float>& v, const std::array<int, 3>& target, Kind kind = Kind::kImage);
LabelVolume resize(const LabelVolume& v, const std::array<int, 3>& target);

/// Dense displacement on the target grid: target voxel x samples the reference at x + d(x).
struct DeformationField {
  std::array<VoxelGrid<float>, 3> displacement;

  static DeformationField identity(const std::array<int, 3>& extents);
  const std::array<int, 3>& extents() const { return displacement[0].extents(); }
  float max_displacement() const;
};

class RegistrationBackend {
 public:
  virtual ~RegistrationBackend() = default;
  virtual std::string name() const = 0;
  /// Field on the target grid mapping into the reference grid.
  virtual DeformationField register_masks(const LabelVolume& reference_mask, const LabelVolume& target_mask) const = 0;
};

class IdentityRegistration final : public RegistrationBackend {
 public:
  std::string name() const override { return "identity"; }
  DeformationField register_masks(const LabelVolume& reference_mask, const LabelVolume& target_mask) const override;
};

/// Matches mask centres of mass and per-axis bounding-box extents.
class AffineRegistration final : public RegistrationBackend {
 public:
  std::string name() const override { return "affine"; }
  DeformationField register_masks(const LabelVolume& reference_mask, const LabelVolume& target_mask) const override;
};

/// Runs `<command> <reference_mask> <target_mask> <field_out>`. Masks are written in the
/// raw format; the command writes a float32 raw file of shape [3*h, w, s] (dh, dw, ds stacked
/// along the first axis) with the usual sidecar.
class ExternalRegistration final : public RegistrationBackend {
 public:
  explicit ExternalRegistration(std::string command) : command_(std::move(command)) {}
  std::string name() const override { return "external:" + command_; }
  DeformationField register_masks(const LabelVolume& reference_mask, const LabelVolume& target_mask) const override;

 private:
  std::string command_;
};

/// "identity", "affine" or "external:<command>".
std::unique_ptr<RegistrationBackend> make_backend(const std::string& spec);

DeformationField register_reference(const LabelVolume& reference_mask, const LabelVolume& target_mask,
                                    const RegistrationBackend& backend);

/// Samples `v` through the field. Out-of-bounds samples are 0.
VoxelGrid<float> apply_deformation(const VoxelGrid<float>& v, const DeformationField& field,
                                   Kind kind = Kind::kImage);
LabelVolume apply_deformation(const LabelVolume& v, const DeformationField& field);

struct PreprocessedPair {
  Volume reference;
  LabelVolume reference_seg;
  Volume target;
  std::optional<LabelVolume> target_seg;
  std::vector<int> kept_axial;
};

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("preprocess stage '" + stage + "': " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// crop -> clip_normalize -> register reference to target -> warp reference volume and
/// segmentation -> drop empty axial target slices from all grids -> resize.
PreprocessedPair preprocess_pair(const RawStudy& reference, const RawStudy& target, const LabelVolume& reference_seg,
                                 const RegistrationBackend& backend,
                                 const std::optional<LabelVolume>& target_seg = std::nullopt,
                                 const std::array<int, 3>& output_extents = kModelExtents);

}  // namespace longiseg::preprocess
