#include "longiseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>

#include "longiseg/volume_io.hpp"

namespace longiseg::preprocess {

namespace fs = std::filesystem;

BoundingBox mask_bounding_box(const LabelVolume& mask) {
  BoundingBox box;
  box.lo = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
  box.hi = {0, 0, 0};
  bool any = false;
  const auto e = mask.extents();
  for (int i = 0; i < e[0]; ++i) {
    for (int j = 0; j < e[1]; ++j) {
      for (int k = 0; k < e[2]; ++k) {
        if (!mask(i, j, k)) continue;
        any = true;
        box.lo = {std::min(box.lo[0], i), std::min(box.lo[1], j), std::min(box.lo[2], k)};
        box.hi = {std::max(box.hi[0], i + 1), std::max(box.hi[1], j + 1), std::max(box.hi[2], k + 1)};
      }
    }
  }
  if (!any) throw std::invalid_argument("lung mask is empty");
  return box;
}

VoxelGrid<float> crop_to_lung(const RawStudy& raw) {
  require_same_extents(raw.raw_volume, raw.lung_mask, "crop_to_lung volume vs lung mask");
  return crop(raw.raw_volume, mask_bounding_box(raw.lung_mask));
}

Volume clip_normalize(const VoxelGrid<float>& grid) {
  Volume out{VoxelGrid<float>(grid.extents()), {1.0, 1.0, 1.0}, {}};
  auto in = grid.values();
  auto o = out.data.values();
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (!std::isfinite(in[i])) throw std::invalid_argument("clip_normalize: non-finite voxel");
    o[i] = std::clamp(in[i], kClipLow, kClipHigh);
    lo = std::min(lo, o[i]);
    hi = std::max(hi, o[i]);
  }
  if (!(hi > lo)) {
    out.data.fill(0.0f);
    return out;
  }
  const double scale = 1.0 / (static_cast<double>(hi) - lo);
  for (auto& x : o) x = static_cast<float>(std::clamp((static_cast<double>(x) - lo) * scale, 0.0, 1.0));
  return out;
}

DroppedSlices drop_empty_slices(const Volume& vol, Plane plane) {
  const int n = vol.data.extent(normal_axis(plane));
  std::vector<int> kept;
  for (int idx = 0; idx < n; ++idx) {
    const auto slice = extract_slice(vol.data, plane, idx);
    const auto [mn, mx] = std::minmax_element(slice.values().begin(), slice.values().end());
    if (*mx - *mn >= kEmptySliceVariation) kept.push_back(idx);
  }
  if (kept.empty()) throw std::invalid_argument("drop_empty_slices: every slice is empty");
  DroppedSlices out{Volume{select_slices(vol.data, plane, kept), vol.spacing, vol.id}, std::move(kept)};
  return out;
}

namespace {

struct AxisSample {
  std::vector<int> lo, hi;
  std::vector<float> frac;
};

AxisSample linear_axis(int in, int out) {
  AxisSample a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double x = (o + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(in - 1));
    const int l = static_cast<int>(std::floor(x));
    a.lo[o] = l;
    a.hi[o] = std::min(l + 1, in - 1);
    a.frac[o] = static_cast<float>(x - l);
  }
  return a;
}

std::vector<int> nearest_axis(int in, int out) {
  std::vector<int> idx(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) idx[o] = std::min(in - 1, static_cast<int>(std::floor((o + 0.5) * scale)));
  return idx;
}

template <typename T>
VoxelGrid<T> resize_nearest(const VoxelGrid<T>& v, const std::array<int, 3>& target) {
  const auto ii = nearest_axis(v.extent(0), target[0]);
  const auto jj = nearest_axis(v.extent(1), target[1]);
  const auto kk = nearest_axis(v.extent(2), target[2]);
  VoxelGrid<T> out(target);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < target[0]; ++i)
    for (int j = 0; j < target[1]; ++j)
      for (int k = 0; k < target[2]; ++k) out(i, j, k) = v(ii[i], jj[j], kk[k]);
  return out;
}

void check_target(const std::array<int, 3>& target) {
  for (int t : target) {
    if (t <= 0) throw ShapeError("resize: target extents must be positive");
  }
}

}  // namespace

VoxelGrid<float> resize(const VoxelGrid<float>& v, const std::array<int, 3>& target, Kind kind) {
  if (v.empty()) throw ShapeError("resize: empty input");
  check_target(target);
  if (v.extents() == target) return v;
  if (kind == Kind::kMask) return resize_nearest(v, target);
  const auto a0 = linear_axis(v.extent(0), target[0]);
  const auto a1 = linear_axis(v.extent(1), target[1]);
  const auto a2 = linear_axis(v.extent(2), target[2]);
  VoxelGrid<float> out(target);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < target[0]; ++i) {
    for (int j = 0; j < target[1]; ++j) {
      for (int k = 0; k < target[2]; ++k) {
        const float fi = a0.frac[i], fj = a1.frac[j], fk = a2.frac[k];
        auto lerp = [](float x, float y, float t) { return x + (y - x) * t; };
        auto at = [&](int di, int dj, int dk) {
          return v(di ? a0.hi[i] : a0.lo[i], dj ? a1.hi[j] : a1.lo[j], dk ? a2.hi[k] : a2.lo[k]);
        };
        const float c00 = lerp(at(0, 0, 0), at(0, 0, 1), fk);
        const float c01 = lerp(at(0, 1, 0), at(0, 1, 1), fk);
        const float c10 = lerp(at(1, 0, 0), at(1, 0, 1), fk);
        const float c11 = lerp(at(1, 1, 0), at(1, 1, 1), fk);
        out(i, j, k) = lerp(lerp(c00, c01, fj), lerp(c10, c11, fj), fi);
      }
    }
  }
  return out;
}

LabelVolume resize(const LabelVolume& v, const std::array<int, 3>& target) {
  if (v.empty()) throw ShapeError("resize: empty input");
  check_target(target);
  if (v.extents() == target) return v;
  return resize_nearest(v, target);
}

DeformationField DeformationField::identity(const std::array<int, 3>& extents) {
  DeformationField f;
  for (auto& d : f.displacement) d = VoxelGrid<float>(extents, 0.0f);
  return f;
}

float DeformationField::max_displacement() const {
  float m = 0.0f;
  const std::size_t n = displacement[0].size();
  for (std::size_t i = 0; i < n; ++i) {
    const float dx = displacement[0].values()[i], dy = displacement[1].values()[i], dz = displacement[2].values()[i];
    m = std::max(m, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return m;
}

DeformationField IdentityRegistration::register_masks(const LabelVolume&, const LabelVolume& target_mask) const {
  return DeformationField::identity(target_mask.extents());
}

namespace {

struct MaskMoments {
  std::array<double, 3> centre{};
  BoundingBox box;
};

MaskMoments moments(const LabelVolume& m) {
  MaskMoments out;
  out.box = mask_bounding_box(m);
  std::array<double, 3> sum{};
  double count = 0.0;
  const auto e = m.extents();
  for (int i = 0; i < e[0]; ++i)
    for (int j = 0; j < e[1]; ++j)
      for (int k = 0; k < e[2]; ++k) {
        if (!m(i, j, k)) continue;
        sum[0] += i;
        sum[1] += j;
        sum[2] += k;
        count += 1.0;
      }
  for (int d = 0; d < 3; ++d) out.centre[d] = sum[d] / count;
  return out;
}

}  // namespace

DeformationField AffineRegistration::register_masks(const LabelVolume& reference_mask,
                                                    const LabelVolume& target_mask) const {
  const auto ref = moments(reference_mask);
  const auto tgt = moments(target_mask);
  std::array<double, 3> scale{};
  for (int d = 0; d < 3; ++d) {
    scale[d] = static_cast<double>(ref.box.extents()[d]) / static_cast<double>(tgt.box.extents()[d]);
  }
  auto field = DeformationField::identity(target_mask.extents());
  const auto e = target_mask.extents();
  for (int i = 0; i < e[0]; ++i)
    for (int j = 0; j < e[1]; ++j)
      for (int k = 0; k < e[2]; ++k) {
        const std::array<int, 3> x{i, j, k};
        for (int d = 0; d < 3; ++d) {
          const double mapped = ref.centre[d] + (x[d] - tgt.centre[d]) * scale[d];
          field.displacement[d](i, j, k) = static_cast<float>(mapped - x[d]);
        }
      }
  return field;
}

DeformationField ExternalRegistration::register_masks(const LabelVolume& reference_mask,
                                                      const LabelVolume& target_mask) const {
  std::mt19937_64 rng(std::random_device{}());
  const fs::path dir = fs::temp_directory_path() / ("longiseg_reg_" + std::to_string(rng()));
  fs::create_directories(dir);
  const fs::path ref_path = dir / "reference_mask.raw";
  const fs::path tgt_path = dir / "target_mask.raw";
  const fs::path out_path = dir / "field.raw";
  io::write_volume(ref_path, reference_mask);
  io::write_volume(tgt_path, target_mask);
  const std::string cmd =
      command_ + " '" + ref_path.string() + "' '" + tgt_path.string() + "' '" + out_path.string() + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    fs::remove_all(dir);
    throw std::runtime_error("external registration command failed with status " + std::to_string(rc));
  }
  io::FloatVolumeFile stacked;
  try {
    stacked = io::read_float_volume(out_path);
  } catch (const std::exception& e) {
    fs::remove_all(dir);
    throw std::runtime_error(std::string("external registration produced no readable field: ") + e.what());
  }
  fs::remove_all(dir);
  const auto e = target_mask.extents();
  if (stacked.data.extents() != std::array<int, 3>{3 * e[0], e[1], e[2]}) {
    throw ShapeError("external registration field has extents " + extents_string(stacked.data.extents()));
  }
  auto field = DeformationField::identity(e);
  for (int d = 0; d < 3; ++d)
    for (int i = 0; i < e[0]; ++i)
      for (int j = 0; j < e[1]; ++j)
        for (int k = 0; k < e[2]; ++k) field.displacement[d](i, j, k) = stacked.data(d * e[0] + i, j, k);
  return field;
}

std::unique_ptr<RegistrationBackend> make_backend(const std::string& spec) {
  if (spec == "identity") return std::make_unique<IdentityRegistration>();
  if (spec == "affine") return std::make_unique<AffineRegistration>();
  if (spec.starts_with("external:") && spec.size() > 9) return std::make_unique<ExternalRegistration>(spec.substr(9));
  throw std::invalid_argument("unknown registration backend '" + spec + "'");
}

DeformationField register_reference(const LabelVolume& reference_mask, const LabelVolume& target_mask,
                                    const RegistrationBackend& backend) {
  try {
    auto field = backend.register_masks(reference_mask, target_mask);
    if (field.extents() != target_mask.extents()) {
      throw ShapeError("field does not cover the target grid");
    }
    for (const auto& d : field.displacement) {
      for (float x : d.values()) {
        if (!std::isfinite(x)) throw std::runtime_error("non-finite displacement");
      }
    }
    return field;
  } catch (const std::exception& e) {
    throw std::runtime_error("registration backend " + backend.name() + ": " + e.what());
  }
}

VoxelGrid<float> apply_deformation(const VoxelGrid<float>& v, const DeformationField& field, Kind kind) {
  const auto e = field.extents();
  const auto src = v.extents();
  VoxelGrid<float> out(e, 0.0f);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < e[0]; ++i) {
    for (int j = 0; j < e[1]; ++j) {
      for (int k = 0; k < e[2]; ++k) {
        const std::array<double, 3> x{i + static_cast<double>(field.displacement[0](i, j, k)),
                                      j + static_cast<double>(field.displacement[1](i, j, k)),
                                      k + static_cast<double>(field.displacement[2](i, j, k))};
        if (kind == Kind::kMask) {
          std::array<int, 3> n{};
          bool inside = true;
          for (int d = 0; d < 3; ++d) {
            n[d] = static_cast<int>(std::floor(x[d] + 0.5));
            inside = inside && n[d] >= 0 && n[d] < src[d];
          }
          if (inside) out(i, j, k) = v(n[0], n[1], n[2]);
          continue;
        }
        std::array<int, 3> lo{}, hi{};
        std::array<double, 3> t{};
        bool inside = true;
        for (int d = 0; d < 3; ++d) {
          if (x[d] < 0.0 || x[d] > src[d] - 1) {
            inside = false;
            break;
          }
          lo[d] = static_cast<int>(std::floor(x[d]));
          hi[d] = std::min(lo[d] + 1, src[d] - 1);
          t[d] = x[d] - lo[d];
        }
        if (!inside) continue;
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) {
          const int a = c >> 2 & 1, b = c >> 1 & 1, s = c & 1;
          const double w = (a ? t[0] : 1.0 - t[0]) * (b ? t[1] : 1.0 - t[1]) * (s ? t[2] : 1.0 - t[2]);
          if (w == 0.0) continue;
          acc += w * v(a ? hi[0] : lo[0], b ? hi[1] : lo[1], s ? hi[2] : lo[2]);
        }
        out(i, j, k) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

LabelVolume apply_deformation(const LabelVolume& v, const DeformationField& field) {
  const auto e = field.extents();
  const auto src = v.extents();
  LabelVolume out(e, 0);
  for (int i = 0; i < e[0]; ++i)
    for (int j = 0; j < e[1]; ++j)
      for (int k = 0; k < e[2]; ++k) {
        const int a = static_cast<int>(std::floor(i + field.displacement[0](i, j, k) + 0.5f));
        const int b = static_cast<int>(std::floor(j + field.displacement[1](i, j, k) + 0.5f));
        const int c = static_cast<int>(std::floor(k + field.displacement[2](i, j, k) + 0.5f));
        if (a >= 0 && b >= 0 && c >= 0 && a < src[0] && b < src[1] && c < src[2]) out(i, j, k) = v(a, b, c);
      }
  return out;
}

namespace {

template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

PreprocessedPair preprocess_pair(const RawStudy& reference, const RawStudy& target, const LabelVolume& reference_seg,
                                 const RegistrationBackend& backend, const std::optional<LabelVolume>& target_seg,
                                 const std::array<int, 3>& output_extents) {
  struct Cropped {
    VoxelGrid<float> volume;
    LabelVolume lung;
    LabelVolume seg;
  };
  auto crop_study = [](const RawStudy& s, const LabelVolume* seg) {
    require_same_extents(s.raw_volume, s.lung_mask, "study " + s.patient_id + " volume vs lung mask");
    const auto box = mask_bounding_box(s.lung_mask);
    Cropped c{crop(s.raw_volume, box), crop(s.lung_mask, box), {}};
    if (seg) {
      require_same_extents(s.raw_volume, *seg, "study " + s.patient_id + " volume vs segmentation");
      c.seg = crop(*seg, box);
    }
    return c;
  };

  const auto ref_c = stage("crop", [&] { return crop_study(reference, &reference_seg); });
  const auto tgt_c = stage("crop", [&] { return crop_study(target, target_seg ? &*target_seg : nullptr); });

  Volume ref_n = stage("normalize", [&] { return clip_normalize(ref_c.volume); });
  Volume tgt_n = stage("normalize", [&] { return clip_normalize(tgt_c.volume); });

  const auto field = stage("register", [&] { return register_reference(ref_c.lung, tgt_c.lung, backend); });

  auto ref_w = stage("warp", [&] { return apply_deformation(ref_n.data, field, Kind::kImage); });
  auto ref_seg_w = stage("warp", [&] { return apply_deformation(ref_c.seg, field); });

  const auto dropped = stage("drop_empty_slices", [&] { return drop_empty_slices(tgt_n, Plane::kAxial); });
  const auto& kept = dropped.kept;

  return stage("resize", [&] {
    PreprocessedPair out;
    out.kept_axial = kept;
    out.target = Volume{resize(dropped.volume.data, output_extents), target.spacing, target.patient_id};
    out.reference = Volume{resize(select_slices(ref_w, Plane::kAxial, kept), output_extents), reference.spacing,
                           reference.patient_id};
    out.reference_seg = resize(select_slices(ref_seg_w, Plane::kAxial, kept), output_extents);
    if (target_seg) out.target_seg = resize(select_slices(tgt_c.seg, Plane::kAxial, kept), output_extents);
    return out;
  });
}

}  // namespace longiseg::preprocess
