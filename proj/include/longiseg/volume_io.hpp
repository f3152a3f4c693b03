#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "longiseg/core.hpp"

namespace longiseg::io {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class VoxelType { kFloat32, kUInt8, kInt8 };

// Supported containers, chosen by file name:
//   *.nii, *.nii.gz   NIfTI-1 single file; (h, w, s) maps to NIfTI (x, y, z)
//   anything else     raw little-endian voxel stream in (h, w, s) row-major order
//                     plus a "<file>.json" sidecar {"shape":[h,w,s],"spacing":[..],"dtype":..}
//                     dtype defaults to "float32"

struct FloatVolumeFile {
  VoxelGrid<float> data;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
};

FloatVolumeFile read_float_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);
VoxelGrid<std::int8_t> read_int8_volume(const std::filesystem::path& path);

void write_volume(const std::filesystem::path& path, const VoxelGrid<float>& v,
                  const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});
void write_volume(const std::filesystem::path& path, const LabelVolume& v,
                  const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});
void write_volume(const std::filesystem::path& path, const VoxelGrid<std::int8_t>& v,
                  const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

/// Raw little-endian stream of (h, w, s) voxels, no header. Used by the HTTP API.
std::string encode_raw(const LabelVolume& v);
std::string encode_raw(const VoxelGrid<float>& v);

/// NIfTI bytes (optionally gzip-compressed) decoded from memory.
FloatVolumeFile decode_float_volume(const std::string& bytes);
LabelVolume decode_label_volume(const std::string& bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace longiseg::io
