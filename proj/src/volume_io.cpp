#include "longiseg/volume_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include "json.hpp"
#include <sstream>

namespace longiseg::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348);

enum NiftiType : std::int16_t {
  kDtUInt8 = 2,
  kDtInt16 = 4,
  kDtInt32 = 8,
  kDtFloat32 = 16,
  kDtFloat64 = 64,
  kDtInt8 = 256,
  kDtUInt16 = 512,
};

bool is_nifti(const fs::path& p) {
  const std::string name = p.filename().string();
  auto ends_with = [&](std::string_view s) { return name.size() >= s.size() && name.ends_with(s); };
  return ends_with(".nii") || ends_with(".nii.gz");
}

bool is_gzip_name(const fs::path& p) { return p.filename().string().ends_with(".gz"); }

std::string gunzip(const std::string& in) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  char buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IoError("gzip stream is corrupt");
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw IoError("gzip stream is truncated");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::string gzip(const std::string& in) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("zlib init failed");
  }
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
  zs.avail_in = static_cast<uInt>(in.size());
  std::string out;
  char buf[1 << 16];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf);
    zs.avail_out = sizeof(buf);
    rc = deflate(&zs, Z_FINISH);
    if (rc == Z_STREAM_ERROR) {
      deflateEnd(&zs);
      throw IoError("gzip compression failed");
    }
    out.append(buf, sizeof(buf) - zs.avail_out);
  }
  deflateEnd(&zs);
  return out;
}

bool has_gzip_magic(const std::string& bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
         static_cast<unsigned char>(bytes[1]) == 0x8b;
}

template <typename T>
T load(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

struct DecodedNifti {
  std::array<int, 3> extents{};
  std::array<double, 3> spacing{};
  std::vector<double> values;  // (h, w, s) row-major
};

DecodedNifti decode_nifti(std::string bytes) {
  if (has_gzip_magic(bytes)) bytes = gunzip(bytes);
  if (bytes.size() < sizeof(NiftiHeader)) throw IoError("NIfTI: file shorter than header");
  NiftiHeader hdr;
  std::memcpy(&hdr, bytes.data(), sizeof(hdr));
  if (hdr.sizeof_hdr != 348) throw IoError("NIfTI: bad header size (big-endian files are not supported)");
  if (std::memcmp(hdr.magic, "n+1", 4) != 0) throw IoError("NIfTI: only single-file n+1 images are supported");
  const int ndim = hdr.dim[0];
  if (ndim < 1 || ndim > 7) throw IoError("NIfTI: invalid dimension count");
  for (int d = 4; d <= ndim; ++d) {
    if (hdr.dim[d] > 1) throw IoError("NIfTI: only 3D volumes are supported");
  }
  DecodedNifti out;
  for (int d = 0; d < 3; ++d) {
    out.extents[d] = d < ndim ? hdr.dim[d + 1] : 1;
    if (out.extents[d] < 1) throw IoError("NIfTI: non-positive extent");
    const float px = hdr.pixdim[d + 1];
    out.spacing[d] = px > 0.0f ? px : 1.0;
  }
  const int h = out.extents[0], w = out.extents[1], s = out.extents[2];
  const std::size_t count = static_cast<std::size_t>(h) * w * s;
  std::size_t elem = 0;
  switch (hdr.datatype) {
    case kDtUInt8:
    case kDtInt8: elem = 1; break;
    case kDtInt16:
    case kDtUInt16: elem = 2; break;
    case kDtInt32:
    case kDtFloat32: elem = 4; break;
    case kDtFloat64: elem = 8; break;
    default: throw IoError("NIfTI: unsupported datatype " + std::to_string(hdr.datatype));
  }
  const auto offset = static_cast<std::size_t>(hdr.vox_offset);
  if (bytes.size() < offset + count * elem) throw IoError("NIfTI: voxel data truncated");
  const bool scaled = hdr.scl_slope != 0.0f && !(hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f);
  out.values.resize(count);
  const char* base = bytes.data() + offset;
  for (int k = 0; k < s; ++k) {
    for (int j = 0; j < w; ++j) {
      for (int i = 0; i < h; ++i) {
        const std::size_t src = i + static_cast<std::size_t>(h) * (j + static_cast<std::size_t>(w) * k);
        const char* p = base + src * elem;
        double v = 0.0;
        switch (hdr.datatype) {
          case kDtUInt8: v = load<std::uint8_t>(p); break;
          case kDtInt8: v = load<std::int8_t>(p); break;
          case kDtInt16: v = load<std::int16_t>(p); break;
          case kDtUInt16: v = load<std::uint16_t>(p); break;
          case kDtInt32: v = load<std::int32_t>(p); break;
          case kDtFloat32: v = load<float>(p); break;
          case kDtFloat64: v = load<double>(p); break;
        }
        if (scaled) v = v * hdr.scl_slope + hdr.scl_inter;
        out.values[(static_cast<std::size_t>(i) * w + j) * s + k] = v;
      }
    }
  }
  return out;
}

template <typename T>
std::string encode_nifti(const VoxelGrid<T>& v, const std::array<double, 3>& spacing, std::int16_t datatype) {
  NiftiHeader hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  for (int d = 0; d < 3; ++d) {
    hdr.dim[d + 1] = static_cast<std::int16_t>(v.extent(d));
    hdr.pixdim[d + 1] = static_cast<float>(spacing[d]);
  }
  for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
  hdr.pixdim[0] = 1.0f;
  hdr.datatype = datatype;
  hdr.bitpix = static_cast<std::int16_t>(8 * sizeof(T));
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.xyzt_units = 2;  // mm
  hdr.qform_code = 1;
  hdr.qoffset_x = hdr.qoffset_y = hdr.qoffset_z = 0.0f;
  std::memcpy(hdr.magic, "n+1", 4);

  const int h = v.extent(0), w = v.extent(1), s = v.extent(2);
  std::string out(352 + v.size() * sizeof(T), '\0');
  std::memcpy(out.data(), &hdr, sizeof(hdr));
  char* base = out.data() + 352;
  for (int k = 0; k < s; ++k) {
    for (int j = 0; j < w; ++j) {
      for (int i = 0; i < h; ++i) {
        const std::size_t dst = i + static_cast<std::size_t>(h) * (j + static_cast<std::size_t>(w) * k);
        const T val = v(i, j, k);
        std::memcpy(base + dst * sizeof(T), &val, sizeof(T));
      }
    }
  }
  return out;
}

fs::path sidecar_path(const fs::path& p) { return fs::path(p.string() + ".json"); }

struct RawMeta {
  std::array<int, 3> extents{};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string dtype = "float32";
};

RawMeta read_sidecar(const fs::path& p) {
  const auto side = sidecar_path(p);
  if (!fs::exists(side)) throw IoError("missing sidecar " + side.string());
  RawMeta m;
  try {
    const json j = json::parse(read_file(side));
    const auto shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw IoError("sidecar shape must have three entries");
    for (int d = 0; d < 3; ++d) m.extents[d] = shape[d].get<int>();
    if (j.contains("spacing")) {
      for (int d = 0; d < 3; ++d) m.spacing[d] = j["spacing"][d].get<double>();
    }
    if (j.contains("dtype")) m.dtype = j["dtype"].get<std::string>();
  } catch (const json::exception& e) {
    throw IoError("sidecar " + side.string() + ": " + e.what());
  }
  for (int e : m.extents) {
    if (e <= 0) throw IoError("sidecar " + side.string() + ": non-positive extent");
  }
  return m;
}

void write_sidecar(const fs::path& p, const std::array<int, 3>& e, const std::array<double, 3>& spacing,
                   const std::string& dtype) {
  json j;
  j["shape"] = e;
  j["spacing"] = spacing;
  j["dtype"] = dtype;
  write_file(sidecar_path(p), j.dump());
}

template <typename T>
VoxelGrid<T> read_raw(const fs::path& p, const RawMeta& m) {
  const std::string bytes = read_file(p);
  const std::size_t count = VoxelGrid<T>::count(m.extents);
  std::size_t elem = m.dtype == "float32" ? 4 : (m.dtype == "uint8" || m.dtype == "int8") ? 1 : 0;
  if (elem == 0) throw IoError(p.string() + ": unsupported dtype " + m.dtype);
  if (bytes.size() != count * elem) {
    throw IoError(p.string() + ": expected " + std::to_string(count * elem) + " bytes, found " +
                  std::to_string(bytes.size()));
  }
  VoxelGrid<T> out(m.extents);
  auto vals = out.values();
  for (std::size_t i = 0; i < count; ++i) {
    const char* src = bytes.data() + i * elem;
    if (m.dtype == "float32") {
      vals[i] = static_cast<T>(load<float>(src));
    } else if (m.dtype == "uint8") {
      vals[i] = static_cast<T>(load<std::uint8_t>(src));
    } else {
      vals[i] = static_cast<T>(load<std::int8_t>(src));
    }
  }
  return out;
}

template <typename T>
std::string raw_bytes(const VoxelGrid<T>& v) {
  std::string out(v.size() * sizeof(T), '\0');
  std::memcpy(out.data(), v.data(), out.size());
  return out;
}

template <typename T>
VoxelGrid<T> grid_from_decoded(const DecodedNifti& d) {
  std::vector<T> vals(d.values.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double x = d.values[i];
    if constexpr (std::is_floating_point_v<T>) {
      vals[i] = static_cast<T>(x);
    } else {
      vals[i] = static_cast<T>(std::lround(x));
    }
  }
  return VoxelGrid<T>(d.extents, std::move(vals));
}

template <typename T>
void write_any(const fs::path& path, const VoxelGrid<T>& v, const std::array<double, 3>& spacing,
               std::int16_t nifti_type, const std::string& dtype) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (is_nifti(path)) {
    std::string bytes = encode_nifti(v, spacing, nifti_type);
    if (is_gzip_name(path)) bytes = gzip(bytes);
    write_file(path, bytes);
  } else {
    write_file(path, raw_bytes(v));
    write_sidecar(path, v.extents(), spacing, dtype);
  }
}

template <typename T>
VoxelGrid<T> read_any(const fs::path& path, std::array<double, 3>* spacing) {
  if (!fs::exists(path)) throw IoError("file not found: " + path.string());
  if (is_nifti(path)) {
    auto d = decode_nifti(read_file(path));
    if (spacing) *spacing = d.spacing;
    return grid_from_decoded<T>(d);
  }
  const RawMeta m = read_sidecar(path);
  if (spacing) *spacing = m.spacing;
  return read_raw<T>(path, m);
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

FloatVolumeFile read_float_volume(const fs::path& path) {
  FloatVolumeFile f;
  f.data = read_any<float>(path, &f.spacing);
  for (float x : f.data.values()) {
    if (!std::isfinite(x)) throw IoError(path.string() + ": non-finite voxel value");
  }
  return f;
}

LabelVolume read_label_volume(const fs::path& path) { return read_any<std::uint8_t>(path, nullptr); }

VoxelGrid<std::int8_t> read_int8_volume(const fs::path& path) { return read_any<std::int8_t>(path, nullptr); }

void write_volume(const fs::path& path, const VoxelGrid<float>& v, const std::array<double, 3>& spacing) {
  write_any(path, v, spacing, kDtFloat32, "float32");
}

void write_volume(const fs::path& path, const LabelVolume& v, const std::array<double, 3>& spacing) {
  write_any(path, v, spacing, kDtUInt8, "uint8");
}

void write_volume(const fs::path& path, const VoxelGrid<std::int8_t>& v, const std::array<double, 3>& spacing) {
  write_any(path, v, spacing, kDtInt8, "int8");
}

std::string encode_raw(const LabelVolume& v) { return raw_bytes(v); }
std::string encode_raw(const VoxelGrid<float>& v) { return raw_bytes(v); }

FloatVolumeFile decode_float_volume(const std::string& bytes) {
  auto d = decode_nifti(bytes);
  FloatVolumeFile f{grid_from_decoded<float>(d), d.spacing};
  for (float x : f.data.values()) {
    if (!std::isfinite(x)) throw IoError("non-finite voxel value");
  }
  return f;
}

LabelVolume decode_label_volume(const std::string& bytes) { return grid_from_decoded<std::uint8_t>(decode_nifti(bytes)); }

}  // namespace longiseg::io
