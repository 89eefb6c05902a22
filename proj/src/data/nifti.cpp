#include "ddunet/data/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "ddunet/engine/error.hpp"

static_assert(std::endian::native == std::endian::little, "little-endian host required");

namespace ddunet::data {
namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDefaultOffset = 352;

template <typename V>
V get(const std::vector<std::uint8_t>& buf, std::size_t off, bool swap) {
  V v;
  std::memcpy(&v, buf.data() + off, sizeof(V));
  if (swap) {
    auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(V)>>(v);
    std::reverse(raw.begin(), raw.end());
    v = std::bit_cast<V>(raw);
  }
  return v;
}

template <typename V>
void put(std::vector<std::uint8_t>& buf, std::size_t off, V v) {
  std::memcpy(buf.data() + off, &v, sizeof(V));
}

bool ends_with_gz(const std::filesystem::path& p) {
  const std::string s = p.string();
  return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path, bool& compressed) {
  if (!std::filesystem::is_regular_file(path)) throw DataError("cannot open '" + path.string() + "'");
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 20);
  for (;;) {
    const int n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(f, &code);
      gzclose(f);
      throw DataError("read error in '" + path.string() + "': " + msg);
    }
    if (n == 0) break;
    if (out.empty()) compressed = gzdirect(f) == 0;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(f);
  return out;
}

bool supported(std::int16_t code) {
  switch (static_cast<NiftiType>(code)) {
    case NiftiType::kUint8:
    case NiftiType::kInt16:
    case NiftiType::kInt32:
    case NiftiType::kFloat32:
    case NiftiType::kFloat64:
      return true;
  }
  return false;
}

template <typename S, typename T>
void convert(const std::uint8_t* src, std::size_t n, std::vector<T>& out) {
  for (std::size_t i = 0; i < n; ++i) {
    S v;
    std::memcpy(&v, src + i * sizeof(S), sizeof(S));
    out[i] = static_cast<T>(v);
  }
}

template <typename S>
NiftiVolume make_volume(std::array<std::size_t, 3> dims, std::span<const S> voxels, NiftiType type) {
  if (dims[0] * dims[1] * dims[2] != voxels.size() || voxels.empty()) {
    throw ShapeError("NiftiVolume: dims do not match voxel count");
  }
  NiftiVolume v;
  v.dims = dims;
  v.type = type;
  v.bytes.resize(voxels.size_bytes());
  std::memcpy(v.bytes.data(), voxels.data(), voxels.size_bytes());
  return v;
}

}  // namespace

std::size_t element_size(NiftiType type) {
  switch (type) {
    case NiftiType::kUint8:
      return 1;
    case NiftiType::kInt16:
      return 2;
    case NiftiType::kInt32:
    case NiftiType::kFloat32:
      return 4;
    case NiftiType::kFloat64:
      return 8;
  }
  throw DataError("unsupported NIfTI datatype");
}

std::string to_string(NiftiType type) {
  switch (type) {
    case NiftiType::kUint8:
      return "uint8";
    case NiftiType::kInt16:
      return "int16";
    case NiftiType::kInt32:
      return "int32";
    case NiftiType::kFloat32:
      return "float32";
    case NiftiType::kFloat64:
      return "float64";
  }
  return "?";
}

template <typename T>
std::vector<T> NiftiVolume::values() const {
  const std::size_t n = numel();
  if (bytes.size() != n * element_size(type)) throw ShapeError("NiftiVolume: payload does not match dims");
  std::vector<T> out(n);
  switch (type) {
    case NiftiType::kUint8:
      convert<std::uint8_t>(bytes.data(), n, out);
      break;
    case NiftiType::kInt16:
      convert<std::int16_t>(bytes.data(), n, out);
      break;
    case NiftiType::kInt32:
      convert<std::int32_t>(bytes.data(), n, out);
      break;
    case NiftiType::kFloat32:
      convert<float>(bytes.data(), n, out);
      break;
    case NiftiType::kFloat64:
      convert<double>(bytes.data(), n, out);
      break;
  }
  if (scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f)) {
    for (T& v : out) v = static_cast<T>(static_cast<double>(v) * scl_slope + scl_inter);
  }
  return out;
}

NiftiVolume NiftiVolume::from_float32(std::array<std::size_t, 3> dims, std::span<const float> voxels) {
  return make_volume(dims, voxels, NiftiType::kFloat32);
}

NiftiVolume NiftiVolume::from_uint8(std::array<std::size_t, 3> dims, std::span<const std::uint8_t> voxels) {
  return make_volume(dims, voxels, NiftiType::kUint8);
}

NiftiVolume NiftiVolume::from_int16(std::array<std::size_t, 3> dims, std::span<const std::int16_t> voxels) {
  return make_volume(dims, voxels, NiftiType::kInt16);
}

NiftiVolume load_nifti(const std::filesystem::path& path) {
  const std::string name = path.string();
  bool compressed = false;
  std::vector<std::uint8_t> buf = read_all(path, compressed);
  if (buf.size() < kHeaderSize) throw DataError("'" + name + "': truncated header");

  bool swap = false;
  const auto sizeof_hdr = get<std::int32_t>(buf, 0, false);
  if (sizeof_hdr != 348) {
    if (get<std::int32_t>(buf, 0, true) != 348) throw DataError("'" + name + "': bad header size");
    swap = true;
  }
  if (std::memcmp(buf.data() + 344, "n+1\0", 4) != 0) {
    throw DataError("'" + name + "': bad magic (expected single-file NIfTI-1 'n+1')");
  }

  const auto ndim = get<std::int16_t>(buf, 40, swap);
  if (ndim < 1 || ndim > 7) throw DataError("'" + name + "': invalid dim[0] = " + std::to_string(ndim));
  NiftiVolume v;
  for (int i = 1; i <= ndim; ++i) {
    const auto d = get<std::int16_t>(buf, 40 + 2 * i, swap);
    if (d < 1) throw DataError("'" + name + "': non-positive extent in dim[" + std::to_string(i) + "]");
    if (i <= 3) {
      v.dims[i - 1] = static_cast<std::size_t>(d);
    } else if (d != 1) {
      throw DataError("'" + name + "': only 3D volumes are supported");
    }
  }

  const auto code = get<std::int16_t>(buf, 70, swap);
  if (!supported(code)) throw DataError("'" + name + "': unsupported datatype code " + std::to_string(code));
  v.type = static_cast<NiftiType>(code);
  for (int i = 0; i < 3; ++i) v.spacing[i] = get<float>(buf, 80 + 4 * i, swap);
  const float offset = get<float>(buf, 108, swap);
  v.scl_slope = get<float>(buf, 112, swap);
  v.scl_inter = get<float>(buf, 116, swap);
  v.data_offset = offset < static_cast<float>(kDefaultOffset) ? kDefaultOffset : static_cast<std::size_t>(offset);

  const std::size_t esize = element_size(v.type);
  const std::size_t payload = v.numel() * esize;
  if (buf.size() < v.data_offset + payload) {
    throw DataError("'" + name + "': truncated payload (expected " + std::to_string(payload) + " bytes)");
  }
  v.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(v.data_offset),
                 buf.begin() + static_cast<std::ptrdiff_t>(v.data_offset + payload));
  if (swap && esize > 1) {
    for (std::size_t i = 0; i < v.bytes.size(); i += esize) {
      std::reverse(v.bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   v.bytes.begin() + static_cast<std::ptrdiff_t>(i + esize));
    }
  }
  v.data_offset = kDefaultOffset;
  v.gzip = compressed;
  return v;
}

void save_nifti(const NiftiVolume& volume, const std::filesystem::path& path) {
  if (path.empty()) throw DataError("save_nifti: empty path");
  const std::size_t esize = element_size(volume.type);
  if (volume.bytes.size() != volume.numel() * esize || volume.bytes.empty()) {
    throw ShapeError("save_nifti: payload does not match dims");
  }
  for (std::size_t d : volume.dims) {
    if (d < 1 || d > 32767) throw ShapeError("save_nifti: extent out of range");
  }

  std::vector<std::uint8_t> buf(kDefaultOffset, 0);
  put<std::int32_t>(buf, 0, 348);
  put<std::int8_t>(buf, 38, 'r');
  put<std::int16_t>(buf, 40, 3);
  for (int i = 0; i < 3; ++i) put<std::int16_t>(buf, 42 + 2 * i, static_cast<std::int16_t>(volume.dims[i]));
  for (int i = 4; i < 8; ++i) put<std::int16_t>(buf, 40 + 2 * i, 1);
  put<std::int16_t>(buf, 70, static_cast<std::int16_t>(volume.type));
  put<std::int16_t>(buf, 72, static_cast<std::int16_t>(esize * 8));
  put<float>(buf, 76, 1.0f);
  for (int i = 0; i < 3; ++i) put<float>(buf, 80 + 4 * i, volume.spacing[i]);
  put<float>(buf, 108, static_cast<float>(kDefaultOffset));
  put<float>(buf, 112, volume.scl_slope);
  put<float>(buf, 116, volume.scl_inter);
  put<std::uint8_t>(buf, 123, 2);  // mm
  put<std::int16_t>(buf, 252, 0);
  put<std::int16_t>(buf, 254, 1);
  put<float>(buf, 280, volume.spacing[0]);
  put<float>(buf, 300, volume.spacing[1]);
  put<float>(buf, 320, volume.spacing[2]);
  std::memcpy(buf.data() + 344, "n+1\0", 4);
  buf.insert(buf.end(), volume.bytes.begin(), volume.bytes.end());

  const std::string name = path.string();
  if (ends_with_gz(path)) {
    gzFile f = gzopen(name.c_str(), "wb6");
    if (!f) throw DataError("save_nifti: cannot write '" + name + "'");
    const int n = gzwrite(f, buf.data(), static_cast<unsigned>(buf.size()));
    const int rc = gzclose(f);
    if (n != static_cast<int>(buf.size()) || rc != Z_OK) throw DataError("save_nifti: write failed for '" + name + "'");
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("save_nifti: cannot write '" + name + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("save_nifti: write failed for '" + name + "'");
}

template std::vector<float> NiftiVolume::values<float>() const;
template std::vector<double> NiftiVolume::values<double>() const;

}  // namespace ddunet::data
