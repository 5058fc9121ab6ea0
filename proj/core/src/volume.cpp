#include "vesselbench/volume.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace vb {
namespace {

using json = nlohmann::json;

// NIfTI-1, 348-byte header.
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
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;
constexpr std::int16_t DT_UINT16 = 512;

template <typename T>
void byteswap_inplace(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

void byteswap_header(NiftiHeader& h) {
  byteswap_inplace(h.sizeof_hdr);
  byteswap_inplace(h.extents);
  byteswap_inplace(h.session_error);
  for (auto& d : h.dim) byteswap_inplace(d);
  byteswap_inplace(h.intent_p1);
  byteswap_inplace(h.intent_p2);
  byteswap_inplace(h.intent_p3);
  byteswap_inplace(h.intent_code);
  byteswap_inplace(h.datatype);
  byteswap_inplace(h.bitpix);
  byteswap_inplace(h.slice_start);
  for (auto& p : h.pixdim) byteswap_inplace(p);
  byteswap_inplace(h.vox_offset);
  byteswap_inplace(h.scl_slope);
  byteswap_inplace(h.scl_inter);
  byteswap_inplace(h.slice_end);
  byteswap_inplace(h.cal_max);
  byteswap_inplace(h.cal_min);
  byteswap_inplace(h.slice_duration);
  byteswap_inplace(h.toffset);
  byteswap_inplace(h.glmax);
  byteswap_inplace(h.glmin);
  byteswap_inplace(h.qform_code);
  byteswap_inplace(h.sform_code);
  byteswap_inplace(h.quatern_b);
  byteswap_inplace(h.quatern_c);
  byteswap_inplace(h.quatern_d);
  byteswap_inplace(h.qoffset_x);
  byteswap_inplace(h.qoffset_y);
  byteswap_inplace(h.qoffset_z);
  for (auto& v : h.srow_x) byteswap_inplace(v);
  for (auto& v : h.srow_y) byteswap_inplace(v);
  for (auto& v : h.srow_z) byteswap_inplace(v);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// gzread handles plain files transparently, so all NIfTI reads go through it.
struct GzReader {
  gzFile f = nullptr;
  explicit GzReader(const std::string& path) {
    f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open file: " + path);
  }
  ~GzReader() {
    if (f) gzclose(f);
  }
  void read(void* dst, std::size_t n, const std::string& path) {
    std::size_t done = 0;
    auto* p = static_cast<unsigned char*>(dst);
    while (done < n) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
      const int got = gzread(f, p + done, chunk);
      if (got <= 0) throw std::runtime_error("truncated or unreadable payload: " + path);
      done += static_cast<std::size_t>(got);
    }
  }
  void skip(std::size_t n, const std::string& path) {
    std::vector<unsigned char> junk(std::min<std::size_t>(n, 65536));
    std::size_t left = n;
    while (left > 0) {
      const std::size_t chunk = std::min(left, junk.size());
      read(junk.data(), chunk, path);
      left -= chunk;
    }
  }
};

struct RawPayload {
  std::array<int, 3> shape;
  std::array<double, 3> spacing;
  std::vector<float> values;  // x-fastest order, already converted
  std::vector<unsigned char> raw_header;
};

template <typename Src>
void convert_payload(const std::vector<unsigned char>& bytes, std::size_t n, bool swap,
                     std::vector<float>& out) {
  out.resize(n);
  const Src* src = reinterpret_cast<const Src*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i) {
    Src v = src[i];
    if (swap) byteswap_inplace(v);
    out[i] = static_cast<float>(v);
  }
}

RawPayload read_nifti(const std::string& path) {
  GzReader in(path);
  NiftiHeader hdr{};
  in.read(&hdr, sizeof(hdr), path);

  bool swap = false;
  if (hdr.sizeof_hdr != 348) {
    byteswap_header(hdr);
    swap = true;
    if (hdr.sizeof_hdr != 348) throw std::runtime_error("malformed header (not NIfTI-1): " + path);
  }
  if (std::strncmp(hdr.magic, "n+1", 3) != 0 && std::strncmp(hdr.magic, "ni1", 3) != 0)
    throw std::runtime_error("malformed header (bad magic): " + path);

  int ndim = hdr.dim[0];
  if (ndim < 1 || ndim > 7) throw std::runtime_error("malformed header (dim[0]): " + path);
  for (int d = ndim; d > 3; --d) {
    if (hdr.dim[d] > 1) throw std::runtime_error("non-3D payload: " + path);
    ndim = d - 1;
  }
  if (ndim != 3) throw std::runtime_error("non-3D payload: " + path);

  RawPayload out;
  out.shape = {hdr.dim[1], hdr.dim[2], hdr.dim[3]};
  for (int a = 0; a < 3; ++a) {
    if (out.shape[a] <= 0) throw std::runtime_error("malformed header (extent): " + path);
    const double sp = std::fabs(static_cast<double>(hdr.pixdim[a + 1]));
    if (!(sp > 0.0) || !std::isfinite(sp))
      throw std::runtime_error("malformed header (pixdim): " + path);
    out.spacing[a] = sp;
  }

  const std::size_t n = static_cast<std::size_t>(out.shape[0]) * out.shape[1] * out.shape[2];
  std::size_t elem = 0;
  switch (hdr.datatype) {
    case DT_UINT8: elem = 1; break;
    case DT_INT16: case DT_UINT16: elem = 2; break;
    case DT_INT32: case DT_FLOAT32: elem = 4; break;
    case DT_FLOAT64: elem = 8; break;
    default:
      throw std::runtime_error("unsupported NIfTI datatype " + std::to_string(hdr.datatype) +
                               ": " + path);
  }

  const std::size_t offset = static_cast<std::size_t>(hdr.vox_offset);
  if (offset > sizeof(hdr)) in.skip(offset - sizeof(hdr), path);

  std::vector<unsigned char> bytes(n * elem);
  in.read(bytes.data(), bytes.size(), path);

  switch (hdr.datatype) {
    case DT_UINT8: convert_payload<std::uint8_t>(bytes, n, false, out.values); break;
    case DT_INT16: convert_payload<std::int16_t>(bytes, n, swap, out.values); break;
    case DT_UINT16: convert_payload<std::uint16_t>(bytes, n, swap, out.values); break;
    case DT_INT32: convert_payload<std::int32_t>(bytes, n, swap, out.values); break;
    case DT_FLOAT32: convert_payload<float>(bytes, n, swap, out.values); break;
    case DT_FLOAT64: convert_payload<double>(bytes, n, swap, out.values); break;
  }
  for (float v : out.values)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite intensities: " + path);

  // Keep the native-endian header bytes for opaque round-tripping.
  out.raw_header.resize(sizeof(hdr));
  std::memcpy(out.raw_header.data(), &hdr, sizeof(hdr));
  return out;
}

std::string raw_base(const std::string& path) {
  if (ends_with(path, ".json")) return path.substr(0, path.size() - 5);
  if (ends_with(path, ".bin")) return path.substr(0, path.size() - 4);
  return path;
}

RawPayload read_raw(const std::string& path) {
  const std::string base = raw_base(path);
  std::ifstream jf(base + ".json");
  if (!jf) throw std::runtime_error("cannot open file: " + base + ".json");
  json meta;
  try {
    jf >> meta;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed sidecar " + base + ".json: " + e.what());
  }

  RawPayload out;
  const auto shape = meta.at("shape").get<std::vector<int>>();
  const auto spacing = meta.at("spacing").get<std::vector<double>>();
  const std::string dtype = meta.at("dtype").get<std::string>();
  if (shape.size() != 3) throw std::runtime_error("non-3D payload: " + base + ".json");
  if (spacing.size() != 3) throw std::runtime_error("malformed sidecar (spacing): " + base);
  for (int a = 0; a < 3; ++a) {
    if (shape[a] <= 0 || !(spacing[a] > 0.0))
      throw std::runtime_error("malformed sidecar (shape/spacing): " + base);
    out.shape[a] = shape[a];
    out.spacing[a] = spacing[a];
  }

  std::size_t elem = 0;
  if (dtype == "uint8") elem = 1;
  else if (dtype == "float32") elem = 4;
  else if (dtype == "float64") elem = 8;
  else throw std::runtime_error("unsupported raw dtype '" + dtype + "': " + base);

  const std::size_t n = static_cast<std::size_t>(out.shape[0]) * out.shape[1] * out.shape[2];
  std::ifstream bf(base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open file: " + base + ".bin");
  std::vector<unsigned char> bytes(n * elem);
  bf.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(bf.gcount()) != bytes.size())
    throw std::runtime_error("truncated payload: " + base + ".bin");

  // File is C-order over shape [nx,ny,nz] (z fastest); internal order is
  // x fastest, so transpose while converting.
  out.values.resize(n);
  const int nx = out.shape[0], ny = out.shape[1], nz = out.shape[2];
  auto store = [&](int x, int y, int z, float v) {
    out.values[static_cast<std::size_t>(x) +
               static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * z)] = v;
  };
  std::size_t i = 0;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z, ++i) {
        float v = 0;
        if (elem == 1) v = static_cast<float>(bytes[i]);
        else if (elem == 4) std::memcpy(&v, bytes.data() + i * 4, 4);
        else {
          double d;
          std::memcpy(&d, bytes.data() + i * 8, 8);
          v = static_cast<float>(d);
        }
        store(x, y, z, v);
      }
  for (float v : out.values)
    if (!std::isfinite(v)) throw std::runtime_error("non-finite intensities: " + base + ".bin");
  return out;
}

bool is_raw_path(const std::string& path) {
  return ends_with(path, ".json") || ends_with(path, ".bin");
}

RawPayload read_any(const std::string& path) {
  return is_raw_path(path) ? read_raw(path) : read_nifti(path);
}

NiftiHeader make_header(const std::array<int, 3>& shape, const std::array<double, 3>& spacing,
                        std::int16_t datatype, std::int16_t bitpix,
                        const std::vector<unsigned char>& stored) {
  NiftiHeader hdr{};
  if (stored.size() == sizeof(NiftiHeader)) {
    std::memcpy(&hdr, stored.data(), sizeof(hdr));
  } else {
    hdr.scl_slope = 1.0f;
    hdr.xyzt_units = 2;  // millimetres
  }
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  hdr.dim[1] = static_cast<std::int16_t>(shape[0]);
  hdr.dim[2] = static_cast<std::int16_t>(shape[1]);
  hdr.dim[3] = static_cast<std::int16_t>(shape[2]);
  for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
  hdr.datatype = datatype;
  hdr.bitpix = bitpix;
  hdr.pixdim[1] = static_cast<float>(spacing[0]);
  hdr.pixdim[2] = static_cast<float>(spacing[1]);
  hdr.pixdim[3] = static_cast<float>(spacing[2]);
  hdr.vox_offset = 352.0f;
  std::memcpy(hdr.magic, "n+1", 4);
  return hdr;
}

void write_nifti(const std::string& path, const NiftiHeader& hdr, const void* payload,
                 std::size_t payload_bytes) {
  const char ext_flag[4] = {0, 0, 0, 0};
  if (ends_with(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write file: " + path);
    bool ok = gzwrite(f, &hdr, sizeof(hdr)) == static_cast<int>(sizeof(hdr));
    ok = ok && gzwrite(f, ext_flag, 4) == 4;
    std::size_t done = 0;
    const auto* p = static_cast<const unsigned char*>(payload);
    while (ok && done < payload_bytes) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(payload_bytes - done, 1u << 30));
      ok = gzwrite(f, p + done, chunk) == static_cast<int>(chunk);
      done += chunk;
    }
    gzclose(f);
    if (!ok) throw std::runtime_error("cannot write file: " + path);
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    f.write(ext_flag, 4);
    f.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
    if (!f) throw std::runtime_error("cannot write file: " + path);
  }
}

template <typename T>
void write_raw(const std::string& path, const std::array<int, 3>& shape,
               const std::array<double, 3>& spacing, const T* values, const char* dtype) {
  const std::string base = raw_base(path);
  json meta;
  meta["shape"] = {shape[0], shape[1], shape[2]};
  meta["spacing"] = {spacing[0], spacing[1], spacing[2]};
  meta["dtype"] = dtype;
  std::ofstream jf(base + ".json");
  if (!jf) throw std::runtime_error("cannot write file: " + base + ".json");
  jf << meta.dump(2) << "\n";
  if (!jf) throw std::runtime_error("cannot write file: " + base + ".json");

  std::ofstream bf(base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write file: " + base + ".bin");
  const int nx = shape[0], ny = shape[1], nz = shape[2];
  std::vector<T> reordered(static_cast<std::size_t>(nx) * ny * nz);
  std::size_t i = 0;
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y)
      for (int z = 0; z < nz; ++z, ++i)
        reordered[i] = values[static_cast<std::size_t>(x) +
                              static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * z)];
  bf.write(reinterpret_cast<const char*>(reordered.data()),
           static_cast<std::streamsize>(reordered.size() * sizeof(T)));
  if (!bf) throw std::runtime_error("cannot write file: " + base + ".bin");
}

}  // namespace

Volume3D read_volume(const std::string& path) {
  RawPayload p = read_any(path);
  Volume3D v;
  v.shape = p.shape;
  v.spacing = p.spacing;
  v.data = std::move(p.values);
  v.raw_header = std::move(p.raw_header);
  return v;
}

LabelVolume read_label(const std::string& path) {
  RawPayload p = read_any(path);
  LabelVolume l;
  l.shape = p.shape;
  l.spacing = p.spacing;
  l.raw_header = std::move(p.raw_header);
  l.data.resize(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i) l.data[i] = p.values[i] != 0.0f ? 1 : 0;
  return l;
}

void write_volume(const Volume3D& v, const std::string& path) {
  if (is_raw_path(path)) {
    write_raw(path, v.shape, v.spacing, v.data.data(), "float32");
    return;
  }
  const NiftiHeader hdr = make_header(v.shape, v.spacing, DT_FLOAT32, 32, v.raw_header);
  write_nifti(path, hdr, v.data.data(), v.data.size() * sizeof(float));
}

void write_volume(const LabelVolume& v, const std::string& path) {
  if (is_raw_path(path)) {
    write_raw(path, v.shape, v.spacing, v.data.data(), "uint8");
    return;
  }
  const NiftiHeader hdr = make_header(v.shape, v.spacing, DT_UINT8, 8, v.raw_header);
  write_nifti(path, hdr, v.data.data(), v.data.size());
}

ConfusionCounts confusion_counts(const LabelVolume& pred, const LabelVolume& gt) {
  if (pred.shape != gt.shape)
    throw std::runtime_error("confusion_counts: shape mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    c.tp += (p && g);
    c.fp += (p && !g);
    c.fn += (!p && g);
    c.tn += (!p && !g);
  }
  return c;
}

}  // namespace vb
