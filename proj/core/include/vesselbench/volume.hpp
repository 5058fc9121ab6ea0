#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vb {

// Grid convention used everywhere: shape = (nx, ny, nz), spacing in mm per
// voxel along each axis, linear index = x + nx*(y + ny*z). This is the NIfTI
// payload order, so volumes load and store without reshuffling.

struct Volume3D {
  std::array<int, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<float> data;
  // Opaque copy of the NIfTI header this volume was read from (if any).
  // Re-used on write so orientation fields survive a round-trip untouched.
  std::vector<unsigned char> raw_header;

  Volume3D() = default;
  Volume3D(std::array<int, 3> s, std::array<double, 3> sp, float fill = 0.0f)
      : shape(s), spacing(sp),
        data(static_cast<std::size_t>(s[0]) * s[1] * s[2], fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(shape[0]) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(z));
  }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }
  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < shape[0] && y < shape[1] && z < shape[2];
  }
};

struct LabelVolume {
  std::array<int, 3> shape{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<std::uint8_t> data;  // values in {0,1}
  std::vector<unsigned char> raw_header;

  LabelVolume() = default;
  LabelVolume(std::array<int, 3> s, std::array<double, 3> sp, std::uint8_t fill = 0)
      : shape(s), spacing(sp),
        data(static_cast<std::size_t>(s[0]) * s[1] * s[2], fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(shape[0]) *
               (static_cast<std::size_t>(y) +
                static_cast<std::size_t>(shape[1]) * static_cast<std::size_t>(z));
  }
  std::uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
  std::uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < shape[0] && y < shape[1] && z < shape[2];
  }
  std::size_t foreground_count() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
  }
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

/// Reads a .nii / .nii.gz image, or the raw fallback (<name>.bin +
/// <name>.json sidecar). Spacing comes from the header; the stored array is
/// returned bit-exactly (no intensity rescaling is ever applied).
Volume3D read_volume(const std::string& path);

/// Same as read_volume but maps any nonzero stored value to 1.
LabelVolume read_label(const std::string& path);

/// Writes float32 (Volume3D) or uint8 (LabelVolume) payloads. Format picked
/// by extension: .nii, .nii.gz, or .bin/.json for the raw fallback.
void write_volume(const Volume3D& v, const std::string& path);
void write_volume(const LabelVolume& v, const std::string& path);

/// Voxelwise confusion counts of a prediction against ground truth.
/// Throws on shape mismatch; tp+fp+fn+tn always equals the voxel count.
ConfusionCounts confusion_counts(const LabelVolume& pred, const LabelVolume& gt);

}  // namespace vb
