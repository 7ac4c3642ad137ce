#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "zonalnet/image.hpp"

namespace zonalnet {

enum class VolumeKind { image, mask };

// A 3-D scan or label volume. Voxels are stored slice-major then row-major;
// images are uint16 intensities, masks uint8 labels in {0, 1, 2}.
struct Volume {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::int64_t slices = 0;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};  // x, y, z
  VolumeKind kind = VolumeKind::image;
  std::vector<std::uint16_t> image_data;
  std::vector<std::uint8_t> mask_data;

  std::int64_t voxels() const { return width * height * slices; }
  std::int64_t slice_pixels() const { return width * height; }
};

// Throws std::invalid_argument on inconsistent dims, spacing, buffer sizes,
// or out-of-range mask labels.
void validate_volume(const Volume& v, const char* context);

Volume make_image_volume(std::int64_t width, std::int64_t height, std::int64_t slices,
                         std::array<double, 3> spacing_mm);
Volume make_mask_volume(std::int64_t width, std::int64_t height, std::int64_t slices,
                        std::array<double, 3> spacing_mm);

// Copies of one slice plane.
ImageSlice image_slice(const Volume& v, std::int64_t k);
LabelMask mask_slice(const Volume& v, std::int64_t k);
void set_mask_slice(Volume& v, std::int64_t k, const LabelMask& m);

// On-disk form is a pair of files: <base>.json header and <base>.raw
// little-endian voxel blob. Either the base path or the .json path is
// accepted.
void save_volume(const Volume& v, const std::filesystem::path& path);
Volume load_volume(const std::filesystem::path& path);

}  // namespace zonalnet
