#pragma once

#include <array>
#include <cstdint>

#include "zonalnet/image.hpp"
#include "zonalnet/volume.hpp"

namespace zonalnet {

// Axis-aligned crop window in voxel coordinates.
struct CropBox {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
};

// Central crop covering size_mm of physical extent per axis. The pixel count
// is round(size_mm / spacing); when centering is ambiguous the window shifts
// left/up (start = floor((extent - crop) / 2)).
CropBox central_crop_box(const Volume& v, double size_mm);
Volume central_crop_mm(const Volume& v, double size_mm);

// In-plane resampling to target x target: bilinear for intensities, nearest
// neighbour for labels, both with half-pixel centers. Matching sizes return
// a bit-identical copy.
ImageSlice resample_slice(const ImageSlice& s, std::int64_t target);
LabelMask resample_slice(const LabelMask& m, std::int64_t target);

// Per-slice z-score; constant slices map to all zeros.
ImageSlice zscore_normalize(const ImageSlice& s);

ImageSlice hflip(const ImageSlice& s);
LabelMask hflip(const LabelMask& m);

struct ElasticSpec {
  bool enabled = true;
  double alpha_px = 10.0;  // displacement amplitude
  double sigma_px = 4.0;   // smoothing of the random field
};

struct AugmentSpec {
  double hflip_probability = 0.5;
  std::array<double, 2> rotation_range_degrees{-5.0, 5.0};  // must be symmetric
  ElasticSpec elastic{};
};

struct AugmentedSample {
  ImageSlice image;
  LabelMask mask;
};

// Random horizontal flip, rotation and elastic warp, the same geometric
// transform applied to image (bilinear, zero border) and mask (nearest, zero
// border). Identical (spec, seed) pairs produce identical outputs.
AugmentedSample augment(const ImageSlice& image, const LabelMask& mask, const AugmentSpec& spec,
                        std::uint64_t seed);

// splitmix64-style mixing for reproducible per-(epoch, sample) seed streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace zonalnet
