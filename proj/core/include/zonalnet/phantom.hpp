#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "zonalnet/volume.hpp"

namespace zonalnet {

struct PhantomOptions {
  std::int64_t n_slices = 12;  // at least 6
  std::int64_t size = 192;     // in-plane extent, at least 48
  std::array<double, 3> spacing_mm{0.5, 0.5, 3.6};
  // When positive, a second-reader mask is produced by perturbing the zone
  // contours by roughly this relative amount (e.g. 0.06).
  double reader_jitter = 0.0;
};

struct PhantomCase {
  Volume image;
  Volume mask;
  std::optional<Volume> reader2_mask;
};

// Synthetic T2-like prostate volume: an outer ellipse (prostate) containing
// an off-center inner ellipse (transition zone), swept along the slice axis
// with non-prostate padding at both ends. Slice categories always appear in
// the anatomical order base -> middle -> apex, each with at least one slice:
// base slices contain TZ only, middle slices both zones, apex slices PZ only.
// Intensities follow PZ > TZ > background with noise and a smooth bias field.
// Identical (seed, options) pairs produce identical cases.
PhantomCase generate_phantom(std::uint64_t seed, const PhantomOptions& options = {});

}  // namespace zonalnet
