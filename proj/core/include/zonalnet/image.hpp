#pragma once

#include <cstdint>
#include <vector>

namespace zonalnet {

// Zone labels used throughout: 0 background, 1 peripheral zone, 2 transition
// zone.
inline constexpr std::uint8_t kBackgroundLabel = 0;
inline constexpr std::uint8_t kPzLabel = 1;
inline constexpr std::uint8_t kTzLabel = 2;
inline constexpr int kNumClasses = 3;

// One 2-D image plane in float intensity, row-major.
struct ImageSlice {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<float> pixels;

  float& at(std::int64_t x, std::int64_t y) { return pixels[static_cast<std::size_t>(y * width + x)]; }
  float at(std::int64_t x, std::int64_t y) const {
    return pixels[static_cast<std::size_t>(y * width + x)];
  }
};

// One 2-D label plane, values restricted to {0, 1, 2}.
struct LabelMask {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> labels;

  std::uint8_t& at(std::int64_t x, std::int64_t y) {
    return labels[static_cast<std::size_t>(y * width + x)];
  }
  std::uint8_t at(std::int64_t x, std::int64_t y) const {
    return labels[static_cast<std::size_t>(y * width + x)];
  }
};

// Throws std::invalid_argument when sizes disagree or labels leave {0, 1, 2}.
void validate_mask(const LabelMask& mask, const char* context);
void validate_image(const ImageSlice& image, const char* context);

}  // namespace zonalnet
