#include "zonalnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace zonalnet {

CropBox central_crop_box(const Volume& v, double size_mm) {
  validate_volume(v, "central_crop_mm");
  if (!(size_mm > 0.0)) throw std::invalid_argument("central_crop_mm: size must be positive");
  CropBox box;
  box.width = static_cast<std::int64_t>(std::llround(size_mm / v.spacing_mm[0]));
  box.height = static_cast<std::int64_t>(std::llround(size_mm / v.spacing_mm[1]));
  if (box.width < 1 || box.height < 1)
    throw std::invalid_argument("central_crop_mm: crop smaller than one pixel");
  if (box.width > v.width || box.height > v.height)
    throw std::invalid_argument("central_crop_mm: crop " + std::to_string(box.width) + "x" +
                                std::to_string(box.height) + " px exceeds image " +
                                std::to_string(v.width) + "x" + std::to_string(v.height));
  box.x0 = (v.width - box.width) / 2;
  box.y0 = (v.height - box.height) / 2;
  return box;
}

Volume central_crop_mm(const Volume& v, double size_mm) {
  const CropBox box = central_crop_box(v, size_mm);
  Volume out = v.kind == VolumeKind::image
                   ? make_image_volume(box.width, box.height, v.slices, v.spacing_mm)
                   : make_mask_volume(box.width, box.height, v.slices, v.spacing_mm);
  for (std::int64_t k = 0; k < v.slices; ++k) {
    for (std::int64_t y = 0; y < box.height; ++y) {
      const std::int64_t src = (k * v.height + box.y0 + y) * v.width + box.x0;
      const std::int64_t dst = (k * box.height + y) * box.width;
      if (v.kind == VolumeKind::image)
        std::copy_n(v.image_data.begin() + src, box.width, out.image_data.begin() + dst);
      else
        std::copy_n(v.mask_data.begin() + src, box.width, out.mask_data.begin() + dst);
    }
  }
  return out;
}

ImageSlice resample_slice(const ImageSlice& s, std::int64_t target) {
  validate_image(s, "resample_slice");
  if (target < 1) throw std::invalid_argument("resample_slice: target must be positive");
  if (target == s.width && target == s.height) return s;
  ImageSlice out;
  out.width = target;
  out.height = target;
  out.pixels.resize(static_cast<std::size_t>(target * target));
  const double sx = static_cast<double>(s.width) / static_cast<double>(target);
  const double sy = static_cast<double>(s.height) / static_cast<double>(target);
  for (std::int64_t y = 0; y < target; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(s.height - 1));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
    const std::int64_t y1 = std::min(y0 + 1, s.height - 1);
    const float wy = static_cast<float>(fy - static_cast<double>(y0));
    for (std::int64_t x = 0; x < target; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(s.width - 1));
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
      const std::int64_t x1 = std::min(x0 + 1, s.width - 1);
      const float wx = static_cast<float>(fx - static_cast<double>(x0));
      const float top = s.at(x0, y0) + wx * (s.at(x1, y0) - s.at(x0, y0));
      const float bot = s.at(x0, y1) + wx * (s.at(x1, y1) - s.at(x0, y1));
      out.pixels[static_cast<std::size_t>(y * target + x)] = top + wy * (bot - top);
    }
  }
  return out;
}

LabelMask resample_slice(const LabelMask& m, std::int64_t target) {
  validate_mask(m, "resample_slice");
  if (target < 1) throw std::invalid_argument("resample_slice: target must be positive");
  if (target == m.width && target == m.height) return m;
  LabelMask out;
  out.width = target;
  out.height = target;
  out.labels.resize(static_cast<std::size_t>(target * target));
  const double sx = static_cast<double>(m.width) / static_cast<double>(target);
  const double sy = static_cast<double>(m.height) / static_cast<double>(target);
  for (std::int64_t y = 0; y < target; ++y) {
    const std::int64_t ys = std::clamp<std::int64_t>(
        static_cast<std::int64_t>(std::floor((y + 0.5) * sy)), 0, m.height - 1);
    for (std::int64_t x = 0; x < target; ++x) {
      const std::int64_t xs = std::clamp<std::int64_t>(
          static_cast<std::int64_t>(std::floor((x + 0.5) * sx)), 0, m.width - 1);
      out.labels[static_cast<std::size_t>(y * target + x)] = m.at(xs, ys);
    }
  }
  return out;
}

ImageSlice zscore_normalize(const ImageSlice& s) {
  validate_image(s, "zscore_normalize");
  double sum = 0.0;
  for (const float v : s.pixels) sum += v;
  const double mean = sum / static_cast<double>(s.pixels.size());
  double ssq = 0.0;
  for (const float v : s.pixels) ssq += (v - mean) * (v - mean);
  const double sd = std::sqrt(ssq / static_cast<double>(s.pixels.size()));
  ImageSlice out = s;
  if (sd < 1e-12) {  // constant slice: define the result as all zeros
    std::fill(out.pixels.begin(), out.pixels.end(), 0.0f);
    return out;
  }
  for (float& v : out.pixels) v = static_cast<float>((v - mean) / sd);
  return out;
}

ImageSlice hflip(const ImageSlice& s) {
  validate_image(s, "hflip");
  ImageSlice out = s;
  for (std::int64_t y = 0; y < s.height; ++y)
    for (std::int64_t x = 0; x < s.width; ++x) out.at(x, y) = s.at(s.width - 1 - x, y);
  return out;
}

LabelMask hflip(const LabelMask& m) {
  validate_mask(m, "hflip");
  LabelMask out = m;
  for (std::int64_t y = 0; y < m.height; ++y)
    for (std::int64_t x = 0; x < m.width; ++x) out.at(x, y) = m.at(m.width - 1 - x, y);
  return out;
}

namespace {

// Separable gaussian blur with replicated borders, used to smooth the
// elastic displacement fields.
void gaussian_blur(std::vector<float>& field, std::int64_t w, std::int64_t h, double sigma) {
  const std::int64_t radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (static_cast<double>(i) / sigma) * (static_cast<double>(i) / sigma));
    kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    norm += v;
  }
  for (float& v : kernel) v = static_cast<float>(v / norm);

  std::vector<float> tmp(field.size());
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (std::int64_t i = -radius; i <= radius; ++i) {
        const std::int64_t xs = std::clamp<std::int64_t>(x + i, 0, w - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               field[static_cast<std::size_t>(y * w + xs)];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (std::int64_t i = -radius; i <= radius; ++i) {
        const std::int64_t ys = std::clamp<std::int64_t>(y + i, 0, h - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp[static_cast<std::size_t>(ys * w + x)];
      }
      field[static_cast<std::size_t>(y * w + x)] = acc;
    }
  }
}

}  // namespace

AugmentedSample augment(const ImageSlice& image, const LabelMask& mask, const AugmentSpec& spec,
                        std::uint64_t seed) {
  validate_image(image, "augment");
  validate_mask(mask, "augment");
  if (image.width != mask.width || image.height != mask.height)
    throw std::invalid_argument("augment: image and mask sizes differ");
  if (!(spec.hflip_probability >= 0.0 && spec.hflip_probability <= 1.0))
    throw std::invalid_argument("augment: hflip probability outside [0, 1]");
  if (spec.rotation_range_degrees[0] != -spec.rotation_range_degrees[1] ||
      spec.rotation_range_degrees[1] < 0.0)
    throw std::invalid_argument("augment: rotation range must be symmetric around zero");
  if (spec.elastic.enabled && (!(spec.elastic.alpha_px > 0.0) || !(spec.elastic.sigma_px > 0.0)))
    throw std::invalid_argument("augment: elastic alpha and sigma must be positive");

  const std::int64_t w = image.width, h = image.height;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const bool flip = unit(rng) < spec.hflip_probability;
  double angle_deg = 0.0;
  if (spec.rotation_range_degrees[1] > 0.0) {
    std::uniform_real_distribution<double> ang(spec.rotation_range_degrees[0],
                                               spec.rotation_range_degrees[1]);
    angle_deg = ang(rng);
  }
  std::vector<float> disp_x, disp_y;
  if (spec.elastic.enabled) {
    std::uniform_real_distribution<float> signed_unit(-1.0f, 1.0f);
    disp_x.resize(static_cast<std::size_t>(w * h));
    disp_y.resize(static_cast<std::size_t>(w * h));
    for (float& v : disp_x) v = signed_unit(rng);
    for (float& v : disp_y) v = signed_unit(rng);
    gaussian_blur(disp_x, w, h, spec.elastic.sigma_px);
    gaussian_blur(disp_y, w, h, spec.elastic.sigma_px);
    const float alpha = static_cast<float>(spec.elastic.alpha_px);
    for (float& v : disp_x) v *= alpha;
    for (float& v : disp_y) v *= alpha;
  }

  const bool rotate = angle_deg != 0.0;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cx = static_cast<double>(w - 1) / 2.0, cy = static_cast<double>(h - 1) / 2.0;

  AugmentedSample out;
  out.image.width = w;
  out.image.height = h;
  out.image.pixels.assign(static_cast<std::size_t>(w * h), 0.0f);
  out.mask.width = w;
  out.mask.height = h;
  out.mask.labels.assign(static_cast<std::size_t>(w * h), 0);

  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t xf = flip ? w - 1 - x : x;
      // source position: inverse rotation about the center, plus the warp
      double sx = static_cast<double>(xf);
      double sy = static_cast<double>(y);
      if (rotate) {
        const double dx = static_cast<double>(xf) - cx;
        const double dy = static_cast<double>(y) - cy;
        sx = cx + cos_t * dx + sin_t * dy;
        sy = cy - sin_t * dx + cos_t * dy;
      }
      if (spec.elastic.enabled) {
        sx += disp_x[static_cast<std::size_t>(y * w + xf)];
        sy += disp_y[static_cast<std::size_t>(y * w + xf)];
      }

      const std::size_t o = static_cast<std::size_t>(y * w + x);
      // image: bilinear with zero outside
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
      const float wx = static_cast<float>(sx - static_cast<double>(x0));
      const float wy = static_cast<float>(sy - static_cast<double>(y0));
      auto sample = [&](std::int64_t xi, std::int64_t yi) -> float {
        return (xi >= 0 && xi < w && yi >= 0 && yi < h) ? image.at(xi, yi) : 0.0f;
      };
      const float top = sample(x0, y0) + wx * (sample(x0 + 1, y0) - sample(x0, y0));
      const float bot = sample(x0, y0 + 1) + wx * (sample(x0 + 1, y0 + 1) - sample(x0, y0 + 1));
      out.image.pixels[o] = top + wy * (bot - top);
      // mask: nearest with zero outside
      const std::int64_t xn = static_cast<std::int64_t>(std::lround(sx));
      const std::int64_t yn = static_cast<std::int64_t>(std::lround(sy));
      out.mask.labels[o] =
          (xn >= 0 && xn < w && yn >= 0 && yn < h) ? mask.at(xn, yn) : kBackgroundLabel;
    }
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  std::uint64_t s = mix(base);
  s = mix(s ^ (a + 0x9e3779b97f4a7c15ull));
  s = mix(s ^ (b + 0x7f4a7c159e3779b9ull));
  s = mix(s ^ (c + 0x133111eb94d049bbull));
  return s;
}

}  // namespace zonalnet
