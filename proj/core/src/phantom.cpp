#include "zonalnet/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "zonalnet/pipeline.hpp"

namespace zonalnet {

namespace {

// Per-slice geometry of the two nested ellipses.
struct SliceGeometry {
  bool prostate = false;
  double cx = 0, cy = 0;      // outer ellipse center
  double a = 0, b = 0;        // outer semi-axes
  double tz_fraction = 0;     // inner axes as a fraction of outer; 1 fills, 0 absent
  double tz_offset = 0;       // inner center shift along the b axis
};

struct CaseGeometry {
  std::int64_t head = 0, base = 0, middle = 0, apex = 0, tail = 0;
  std::vector<SliceGeometry> slices;
};

double ellipse_test(double x, double y, double cx, double cy, double a, double b) {
  const double dx = (x - cx) / a;
  const double dy = (y - cy) / b;
  return dx * dx + dy * dy;
}

CaseGeometry make_geometry(std::mt19937_64& rng, const PhantomOptions& opt) {
  CaseGeometry g;
  std::uniform_int_distribution<std::int64_t> pad_dist(1, 3);
  g.head = pad_dist(rng);
  g.tail = pad_dist(rng);
  // keep room for at least one slice of each prostate region
  while (opt.n_slices - g.head - g.tail < 3) {
    if (g.head >= g.tail && g.head > 1)
      --g.head;
    else
      --g.tail;
  }
  const std::int64_t prostate = opt.n_slices - g.head - g.tail;
  g.base = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(prostate * 0.25)));
  g.apex = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::llround(prostate * 0.2)));
  g.middle = prostate - g.base - g.apex;
  while (g.middle < 1) {  // small prostates: shrink the ends
    if (g.base >= g.apex && g.base > 1)
      --g.base;
    else
      --g.apex;
    g.middle = prostate - g.base - g.apex;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double size = static_cast<double>(opt.size);
  const double cx = size / 2.0 + size * 0.04 * (2.0 * unit(rng) - 1.0);
  const double cy = size / 2.0 + size * 0.04 * (2.0 * unit(rng) - 1.0);
  const double semi_a = size * (0.20 + 0.05 * unit(rng));
  const double semi_b = size * (0.17 + 0.05 * unit(rng));
  const double offset_scale = 0.15 * unit(rng);

  g.slices.resize(static_cast<std::size_t>(opt.n_slices));
  for (std::int64_t k = 0; k < opt.n_slices; ++k) {
    SliceGeometry& s = g.slices[static_cast<std::size_t>(k)];
    const std::int64_t p = k - g.head;  // index within the prostate span
    if (p < 0 || p >= prostate) continue;
    s.prostate = true;
    s.cx = cx;
    s.cy = cy;
    // ellipsoid-like envelope along the slice axis, never collapsing; the
    // linear term makes the base end broader than the apex end like the gland
    // itself — size is what keeps TZ-only base slices and PZ-only apex slices
    // apart once per-slice normalization has removed absolute intensity
    const double t = prostate == 1 ? 0.5
                                   : static_cast<double>(p) / static_cast<double>(prostate - 1);
    const double u = 2.0 * t - 1.0;
    const double envelope = std::sqrt(std::max(0.35, 1.0 - 0.45 * u * u - 0.25 * u));
    s.a = semi_a * envelope;
    s.b = semi_b * envelope;
    if (p < g.base) {
      s.tz_fraction = 1.0;  // TZ fills the gland at the base end
    } else if (p < g.base + g.middle) {
      const double m = g.middle == 1
                           ? 0.5
                           : static_cast<double>(p - g.base) / static_cast<double>(g.middle - 1);
      s.tz_fraction = 0.72 - 0.27 * m;  // descends toward the apex, both zones present
    } else {
      s.tz_fraction = 0.0;  // PZ only at the apex end
    }
    s.tz_offset = offset_scale * (1.0 - s.tz_fraction) * s.b;
  }
  return g;
}

void rasterize_mask(Volume& mask, const CaseGeometry& g, const PhantomOptions& opt) {
  for (std::int64_t k = 0; k < opt.n_slices; ++k) {
    const SliceGeometry& s = g.slices[static_cast<std::size_t>(k)];
    if (!s.prostate) continue;
    std::uint8_t* plane = mask.mask_data.data() + k * opt.size * opt.size;
    for (std::int64_t y = 0; y < opt.size; ++y) {
      for (std::int64_t x = 0; x < opt.size; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double py = static_cast<double>(y) + 0.5;
        if (ellipse_test(px, py, s.cx, s.cy, s.a, s.b) > 1.0) continue;
        bool inner = false;
        if (s.tz_fraction >= 1.0) {
          inner = true;
        } else if (s.tz_fraction > 0.0) {
          inner = ellipse_test(px, py, s.cx, s.cy + s.tz_offset, s.tz_fraction * s.a,
                               s.tz_fraction * s.b) <= 1.0;
        }
        plane[y * opt.size + x] = inner ? kTzLabel : kPzLabel;
      }
    }
  }
}

CaseGeometry jitter_geometry(const CaseGeometry& g, std::mt19937_64& rng, double jitter,
                             const PhantomOptions& opt) {
  CaseGeometry out = g;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (SliceGeometry& s : out.slices) {
    if (!s.prostate) continue;
    s.a *= 1.0 + jitter * unit(rng);
    s.b *= 1.0 + jitter * unit(rng);
    s.cx += jitter * 0.02 * static_cast<double>(opt.size) * unit(rng);
    s.cy += jitter * 0.02 * static_cast<double>(opt.size) * unit(rng);
    // keep the slice's category: fractions stay pinned at the ends
    if (s.tz_fraction > 0.0 && s.tz_fraction < 1.0)
      s.tz_fraction = std::clamp(s.tz_fraction * (1.0 + jitter * unit(rng)), 0.35, 0.9);
  }
  return out;
}

}  // namespace

PhantomCase generate_phantom(std::uint64_t seed, const PhantomOptions& opt) {
  if (opt.n_slices < 6)
    throw std::invalid_argument("generate_phantom: need at least 6 slices");
  if (opt.size < 48)
    throw std::invalid_argument("generate_phantom: in-plane size must be at least 48");
  for (const double s : opt.spacing_mm)
    if (!(s > 0.0)) throw std::invalid_argument("generate_phantom: spacing must be positive");
  if (opt.reader_jitter < 0.0 || opt.reader_jitter > 0.3)
    throw std::invalid_argument("generate_phantom: reader jitter outside [0, 0.3]");

  std::mt19937_64 rng(derive_seed(seed, 0x70061));
  const CaseGeometry geom = make_geometry(rng, opt);

  PhantomCase out;
  out.mask = make_mask_volume(opt.size, opt.size, opt.n_slices, opt.spacing_mm);
  rasterize_mask(out.mask, geom, opt);

  // Intensity model: tissue means with per-case shifts, gaussian noise and a
  // smooth multiplicative bias field.
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double mean_bg = 260.0 + 60.0 * (unit(rng) - 0.5);
  const double mean_pz = 820.0 + 80.0 * (unit(rng) - 0.5);
  const double mean_tz = 470.0 + 60.0 * (unit(rng) - 0.5);
  const double noise_sd = 28.0 + 10.0 * unit(rng);
  const double bias_amp = 0.05 + 0.04 * unit(rng);
  const double bias_fx = 0.5 + unit(rng);
  const double bias_fy = 0.5 + unit(rng);
  const double bias_px = 2.0 * std::numbers::pi * unit(rng);
  const double bias_py = 2.0 * std::numbers::pi * unit(rng);
  std::normal_distribution<double> noise(0.0, noise_sd);

  out.image = make_image_volume(opt.size, opt.size, opt.n_slices, opt.spacing_mm);
  const double inv = 1.0 / static_cast<double>(opt.size);
  for (std::int64_t k = 0; k < opt.n_slices; ++k) {
    const std::uint8_t* labels = out.mask.mask_data.data() + k * opt.size * opt.size;
    std::uint16_t* pixels = out.image.image_data.data() + k * opt.size * opt.size;
    for (std::int64_t y = 0; y < opt.size; ++y) {
      for (std::int64_t x = 0; x < opt.size; ++x) {
        const std::uint8_t label = labels[y * opt.size + x];
        double v = label == kPzLabel ? mean_pz : label == kTzLabel ? mean_tz : mean_bg;
        const double bias =
            1.0 + bias_amp * std::sin(2.0 * std::numbers::pi * bias_fx * x * inv + bias_px) *
                      std::sin(2.0 * std::numbers::pi * bias_fy * y * inv + bias_py);
        v = v * bias + noise(rng);
        pixels[y * opt.size + x] =
            static_cast<std::uint16_t>(std::clamp(std::llround(v), 0ll, 4095ll));
      }
    }
  }

  if (opt.reader_jitter > 0.0) {
    std::mt19937_64 rng2(derive_seed(seed, 0x4ead2));
    const CaseGeometry geom2 = jitter_geometry(geom, rng2, opt.reader_jitter, opt);
    Volume m2 = make_mask_volume(opt.size, opt.size, opt.n_slices, opt.spacing_mm);
    rasterize_mask(m2, geom2, opt);
    out.reader2_mask = std::move(m2);
  }
  return out;
}

}  // namespace zonalnet
