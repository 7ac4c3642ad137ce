#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "zonalnet/metrics.hpp"
#include "zonalnet/phantom.hpp"
#include "zonalnet/pipeline.hpp"
#include "zonalnet/volume.hpp"

using namespace zonalnet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / "zonalnet_pipeline_test";
  fs::create_directories(d);
  return d;
}

Volume small_image() {
  Volume v = make_image_volume(6, 4, 2, {0.5, 0.5, 3.0});
  for (std::size_t i = 0; i < v.image_data.size(); ++i)
    v.image_data[i] = static_cast<std::uint16_t>(i * 7 % 1024);
  return v;
}

}  // namespace

TEST_CASE("volume save/load round trip") {
  const fs::path base = temp_dir() / "vol_roundtrip";
  Volume v = small_image();
  save_volume(v, base);
  const Volume r = load_volume(base);
  CHECK(r.width == v.width);
  CHECK(r.height == v.height);
  CHECK(r.slices == v.slices);
  CHECK(r.spacing_mm == v.spacing_mm);
  CHECK(r.kind == VolumeKind::image);
  CHECK(r.image_data == v.image_data);

  // Loading via the explicit .json path works too.
  const Volume r2 = load_volume(base.string() + ".json");
  CHECK(r2.image_data == v.image_data);
}

TEST_CASE("volume loader rejects inconsistent files") {
  const fs::path base = temp_dir() / "vol_bad";
  Volume v = small_image();
  save_volume(v, base);

  // Truncate the blob: loader must notice the byte-count mismatch.
  const fs::path raw = base.string() + ".raw";
  std::ofstream f(raw, std::ios::binary | std::ios::trunc);
  f.write("\0\0", 2);
  f.close();
  CHECK_THROWS_AS(load_volume(base), std::runtime_error);

  // Mask with an out-of-range label.
  Volume m = make_mask_volume(2, 2, 1, {1, 1, 1});
  m.mask_data = {0, 1, 2, 3};
  CHECK_THROWS_AS(save_volume(m, temp_dir() / "vol_badlabel"), std::invalid_argument);
}

TEST_CASE("central crop pixel counts") {
  // 93 mm at 0.5 mm spacing -> 186 px; at 0.65 mm -> round(143.07) = 143 px.
  Volume a = make_image_volume(256, 256, 1, {0.5, 0.5, 3.6});
  CHECK(central_crop_box(a, 93.0).width == 186);
  Volume b = make_image_volume(256, 256, 1, {0.65, 0.65, 3.6});
  const CropBox box = central_crop_box(b, 93.0);
  CHECK(box.width == 143);
  CHECK(box.height == 143);
  // Ambiguous centering shifts left/up: start = floor((256-143)/2) = 56.
  CHECK(box.x0 == 56);
  CHECK(box.y0 == 56);

  CHECK_THROWS_AS(central_crop_mm(make_image_volume(64, 64, 1, {0.5, 0.5, 3}), 93.0),
                  std::invalid_argument);
}

TEST_CASE("central crop copies the window contents") {
  Volume v = make_image_volume(6, 6, 1, {1, 1, 1});
  for (std::size_t i = 0; i < v.image_data.size(); ++i)
    v.image_data[i] = static_cast<std::uint16_t>(i);
  const Volume c = central_crop_mm(v, 4.0);  // 4 px window, start (1,1)
  CHECK(c.width == 4);
  CHECK(c.image_data[0] == 7);   // (1,1) of the source
  CHECK(c.image_data[5] == 14);  // (2,2)
}

TEST_CASE("resampling identity and interpolation") {
  ImageSlice s;
  s.width = 2;
  s.height = 1;
  s.pixels = {0.0f, 1.0f};
  const ImageSlice up = resample_slice(s, 4);
  CHECK(up.height == 4);
  CHECK(up.pixels[0] == 0.0f);
  CHECK(up.pixels[1] == doctest::Approx(0.25f));

  ImageSlice sq;
  sq.width = 3;
  sq.height = 3;
  sq.pixels = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const ImageSlice same = resample_slice(sq, 3);
  CHECK(same.pixels == sq.pixels);

  LabelMask m;
  m.width = 2;
  m.height = 2;
  m.labels = {0, 1, 2, 0};
  const LabelMask um = resample_slice(m, 4);
  CHECK(um.at(0, 0) == 0);
  CHECK(um.at(3, 0) == 1);
  CHECK(um.at(0, 3) == 2);
  const std::set<std::uint8_t> seen(um.labels.begin(), um.labels.end());
  for (const auto l : seen) CHECK(l <= 2);
}

TEST_CASE("zscore normalization") {
  ImageSlice s;
  s.width = 4;
  s.height = 1;
  s.pixels = {2, 4, 6, 8};
  const ImageSlice z = zscore_normalize(s);
  double mean = 0.0, var = 0.0;
  for (const float v : z.pixels) mean += v;
  mean /= 4.0;
  for (const float v : z.pixels) var += (v - mean) * (v - mean);
  CHECK(std::abs(mean) < 1e-6);
  CHECK(var / 4.0 == doctest::Approx(1.0).epsilon(1e-5));

  ImageSlice flat;
  flat.width = 3;
  flat.height = 1;
  flat.pixels = {5, 5, 5};
  const ImageSlice fz = zscore_normalize(flat);
  for (const float v : fz.pixels) CHECK(v == 0.0f);
}

TEST_CASE("horizontal flip is an involution") {
  ImageSlice s;
  s.width = 3;
  s.height = 2;
  s.pixels = {1, 2, 3, 4, 5, 6};
  const ImageSlice f = hflip(s);
  CHECK(f.pixels == std::vector<float>{3, 2, 1, 6, 5, 4});
  CHECK(hflip(f).pixels == s.pixels);
}

TEST_CASE("augmentation identity when every transform is disabled") {
  ImageSlice img;
  img.width = 8;
  img.height = 8;
  img.pixels.resize(64);
  for (std::size_t i = 0; i < 64; ++i) img.pixels[i] = static_cast<float>(i) * 0.1f;
  LabelMask mask;
  mask.width = 8;
  mask.height = 8;
  mask.labels.assign(64, 0);
  mask.labels[27] = 1;
  mask.labels[36] = 2;

  AugmentSpec off;
  off.hflip_probability = 0.0;
  off.rotation_range_degrees = {0.0, 0.0};
  off.elastic.enabled = false;
  const AugmentedSample a = augment(img, mask, off, 99);
  CHECK(a.image.pixels == img.pixels);  // bit exact
  CHECK(a.mask.labels == mask.labels);
}

TEST_CASE("augmentation is seed-deterministic and label-preserving") {
  std::mt19937_64 rng(31);
  ImageSlice img;
  img.width = 16;
  img.height = 16;
  img.pixels.resize(256);
  std::normal_distribution<float> d(0.0f, 1.0f);
  for (auto& p : img.pixels) p = d(rng);
  LabelMask mask;
  mask.width = 16;
  mask.height = 16;
  mask.labels.assign(256, 0);
  for (int y = 5; y < 11; ++y)
    for (int x = 5; x < 11; ++x)
      mask.labels[static_cast<std::size_t>(y * 16 + x)] = (x < 8) ? 1 : 2;

  AugmentSpec spec;  // defaults: flip 0.5, rotation +/-5 deg, elastic on
  const AugmentedSample a1 = augment(img, mask, spec, 1234);
  const AugmentedSample a2 = augment(img, mask, spec, 1234);
  CHECK(a1.image.pixels == a2.image.pixels);
  CHECK(a1.mask.labels == a2.mask.labels);

  const AugmentedSample b = augment(img, mask, spec, 1235);
  CHECK(a1.image.pixels != b.image.pixels);

  for (const auto l : a1.mask.labels) CHECK(l <= 2);
  CHECK(a1.image.pixels.size() == img.pixels.size());
}

TEST_CASE("augmentation rejects asymmetric rotation ranges") {
  AugmentSpec spec;
  spec.rotation_range_degrees = {-3.0, 5.0};
  ImageSlice img;
  img.width = 4;
  img.height = 4;
  img.pixels.assign(16, 0.0f);
  LabelMask mask;
  mask.width = 4;
  mask.height = 4;
  mask.labels.assign(16, 0);
  CHECK_THROWS_AS(augment(img, mask, spec, 1), std::invalid_argument);
}

TEST_CASE("seed derivation separates streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t e = 0; e < 8; ++e)
    for (std::uint64_t i = 0; i < 8; ++i) CHECK(seen.insert(derive_seed(1, e, i)).second);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("phantom volumes have coherent anatomy") {
  PhantomOptions opt;
  opt.n_slices = 12;
  const PhantomCase pc = generate_phantom(5, opt);
  CHECK(pc.image.width == opt.size);
  CHECK(pc.image.slices == 12);
  CHECK_FALSE(pc.reader2_mask.has_value());

  int head_tail = 0, base = 0, middle = 0, apex = 0;
  bool in_prostate = false, past_prostate = false;
  for (std::int64_t k = 0; k < pc.mask.slices; ++k) {
    const SliceCategory c = categorize_slice(mask_slice(pc.mask, k));
    switch (c) {
      case SliceCategory::non_prostate:
        ++head_tail;
        if (in_prostate) past_prostate = true;
        break;
      case SliceCategory::base_end:
        CHECK_FALSE(past_prostate);  // prostate must be one contiguous run
        in_prostate = true;
        ++base;
        break;
      case SliceCategory::middle:
        CHECK_FALSE(past_prostate);
        in_prostate = true;
        ++middle;
        break;
      case SliceCategory::apex_end:
        CHECK_FALSE(past_prostate);
        in_prostate = true;
        ++apex;
        break;
    }
  }
  CHECK(base >= 1);
  CHECK(middle >= 1);
  CHECK(apex >= 1);
  CHECK(head_tail >= 2);  // at least one empty slice on each end

  // Intensities live in the u16 MR-like range.
  std::uint16_t max_val = 0;
  for (const auto v : pc.image.image_data) max_val = std::max(max_val, v);
  CHECK(max_val <= 4095);
  CHECK(max_val > 100);
}

TEST_CASE("phantom generation is deterministic and seed-sensitive") {
  const PhantomCase a = generate_phantom(42);
  const PhantomCase b = generate_phantom(42);
  CHECK(a.image.image_data == b.image.image_data);
  CHECK(a.mask.mask_data == b.mask.mask_data);
  const PhantomCase c = generate_phantom(43);
  CHECK(a.mask.mask_data != c.mask.mask_data);
}

TEST_CASE("phantom reader2 jitter preserves slice categories") {
  PhantomOptions opt;
  opt.reader_jitter = 0.15;
  const PhantomCase pc = generate_phantom(9, opt);
  REQUIRE(pc.reader2_mask.has_value());
  CHECK(pc.reader2_mask->mask_data != pc.mask.mask_data);
  for (std::int64_t k = 0; k < pc.mask.slices; ++k) {
    CHECK(categorize_slice(mask_slice(*pc.reader2_mask, k)) ==
          categorize_slice(mask_slice(pc.mask, k)));
  }
  // Jittered contours still overlap heavily with reader 1.
  const auto d = dsc(*pc.reader2_mask, pc.mask, Zone::pz);
  REQUIRE(d.has_value());
  CHECK(*d > 0.6);
}
