#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "zonalnet/trainer.hpp"

namespace zonalnet {

namespace fs = std::filesystem;

namespace {

// Nearest-neighbour label resize to an arbitrary (possibly non-square) grid,
// used to restore net-resolution predictions to the crop window.
LabelMask resize_mask_nearest(const LabelMask& m, std::int64_t out_w, std::int64_t out_h) {
  if (m.width == out_w && m.height == out_h) return m;
  LabelMask out;
  out.width = out_w;
  out.height = out_h;
  out.labels.resize(static_cast<std::size_t>(out_w * out_h));
  const double sx = static_cast<double>(m.width) / static_cast<double>(out_w);
  const double sy = static_cast<double>(m.height) / static_cast<double>(out_h);
  for (std::int64_t y = 0; y < out_h; ++y) {
    const std::int64_t src_y =
        std::min<std::int64_t>(m.height - 1,
                               static_cast<std::int64_t>((static_cast<double>(y) + 0.5) * sy));
    for (std::int64_t x = 0; x < out_w; ++x) {
      const std::int64_t src_x =
          std::min<std::int64_t>(m.width - 1,
                                 static_cast<std::int64_t>((static_cast<double>(x) + 0.5) * sx));
      out.labels[static_cast<std::size_t>(y * out_w + x)] = m.at(src_x, src_y);
    }
  }
  return out;
}

fs::path reader2_path_for(const DatasetCase& c, const fs::path& reader2_dir) {
  if (!reader2_dir.empty()) {
    const fs::path tagged = reader2_dir / (c.id + "_mask_reader2.json");
    if (fs::exists(tagged)) return tagged;
    const fs::path plain = reader2_dir / (c.id + "_mask.json");
    if (fs::exists(plain)) return plain;
    return {};
  }
  return c.reader2;
}

}  // namespace

Volume predict_volume(ModelGraph& model, double crop_mm, const Volume& image) {
  if (image.kind != VolumeKind::image)
    throw std::invalid_argument("predict: expected an image volume");
  const CropBox box = central_crop_box(image, crop_mm);
  const Volume cropped = central_crop_mm(image, crop_mm);
  const std::int64_t net = model.config().input_size;

  Volume out = make_mask_volume(image.width, image.height, image.slices, image.spacing_mm);

  constexpr std::int64_t kChunk = 8;
  for (std::int64_t first = 0; first < cropped.slices; first += kChunk) {
    const std::int64_t count = std::min(kChunk, cropped.slices - first);
    std::vector<float> batch;
    batch.reserve(static_cast<std::size_t>(count * net * net));
    for (std::int64_t k = 0; k < count; ++k) {
      const ImageSlice prep =
          zscore_normalize(resample_slice(image_slice(cropped, first + k), net));
      batch.insert(batch.end(), prep.pixels.begin(), prep.pixels.end());
    }
    const Tensor x = Tensor::from_vector({count, 1, net, net}, std::move(batch));
    const std::vector<LabelMask> pred = forward_segment(model, x).masks;
    for (std::int64_t k = 0; k < count; ++k) {
      const LabelMask restored = resize_mask_nearest(pred[static_cast<std::size_t>(k)],
                                                     box.width, box.height);
      for (std::int64_t y = 0; y < box.height; ++y)
        for (std::int64_t x2 = 0; x2 < box.width; ++x2) {
          const std::size_t idx = static_cast<std::size_t>(
              (first + k) * image.width * image.height + (box.y0 + y) * image.width +
              (box.x0 + x2));
          out.mask_data[idx] = restored.at(x2, y);
        }
    }
  }
  return out;
}

EvalResult evaluate(ModelGraph& model, double crop_mm, const fs::path& data_dir,
                    const EvalOptions& options) {
  const auto cases = scan_dataset(data_dir, /*require_mask=*/false);
  EvalResult result;
  bool any_reader2 = false;

  for (const DatasetCase& c : cases) {
    if (!options.only_cases.empty() &&
        std::find(options.only_cases.begin(), options.only_cases.end(), c.id) ==
            options.only_cases.end())
      continue;
    if (c.mask.empty()) {
      std::cerr << "eval: skipping " << c.id << " (no reference mask)\n";
      ++result.skipped_cases;
      continue;
    }
    Volume image, truth;
    try {
      image = load_volume(c.image);
      truth = load_volume(c.mask);
    } catch (const std::exception& e) {
      std::cerr << "eval: skipping " << c.id << ": " << e.what() << "\n";
      ++result.skipped_cases;
      continue;
    }

    const Volume pred = predict_volume(model, crop_mm, image);
    result.model_report.patients.push_back(stratified_report(pred, truth, c.id));

    const fs::path r2_path = reader2_path_for(c, options.reader2_dir);
    if (!r2_path.empty()) {
      try {
        const Volume reader2 = load_volume(r2_path);
        if (!result.inter_reader_report) result.inter_reader_report.emplace();
        result.inter_reader_report->patients.push_back(
            stratified_report(reader2, truth, c.id));
        any_reader2 = true;
      } catch (const std::exception& e) {
        std::cerr << "eval: ignoring second-reader mask for " << c.id << ": " << e.what()
                  << "\n";
      }
    }
  }

  if (result.model_report.patients.empty())
    throw std::runtime_error("eval: no usable cases under " + data_dir.string());

  if (any_reader2) {
    for (const ReportSubset s : kReportSubsets)
      for (const Zone z : kZones) {
        CellComparison cmp;
        cmp.subset = s;
        cmp.zone = z;
        const auto paired = SegReport::paired_cell_values(result.model_report,
                                                          *result.inter_reader_report, s, z);
        if (paired.first.empty()) {
          cmp.note = "no paired values";
        } else {
          try {
            cmp.test = stats::wilcoxon_signed_rank(paired.first, paired.second);
          } catch (const std::invalid_argument& e) {
            cmp.note = e.what();
          }
        }
        result.model_vs_inter_reader.push_back(std::move(cmp));
      }
  }
  return result;
}

}  // namespace zonalnet
