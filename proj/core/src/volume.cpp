#include "zonalnet/volume.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace zonalnet {

void validate_image(const ImageSlice& image, const char* context) {
  if (image.width < 1 || image.height < 1)
    throw std::invalid_argument(std::string(context) + ": empty image plane");
  if (static_cast<std::int64_t>(image.pixels.size()) != image.width * image.height)
    throw std::invalid_argument(std::string(context) + ": pixel buffer does not match " +
                                std::to_string(image.width) + "x" + std::to_string(image.height));
}

void validate_mask(const LabelMask& mask, const char* context) {
  if (mask.width < 1 || mask.height < 1)
    throw std::invalid_argument(std::string(context) + ": empty mask plane");
  if (static_cast<std::int64_t>(mask.labels.size()) != mask.width * mask.height)
    throw std::invalid_argument(std::string(context) + ": label buffer does not match " +
                                std::to_string(mask.width) + "x" + std::to_string(mask.height));
  for (const std::uint8_t v : mask.labels)
    if (v > 2)
      throw std::invalid_argument(std::string(context) + ": mask label " + std::to_string(v) +
                                  " outside {0, 1, 2}");
}

void validate_volume(const Volume& v, const char* context) {
  const std::string ctx(context);
  if (v.width < 1 || v.height < 1 || v.slices < 1)
    throw std::invalid_argument(ctx + ": volume dims must be positive, got " +
                                std::to_string(v.width) + "x" + std::to_string(v.height) + "x" +
                                std::to_string(v.slices));
  for (const double s : v.spacing_mm)
    if (!(s > 0.0)) throw std::invalid_argument(ctx + ": voxel spacing must be positive");
  if (v.kind == VolumeKind::image) {
    if (static_cast<std::int64_t>(v.image_data.size()) != v.voxels() || !v.mask_data.empty())
      throw std::invalid_argument(ctx + ": image volume buffer does not hold " +
                                  std::to_string(v.voxels()) + " voxels");
  } else {
    if (static_cast<std::int64_t>(v.mask_data.size()) != v.voxels() || !v.image_data.empty())
      throw std::invalid_argument(ctx + ": mask volume buffer does not hold " +
                                  std::to_string(v.voxels()) + " voxels");
    for (const std::uint8_t label : v.mask_data)
      if (label > 2)
        throw std::invalid_argument(ctx + ": mask label " + std::to_string(label) +
                                    " outside {0, 1, 2}");
  }
}

Volume make_image_volume(std::int64_t width, std::int64_t height, std::int64_t slices,
                         std::array<double, 3> spacing_mm) {
  Volume v;
  v.width = width;
  v.height = height;
  v.slices = slices;
  v.spacing_mm = spacing_mm;
  v.kind = VolumeKind::image;
  v.image_data.assign(static_cast<std::size_t>(width * height * slices), 0);
  validate_volume(v, "make_image_volume");
  return v;
}

Volume make_mask_volume(std::int64_t width, std::int64_t height, std::int64_t slices,
                        std::array<double, 3> spacing_mm) {
  Volume v;
  v.width = width;
  v.height = height;
  v.slices = slices;
  v.spacing_mm = spacing_mm;
  v.kind = VolumeKind::mask;
  v.mask_data.assign(static_cast<std::size_t>(width * height * slices), 0);
  validate_volume(v, "make_mask_volume");
  return v;
}

namespace {

void check_slice_index(const Volume& v, std::int64_t k, const char* context) {
  if (k < 0 || k >= v.slices)
    throw std::invalid_argument(std::string(context) + ": slice " + std::to_string(k) +
                                " out of range [0, " + std::to_string(v.slices) + ")");
}

}  // namespace

ImageSlice image_slice(const Volume& v, std::int64_t k) {
  check_slice_index(v, k, "image_slice");
  if (v.kind != VolumeKind::image)
    throw std::invalid_argument("image_slice: volume holds masks, not intensities");
  ImageSlice s;
  s.width = v.width;
  s.height = v.height;
  s.pixels.resize(static_cast<std::size_t>(v.slice_pixels()));
  const std::uint16_t* src = v.image_data.data() + k * v.slice_pixels();
  for (std::int64_t i = 0; i < v.slice_pixels(); ++i)
    s.pixels[static_cast<std::size_t>(i)] = static_cast<float>(src[i]);
  return s;
}

LabelMask mask_slice(const Volume& v, std::int64_t k) {
  check_slice_index(v, k, "mask_slice");
  if (v.kind != VolumeKind::mask)
    throw std::invalid_argument("mask_slice: volume holds intensities, not masks");
  LabelMask m;
  m.width = v.width;
  m.height = v.height;
  const std::uint8_t* src = v.mask_data.data() + k * v.slice_pixels();
  m.labels.assign(src, src + v.slice_pixels());
  return m;
}

void set_mask_slice(Volume& v, std::int64_t k, const LabelMask& m) {
  check_slice_index(v, k, "set_mask_slice");
  if (v.kind != VolumeKind::mask)
    throw std::invalid_argument("set_mask_slice: volume holds intensities, not masks");
  validate_mask(m, "set_mask_slice");
  if (m.width != v.width || m.height != v.height)
    throw std::invalid_argument("set_mask_slice: plane size mismatch");
  std::copy(m.labels.begin(), m.labels.end(), v.mask_data.begin() + k * v.slice_pixels());
}

namespace {

std::filesystem::path base_path(const std::filesystem::path& path) {
  if (path.extension() == ".json") {
    auto p = path;
    p.replace_extension();
    return p;
  }
  return path;
}

}  // namespace

void save_volume(const Volume& v, const std::filesystem::path& path) {
  validate_volume(v, "save_volume");
  const auto base = base_path(path);
  nlohmann::json header;
  header["width"] = v.width;
  header["height"] = v.height;
  header["slices"] = v.slices;
  header["spacing_mm"] = v.spacing_mm;
  header["dtype"] = v.kind == VolumeKind::image ? "u16" : "u8";
  header["kind"] = v.kind == VolumeKind::image ? "image" : "mask";

  std::ofstream jf(base.string() + ".json");
  if (!jf) throw std::runtime_error("save_volume: cannot open " + base.string() + ".json");
  jf << header.dump(2) << '\n';
  jf.close();

  std::ofstream rf(base.string() + ".raw", std::ios::binary);
  if (!rf) throw std::runtime_error("save_volume: cannot open " + base.string() + ".raw");
  if (v.kind == VolumeKind::image) {
    std::vector<unsigned char> bytes(v.image_data.size() * 2);
    for (std::size_t i = 0; i < v.image_data.size(); ++i) {
      bytes[2 * i] = static_cast<unsigned char>(v.image_data[i] & 0xff);
      bytes[2 * i + 1] = static_cast<unsigned char>(v.image_data[i] >> 8);
    }
    rf.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  } else {
    rf.write(reinterpret_cast<const char*>(v.mask_data.data()),
             static_cast<std::streamsize>(v.mask_data.size()));
  }
  if (!rf) throw std::runtime_error("save_volume: short write to " + base.string() + ".raw");
}

Volume load_volume(const std::filesystem::path& path) {
  const auto base = base_path(path);
  const std::string json_name = base.string() + ".json";
  std::ifstream jf(json_name);
  if (!jf) throw std::runtime_error("load_volume: cannot open " + json_name);
  nlohmann::json header;
  try {
    jf >> header;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_volume: bad header in " + json_name + ": " + e.what());
  }

  Volume v;
  try {
    v.width = header.at("width").get<std::int64_t>();
    v.height = header.at("height").get<std::int64_t>();
    v.slices = header.at("slices").get<std::int64_t>();
    v.spacing_mm = header.at("spacing_mm").get<std::array<double, 3>>();
    const std::string kind = header.at("kind").get<std::string>();
    const std::string dtype = header.at("dtype").get<std::string>();
    if (kind == "image" && dtype == "u16")
      v.kind = VolumeKind::image;
    else if (kind == "mask" && dtype == "u8")
      v.kind = VolumeKind::mask;
    else
      throw std::runtime_error("load_volume: unsupported kind/dtype pair '" + kind + "'/'" +
                               dtype + "' in " + json_name);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_volume: bad header in " + json_name + ": " + e.what());
  }
  if (v.width < 1 || v.height < 1 || v.slices < 1)
    throw std::runtime_error("load_volume: non-positive dims in " + json_name);

  const std::string raw_name = base.string() + ".raw";
  std::ifstream rf(raw_name, std::ios::binary | std::ios::ate);
  if (!rf) throw std::runtime_error("load_volume: cannot open " + raw_name);
  const std::int64_t actual = static_cast<std::int64_t>(rf.tellg());
  const std::int64_t expect = v.voxels() * (v.kind == VolumeKind::image ? 2 : 1);
  if (actual != expect)
    throw std::runtime_error("load_volume: " + raw_name + " holds " + std::to_string(actual) +
                             " bytes, header implies " + std::to_string(expect));
  rf.seekg(0);
  if (v.kind == VolumeKind::image) {
    std::vector<unsigned char> bytes(static_cast<std::size_t>(actual));
    rf.read(reinterpret_cast<char*>(bytes.data()), actual);
    v.image_data.resize(static_cast<std::size_t>(v.voxels()));
    for (std::size_t i = 0; i < v.image_data.size(); ++i)
      v.image_data[i] = static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
  } else {
    v.mask_data.resize(static_cast<std::size_t>(v.voxels()));
    rf.read(reinterpret_cast<char*>(v.mask_data.data()), actual);
  }
  if (!rf) throw std::runtime_error("load_volume: short read from " + raw_name);

  try {
    validate_volume(v, "load_volume");
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + raw_name + ")");
  }
  return v;
}

}  // namespace zonalnet
