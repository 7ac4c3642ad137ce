#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "zonalnet/trainer.hpp"

namespace zonalnet {

namespace {

constexpr const char* kFormatTag = "zonalnet-checkpoint-v1";

nlohmann::json model_config_to_json(const ModelConfig& m) {
  return nlohmann::json{{"arch", m.arch},
                        {"width_multiplier", m.width_multiplier},
                        {"input_size", m.input_size},
                        {"use_stem_max_pool", m.use_stem_max_pool},
                        {"layer4_single_dilated", m.layer4_single_dilated}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.arch = j.value("arch", m.arch);
  m.width_multiplier = j.value("width_multiplier", m.width_multiplier);
  m.input_size = j.value("input_size", m.input_size);
  m.use_stem_max_pool = j.value("use_stem_max_pool", m.use_stem_max_pool);
  m.layer4_single_dilated = j.value("layer4_single_dilated", m.layer4_single_dilated);
  return m;
}

std::filesystem::path blob_path(const std::filesystem::path& json_path) {
  auto p = json_path;
  p.replace_extension(".bin");
  return p;
}

void append_floats(std::vector<float>& blob, std::span<const float> values) {
  blob.insert(blob.end(), values.begin(), values.end());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& json_path, const ModelGraph& model,
                     const SgdOptimizer* optimizer, const TrainConfig* train_config,
                     std::int64_t epoch, std::span<const double> epoch_losses) {
  nlohmann::json manifest;
  manifest["format"] = kFormatTag;
  manifest["model_config"] = model_config_to_json(model.config());
  if (train_config != nullptr)
    manifest["train_config"] = nlohmann::json::parse(train_config_to_json(*train_config));
  manifest["epoch"] = epoch;
  manifest["epoch_losses"] = std::vector<double>(epoch_losses.begin(), epoch_losses.end());

  std::vector<float> blob;
  auto entry = [&](const std::string& name, const Shape& shape) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = shape;
    e["offset"] = blob.size() * sizeof(float);  // byte offset into the blob
    return e;
  };

  manifest["params"] = nlohmann::json::array();
  for (const NamedTensor& p : model.parameters()) {
    manifest["params"].push_back(entry(p.name, p.tensor.shape()));
    append_floats(blob, p.tensor.values());
  }

  manifest["buffers"] = nlohmann::json::array();
  for (const NamedBnState& s : model.bn_states()) {
    const Shape shape{static_cast<std::int64_t>(s.state->running_mean.size())};
    auto mean_e = entry(s.name + ".running_mean", shape);
    mean_e["initialized"] = s.state->initialized;
    manifest["buffers"].push_back(mean_e);
    append_floats(blob, s.state->running_mean);
    manifest["buffers"].push_back(entry(s.name + ".running_var", shape));
    append_floats(blob, s.state->running_var);
  }

  if (optimizer != nullptr && !optimizer->velocities().empty()) {
    const auto& vel = optimizer->velocities();
    if (vel.size() != model.parameters().size())
      throw std::invalid_argument("save_checkpoint: optimizer state does not match parameters");
    manifest["momentum"] = nlohmann::json::array();
    for (std::size_t i = 0; i < vel.size(); ++i) {
      const Shape shape{static_cast<std::int64_t>(vel[i].size())};
      manifest["momentum"].push_back(entry(model.parameters()[i].name, shape));
      append_floats(blob, vel[i]);
    }
  }

  const auto bin = blob_path(json_path);
  manifest["blob"] = bin.filename().string();

  std::ofstream jf(json_path);
  if (!jf) throw std::runtime_error("save_checkpoint: cannot open " + json_path.string());
  jf << manifest.dump(2) << '\n';
  jf.close();
  std::ofstream bf(bin, std::ios::binary);
  if (!bf) throw std::runtime_error("save_checkpoint: cannot open " + bin.string());
  bf.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!bf) throw std::runtime_error("save_checkpoint: short write to " + bin.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& json_path) {
  std::ifstream jf(json_path);
  if (!jf) throw std::runtime_error("load_checkpoint: cannot open " + json_path.string());
  nlohmann::json manifest;
  try {
    jf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed manifest " + json_path.string() + ": " +
                             e.what());
  }
  if (manifest.value("format", "") != kFormatTag)
    throw std::runtime_error("load_checkpoint: " + json_path.string() +
                             " is not a recognized checkpoint manifest");

  const auto bin = json_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream bf(bin, std::ios::binary | std::ios::ate);
  if (!bf) throw std::runtime_error("load_checkpoint: cannot open " + bin.string());
  const std::int64_t bytes = static_cast<std::int64_t>(bf.tellg());
  if (bytes % static_cast<std::int64_t>(sizeof(float)) != 0)
    throw std::runtime_error("load_checkpoint: blob size is not a float multiple");
  std::vector<float> blob(static_cast<std::size_t>(bytes) / sizeof(float));
  bf.seekg(0);
  bf.read(reinterpret_cast<char*>(blob.data()), bytes);
  if (!bf) throw std::runtime_error("load_checkpoint: short read from " + bin.string());

  auto read_span = [&](const nlohmann::json& e, const char* what) {
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const Shape shape = e.at("shape").get<Shape>();
    const std::size_t count = static_cast<std::size_t>(shape_numel(shape));
    if (offset % sizeof(float) != 0 || offset / sizeof(float) + count > blob.size())
      throw std::runtime_error(std::string("load_checkpoint: ") + what + " entry '" +
                               e.at("name").get<std::string>() + "' overruns the blob");
    return std::span<const float>(blob.data() + offset / sizeof(float), count);
  };

  LoadedCheckpoint out{ModelGraph::build(model_config_from_json(manifest.at("model_config")),
                                         /*seed=*/0),
                       std::nullopt,
                       manifest.value("epoch", std::int64_t{0}),
                       manifest.value("epoch_losses", std::vector<double>{}),
                       {}};
  if (manifest.contains("train_config"))
    out.train_config = train_config_from_json(manifest.at("train_config").dump());

  const auto& params = manifest.at("params");
  if (params.size() != out.model.parameters().size())
    throw std::runtime_error("load_checkpoint: manifest lists " + std::to_string(params.size()) +
                             " params, model has " +
                             std::to_string(out.model.parameters().size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& p = out.model.parameters()[i];
    if (params[i].at("name").get<std::string>() != p.name ||
        params[i].at("shape").get<Shape>() != p.tensor.shape())
      throw std::runtime_error("load_checkpoint: parameter mismatch at '" + p.name + "'");
    const auto src = read_span(params[i], "param");
    Tensor t = p.tensor;
    std::copy(src.begin(), src.end(), t.leaf_values().begin());
  }

  const auto& buffers = manifest.at("buffers");
  if (buffers.size() != out.model.bn_states().size() * 2)
    throw std::runtime_error("load_checkpoint: buffer count mismatch");
  for (std::size_t i = 0; i < out.model.bn_states().size(); ++i) {
    const NamedBnState& s = out.model.bn_states()[i];
    const auto& mean_e = buffers[2 * i];
    const auto& var_e = buffers[2 * i + 1];
    if (mean_e.at("name").get<std::string>() != s.name + ".running_mean" ||
        var_e.at("name").get<std::string>() != s.name + ".running_var")
      throw std::runtime_error("load_checkpoint: buffer mismatch at '" + s.name + "'");
    const auto mean = read_span(mean_e, "buffer");
    const auto var = read_span(var_e, "buffer");
    s.state->running_mean.assign(mean.begin(), mean.end());
    s.state->running_var.assign(var.begin(), var.end());
    s.state->initialized = mean_e.value("initialized", true);
  }

  if (manifest.contains("momentum")) {
    const auto& momentum = manifest.at("momentum");
    if (momentum.size() != out.model.parameters().size())
      throw std::runtime_error("load_checkpoint: momentum count mismatch");
    out.momentum.resize(momentum.size());
    for (std::size_t i = 0; i < momentum.size(); ++i) {
      if (momentum[i].at("name").get<std::string>() != out.model.parameters()[i].name)
        throw std::runtime_error("load_checkpoint: momentum mismatch at index " +
                                 std::to_string(i));
      const auto src = read_span(momentum[i], "momentum");
      out.momentum[i].assign(src.begin(), src.end());
    }
  }
  return out;
}

}  // namespace zonalnet
