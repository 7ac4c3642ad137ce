#include "zonalnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "zonalnet/losses.hpp"

namespace zonalnet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  model.validate();
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("train: momentum outside [0, 1)");
  if (weight_decay < 0.0) throw std::invalid_argument("train: negative weight decay");
  if (epochs < 0) throw std::invalid_argument("train: negative epoch count");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be at least 1");
  if (folds < 2) throw std::invalid_argument("train: need at least 2 folds");
  if (!(crop_mm > 0.0)) throw std::invalid_argument("train: crop extent must be positive");
  if (poly_lr_decay && !(poly_power > 0.0))
    throw std::invalid_argument("train: poly decay power must be positive");
}

TrainConfig TrainConfig::desk_profile() {
  TrainConfig cfg;
  cfg.model.width_multiplier = 0.25;
  cfg.model.input_size = 96;
  cfg.batch_size = 8;
  cfg.epochs = 10;
  // elastic displacement scaled to the smaller input (the defaults suit
  // full-resolution slices); 10 px of warp on a 96 px grid is too aggressive
  cfg.augment.elastic.alpha_px = 5.0;
  cfg.augment.elastic.sigma_px = 3.0;
  return cfg;
}

namespace {

nlohmann::json augment_to_json(const AugmentSpec& a) {
  return nlohmann::json{{"hflip_probability", a.hflip_probability},
                        {"rotation_range_degrees", a.rotation_range_degrees},
                        {"elastic_enabled", a.elastic.enabled},
                        {"elastic_alpha_px", a.elastic.alpha_px},
                        {"elastic_sigma_px", a.elastic.sigma_px}};
}

AugmentSpec augment_from_json(const nlohmann::json& j) {
  AugmentSpec a;
  a.hflip_probability = j.value("hflip_probability", a.hflip_probability);
  a.rotation_range_degrees =
      j.value("rotation_range_degrees", a.rotation_range_degrees);
  a.elastic.enabled = j.value("elastic_enabled", a.elastic.enabled);
  a.elastic.alpha_px = j.value("elastic_alpha_px", a.elastic.alpha_px);
  a.elastic.sigma_px = j.value("elastic_sigma_px", a.elastic.sigma_px);
  return a;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["model"] = {{"arch", cfg.model.arch},
                {"width_multiplier", cfg.model.width_multiplier},
                {"input_size", cfg.model.input_size},
                {"use_stem_max_pool", cfg.model.use_stem_max_pool},
                {"layer4_single_dilated", cfg.model.layer4_single_dilated}};
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["folds"] = cfg.folds;
  j["seed"] = cfg.seed;
  j["crop_mm"] = cfg.crop_mm;
  j["augment_enabled"] = cfg.augment_enabled;
  j["augment"] = augment_to_json(cfg.augment);
  j["poly_lr_decay"] = cfg.poly_lr_decay;
  j["poly_power"] = cfg.poly_power;
  j["train_prostate_slices_only"] = cfg.train_prostate_slices_only;
  j["dataset_dir"] = cfg.dataset_dir;
  j["val_dataset_dir"] = cfg.val_dataset_dir;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    TrainConfig cfg;
    if (j.contains("profile")) {
      const std::string p = j.at("profile").get<std::string>();
      if (p == "desk")
        cfg = TrainConfig::desk_profile();
      else if (p != "default")
        throw std::runtime_error("train config: unknown profile " + p);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      cfg.model.arch = m.value("arch", cfg.model.arch);
      cfg.model.width_multiplier = m.value("width_multiplier", cfg.model.width_multiplier);
      cfg.model.input_size = m.value("input_size", cfg.model.input_size);
      cfg.model.use_stem_max_pool = m.value("use_stem_max_pool", cfg.model.use_stem_max_pool);
      cfg.model.layer4_single_dilated =
          m.value("layer4_single_dilated", cfg.model.layer4_single_dilated);
    }
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.folds = j.value("folds", cfg.folds);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.crop_mm = j.value("crop_mm", cfg.crop_mm);
    cfg.augment_enabled = j.value("augment_enabled", cfg.augment_enabled);
    if (j.contains("augment")) cfg.augment = augment_from_json(j.at("augment"));
    cfg.poly_lr_decay = j.value("poly_lr_decay", cfg.poly_lr_decay);
    cfg.poly_power = j.value("poly_power", cfg.poly_power);
    cfg.train_prostate_slices_only =
        j.value("train_prostate_slices_only", cfg.train_prostate_slices_only);
    cfg.dataset_dir = j.value("dataset_dir", cfg.dataset_dir);
    cfg.val_dataset_dir = j.value("val_dataset_dir", cfg.val_dataset_dir);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("train config: malformed JSON: ") + e.what());
  }
}

TrainConfig load_train_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("train config: cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return train_config_from_json(buf.str());
}

void save_train_config(const TrainConfig& cfg, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("train config: cannot open " + path.string());
  f << train_config_to_json(cfg) << '\n';
}

// ---------------------------------------------------------------------------
// Dataset

std::vector<DatasetCase> scan_dataset(const fs::path& dir, bool require_mask) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("dataset: " + dir.string() + " is not a directory");
  std::vector<DatasetCase> cases;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    const std::string suffix = "_img.json";
    if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix)
      continue;
    DatasetCase c;
    c.id = name.substr(0, name.size() - suffix.size());
    c.image = e.path();
    const fs::path mask = dir / (c.id + "_mask.json");
    const fs::path reader2 = dir / (c.id + "_mask_reader2.json");
    if (fs::exists(mask)) c.mask = mask;
    if (fs::exists(reader2)) c.reader2 = reader2;
    if (require_mask && c.mask.empty()) {
      std::cerr << "dataset: skipping " << c.id << " (no mask)\n";
      continue;
    }
    cases.push_back(std::move(c));
  }
  std::sort(cases.begin(), cases.end(),
            [](const DatasetCase& a, const DatasetCase& b) { return a.id < b.id; });
  return cases;
}

PreparedCase prepare_case(const DatasetCase& c, double crop_mm, std::int64_t input_size) {
  const Volume image = central_crop_mm(load_volume(c.image), crop_mm);
  if (c.mask.empty()) throw std::runtime_error("dataset: case " + c.id + " has no mask");
  const Volume mask = central_crop_mm(load_volume(c.mask), crop_mm);
  if (image.slices != mask.slices || image.width != mask.width || image.height != mask.height)
    throw std::runtime_error("dataset: case " + c.id + " image/mask dims differ");
  PreparedCase out;
  out.id = c.id;
  out.slices.reserve(static_cast<std::size_t>(image.slices));
  for (std::int64_t k = 0; k < image.slices; ++k) {
    PreparedSlice s;
    s.image = zscore_normalize(resample_slice(image_slice(image, k), input_size));
    s.mask = resample_slice(mask_slice(mask, k), input_size);
    out.slices.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct SampleRef {
  std::size_t case_idx;
  std::size_t slice_idx;
};

Tensor assemble_batch(std::span<const ImageSlice> images) {
  const std::int64_t n = static_cast<std::int64_t>(images.size());
  const std::int64_t h = images[0].height, w = images[0].width;
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(n * h * w));
  for (const ImageSlice& s : images) {
    if (s.height != h || s.width != w)
      throw std::invalid_argument("train: inconsistent slice sizes in batch");
    data.insert(data.end(), s.pixels.begin(), s.pixels.end());
  }
  return Tensor::from_vector({n, 1, h, w}, std::move(data));
}

std::string join_ids(std::span<const std::string> ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  return out;
}

double validation_metric(const SegReport& report, std::optional<double>& mean_pz,
                         std::optional<double>& mean_tz) {
  const auto pz = report.cell_values(ReportSubset::all_slices, Zone::pz);
  const auto tz = report.cell_values(ReportSubset::all_slices, Zone::tz);
  double metric = 0.0;
  int parts = 0;
  if (!pz.empty()) {
    mean_pz = stats::summarize(pz).mean;
    metric += *mean_pz;
    ++parts;
  }
  if (!tz.empty()) {
    mean_tz = stats::summarize(tz).mean;
    metric += *mean_tz;
    ++parts;
  }
  return parts > 0 ? metric / parts : 0.0;
}

bool same_model_config(const ModelConfig& a, const ModelConfig& b) {
  return a.arch == b.arch && a.width_multiplier == b.width_multiplier &&
         a.input_size == b.input_size && a.use_stem_max_pool == b.use_stem_max_pool &&
         a.layer4_single_dilated == b.layer4_single_dilated;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const fs::path& out_dir, const fs::path& resume_from,
                  std::span<const std::string> only_cases) {
  cfg.validate();
  fs::create_directories(out_dir);

  const auto cases = scan_dataset(cfg.dataset_dir, /*require_mask=*/true);
  std::vector<PreparedCase> prepared;
  for (const DatasetCase& c : cases) {
    if (!only_cases.empty() &&
        std::find(only_cases.begin(), only_cases.end(), c.id) == only_cases.end())
      continue;
    prepared.push_back(prepare_case(c, cfg.crop_mm, cfg.model.input_size));
  }
  if (prepared.empty())
    throw std::runtime_error("train: no usable cases under " + cfg.dataset_dir);

  std::vector<SampleRef> samples;
  for (std::size_t ci = 0; ci < prepared.size(); ++ci)
    for (std::size_t si = 0; si < prepared[ci].slices.size(); ++si) {
      if (cfg.train_prostate_slices_only &&
          categorize_slice(prepared[ci].slices[si].mask) == SliceCategory::non_prostate)
        continue;
      samples.push_back({ci, si});
    }
  if (samples.empty()) throw std::runtime_error("train: dataset contains no usable slices");

  ModelGraph model = ModelGraph::build(cfg.model, derive_seed(cfg.seed, 0x1417));
  SgdOptimizer optimizer(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  std::int64_t first_epoch = 0;
  TrainResult result;

  if (!resume_from.empty()) {
    LoadedCheckpoint ck = load_checkpoint(resume_from);
    if (!same_model_config(ck.model.config(), cfg.model))
      throw std::runtime_error("train: checkpoint model config does not match " +
                               resume_from.string());
    model = std::move(ck.model);
    first_epoch = ck.epoch;
    result.epoch_losses = std::move(ck.epoch_losses);
    if (!ck.momentum.empty()) optimizer.velocities() = std::move(ck.momentum);
  }

  double best_metric = -1.0;
  for (std::int64_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.poly_lr_decay)
      optimizer.set_learning_rate(
          cfg.learning_rate *
          std::pow(1.0 - static_cast<double>(epoch) / static_cast<double>(cfg.epochs),
                   cfg.poly_power));

    std::vector<SampleRef> order = samples;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0x5f71));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_sum = 0.0;
    std::int64_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<ImageSlice> images;
      std::vector<LabelMask> masks;
      std::vector<std::string> batch_ids;
      for (std::size_t i = start; i < stop; ++i) {
        const PreparedSlice& s = prepared[order[i].case_idx].slices[order[i].slice_idx];
        batch_ids.push_back(prepared[order[i].case_idx].id + "/" +
                            std::to_string(order[i].slice_idx));
        if (cfg.augment_enabled) {
          AugmentedSample a = augment(s.image, s.mask, cfg.augment,
                                      derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                                  static_cast<std::uint64_t>(i), 0xa06));
          images.push_back(std::move(a.image));
          masks.push_back(std::move(a.mask));
        } else {
          images.push_back(s.image);
          masks.push_back(s.mask);
        }
      }
      float loss_value = 0.0f;
      try {
        const Tensor x = assemble_batch(images);
        Tensor probs = softmax_channel(model.forward(x, /*train=*/true));
        Tensor loss = cross_entropy_loss<float>(probs, masks);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) throw std::runtime_error("non-finite loss");
        SgdOptimizer::zero_grad(model.parameters());
        loss.backward();
        optimizer.step(model.parameters());
      } catch (const std::exception& e) {
        throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(epoch_steps) + ", batch [" +
                                 join_ids(batch_ids) + "]: " + e.what());
      }
      result.step_losses.push_back(loss_value);
      epoch_sum += loss_value;
      ++epoch_steps;
    }
    result.epoch_losses.push_back(epoch_steps > 0 ? epoch_sum / static_cast<double>(epoch_steps)
                                                  : 0.0);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "epoch " << (epoch + 1) << "/" << cfg.epochs << " loss "
              << result.epoch_losses.back() << " (" << secs << "s)" << std::endl;

    if (!cfg.val_dataset_dir.empty()) {
      EvalResult ev = evaluate(model, cfg.crop_mm, cfg.val_dataset_dir);
      std::optional<double> pz, tz;
      const double metric = validation_metric(ev.model_report, pz, tz);
      static_cast<void>(pz);
      static_cast<void>(tz);
      std::cout << "  validation mean dsc " << metric << std::endl;
      if (metric > best_metric) {
        best_metric = metric;
        result.best_checkpoint = out_dir / "checkpoint_best.json";
        save_checkpoint(result.best_checkpoint, model, &optimizer, &cfg, epoch + 1,
                        result.epoch_losses);
      }
    }
  }

  result.final_checkpoint = out_dir / "checkpoint_final.json";
  save_checkpoint(result.final_checkpoint, model, &optimizer, &cfg, cfg.epochs,
                  result.epoch_losses);

  nlohmann::json history;
  history["epoch_losses"] = result.epoch_losses;
  history["step_losses"] = result.step_losses;
  std::ofstream hf(out_dir / "history.json");
  hf << history.dump(2) << '\n';
  return result;
}

std::vector<float> fit_single_batch(const TrainConfig& cfg,
                                    const std::vector<PreparedSlice>& batch, int steps) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("fit_single_batch: empty batch");
  if (steps < 1) throw std::invalid_argument("fit_single_batch: need at least one step");
  std::vector<ImageSlice> images;
  std::vector<LabelMask> masks;
  for (const PreparedSlice& s : batch) {
    images.push_back(s.image);
    masks.push_back(s.mask);
  }
  const Tensor x = assemble_batch(images);

  ModelGraph model = ModelGraph::build(cfg.model, derive_seed(cfg.seed, 0x1417));
  SgdOptimizer optimizer(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  std::vector<float> losses;
  losses.reserve(static_cast<std::size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    Tensor probs = softmax_channel(model.forward(x, /*train=*/true));
    Tensor loss = cross_entropy_loss<float>(probs, masks);
    losses.push_back(loss.item());
    SgdOptimizer::zero_grad(model.parameters());
    loss.backward();
    optimizer.step(model.parameters());
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Cross validation

std::vector<std::vector<std::string>> partition_cases(std::vector<std::string> ids,
                                                      std::int64_t folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("partition_cases: need at least 2 folds");
  if (static_cast<std::int64_t>(ids.size()) < folds)
    throw std::invalid_argument("partition_cases: fewer cases than folds");
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (static_cast<std::int64_t>(ids.size()) < folds)
    throw std::invalid_argument("partition_cases: fewer unique cases than folds");
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[i % static_cast<std::size_t>(folds)].push_back(ids[i]);
  for (auto& fold : out) std::sort(fold.begin(), fold.end());
  return out;
}

CvResult cross_validate(const TrainConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir);
  const auto cases = scan_dataset(cfg.dataset_dir, /*require_mask=*/true);
  std::vector<std::string> ids;
  for (const DatasetCase& c : cases) ids.push_back(c.id);
  const auto folds = partition_cases(ids, cfg.folds, derive_seed(cfg.seed, 0xf01d));

  CvResult result;
  double best_metric = -1.0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::vector<std::string>& val_ids = folds[f];
    std::vector<std::string> train_ids;
    for (const std::string& id : ids)
      if (std::find(val_ids.begin(), val_ids.end(), id) == val_ids.end())
        train_ids.push_back(id);

    const fs::path fold_dir = out_dir / ("fold_" + std::to_string(f));
    std::cout << "fold " << (f + 1) << "/" << folds.size() << ": " << train_ids.size()
              << " train cases, " << val_ids.size() << " validation cases" << std::endl;
    const TrainResult tr = train(cfg, fold_dir, {}, train_ids);

    LoadedCheckpoint ck = load_checkpoint(tr.final_checkpoint);
    EvalOptions opt;
    opt.only_cases = val_ids;
    EvalResult ev = evaluate(ck.model, cfg.crop_mm, cfg.dataset_dir, opt);

    FoldSummary summary;
    summary.fold = static_cast<int>(f);
    summary.val_cases = val_ids;
    summary.checkpoint = tr.final_checkpoint;
    summary.selection_metric =
        validation_metric(ev.model_report, summary.mean_dsc_pz, summary.mean_dsc_tz);
    if (summary.selection_metric > best_metric) {
      best_metric = summary.selection_metric;
      result.best_fold = static_cast<int>(f);
    }
    result.folds.push_back(std::move(summary));
  }

  nlohmann::json j;
  j["best_fold"] = result.best_fold;
  j["folds"] = nlohmann::json::array();
  for (const FoldSummary& s : result.folds) {
    nlohmann::json fj;
    fj["fold"] = s.fold;
    fj["val_cases"] = s.val_cases;
    fj["selection_metric"] = s.selection_metric;
    if (s.mean_dsc_pz) fj["mean_dsc_pz"] = *s.mean_dsc_pz;
    if (s.mean_dsc_tz) fj["mean_dsc_tz"] = *s.mean_dsc_tz;
    fj["checkpoint"] = s.checkpoint.string();
    j["folds"].push_back(fj);
  }
  std::ofstream f(out_dir / "cv_summary.json");
  f << j.dump(2) << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

AblationResult run_stem_pool_ablation(const TrainConfig& base, const fs::path& eval_dir,
                                      const fs::path& out_dir) {
  AblationResult result;
  for (const bool pool : {false, true}) {
    TrainConfig cfg = base;
    cfg.model.use_stem_max_pool = pool;
    cfg.validate();
    const fs::path arm_dir = out_dir / (pool ? "pool" : "no_pool");
    std::cout << "ablation arm: stem max pool " << (pool ? "on" : "off") << std::endl;
    const TrainResult tr = train(cfg, arm_dir);
    LoadedCheckpoint ck = load_checkpoint(tr.final_checkpoint);
    EvalResult ev = evaluate(ck.model, cfg.crop_mm, eval_dir);
    AblationArm& arm = pool ? result.pool : result.no_pool;
    const auto pz = ev.model_report.cell_values(ReportSubset::prostate_slices, Zone::pz);
    const auto tz = ev.model_report.cell_values(ReportSubset::prostate_slices, Zone::tz);
    if (!pz.empty()) arm.mean_pz = stats::summarize(pz).mean;
    if (!tz.empty()) arm.mean_tz = stats::summarize(tz).mean;
    arm.report = std::move(ev.model_report);
  }
  for (const Zone z : kZones) {
    const auto paired = SegReport::paired_cell_values(result.no_pool.report, result.pool.report,
                                                      ReportSubset::prostate_slices, z);
    auto& slot = z == Zone::pz ? result.signed_rank_pz : result.signed_rank_tz;
    if (paired.first.empty()) continue;
    try {
      slot = stats::wilcoxon_signed_rank(paired.first, paired.second);
    } catch (const std::invalid_argument&) {
      slot = std::nullopt;  // all differences zero: no detectable effect
    }
  }
  return result;
}

}  // namespace zonalnet
