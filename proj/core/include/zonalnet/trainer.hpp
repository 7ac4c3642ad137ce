#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zonalnet/metrics.hpp"
#include "zonalnet/model.hpp"
#include "zonalnet/optimizer.hpp"
#include "zonalnet/pipeline.hpp"
#include "zonalnet/stats.hpp"
#include "zonalnet/volume.hpp"

namespace zonalnet {

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 2.5e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::int64_t epochs = 100;
  std::int64_t batch_size = 48;
  std::int64_t folds = 5;
  std::uint64_t seed = 1;
  double crop_mm = 93.0;
  bool augment_enabled = true;
  AugmentSpec augment;
  bool poly_lr_decay = false;  // lr * (1 - epoch/epochs)^power, off by default
  double poly_power = 0.9;
  bool train_prostate_slices_only = false;  // default trains on every slice
  std::string dataset_dir;
  std::string val_dataset_dir;  // optional: enables per-epoch validation + best checkpoint

  void validate() const;
  // Laptop-scale preset: quarter width, 96 px inputs, batch 8, 10 epochs.
  static TrainConfig desk_profile();
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);
void save_train_config(const TrainConfig& cfg, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Dataset scanning and preprocessing

struct DatasetCase {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;     // may be empty when require_mask is false
  std::filesystem::path reader2;  // optional second-reader mask
};

// Finds <id>_img.json (+ _mask, + _mask_reader2) pairs, sorted by id.
std::vector<DatasetCase> scan_dataset(const std::filesystem::path& dir, bool require_mask);

struct PreparedSlice {
  ImageSlice image;  // cropped, resampled, z-scored
  LabelMask mask;    // cropped, resampled (nearest)
};

struct PreparedCase {
  std::string id;
  std::vector<PreparedSlice> slices;
};

PreparedCase prepare_case(const DatasetCase& c, double crop_mm, std::int64_t input_size);

// ---------------------------------------------------------------------------
// Checkpoints: <base>.json manifest + <base>.bin float32 blob

void save_checkpoint(const std::filesystem::path& json_path, const ModelGraph& model,
                     const SgdOptimizer* optimizer, const TrainConfig* train_config,
                     std::int64_t epoch, std::span<const double> epoch_losses);

struct LoadedCheckpoint {
  ModelGraph model;
  std::optional<TrainConfig> train_config;
  std::int64_t epoch = 0;
  std::vector<double> epoch_losses;
  std::vector<std::vector<float>> momentum;  // aligned with model parameters; empty if absent
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& json_path);

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // empty without validation data
  std::vector<double> epoch_losses;
  std::vector<float> step_losses;
};

// Trains on every case under cfg.dataset_dir (or the only_cases subset),
// writing checkpoint_final (and checkpoint_best when validation is
// configured) plus history.json into out_dir. resume_from continues a saved
// run with an identical seed stream, bit-compatible with the uninterrupted
// run.
TrainResult train(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                  const std::filesystem::path& resume_from = {},
                  std::span<const std::string> only_cases = {});

// Repeated single-batch steps on a fixed batch, no augmentation; used to
// check the optimization path can drive the loss toward zero.
std::vector<float> fit_single_batch(const TrainConfig& cfg,
                                    const std::vector<PreparedSlice>& batch, int steps);

// ---------------------------------------------------------------------------
// Cross validation

// Shuffled round-robin split: every case lands in exactly one fold, sizes
// differ by at most one, independent of directory enumeration order.
std::vector<std::vector<std::string>> partition_cases(std::vector<std::string> ids,
                                                      std::int64_t folds, std::uint64_t seed);

struct FoldSummary {
  int fold = 0;
  std::vector<std::string> val_cases;
  std::optional<double> mean_dsc_pz;  // all-slices validation means
  std::optional<double> mean_dsc_tz;
  double selection_metric = 0.0;
  std::filesystem::path checkpoint;
};

struct CvResult {
  std::vector<FoldSummary> folds;
  int best_fold = 0;
};

CvResult cross_validate(const TrainConfig& cfg, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------------------
// Evaluation and inference

struct CellComparison {
  ReportSubset subset{};
  Zone zone{};
  std::optional<stats::TestResult> test;  // absent when the pairing degenerates
  std::string note;
};

struct EvalOptions {
  std::filesystem::path reader2_dir;  // second-reader masks (falls back to _mask_reader2 files)
  std::vector<std::string> only_cases;  // empty means every case
};

struct EvalResult {
  SegReport model_report;                        // model vs reader 1
  std::optional<SegReport> inter_reader_report;  // reader 2 vs reader 1
  std::vector<CellComparison> model_vs_inter_reader;  // signed-rank per cell
  int skipped_cases = 0;
};

// Runs slice-wise inference over every case in data_dir, restores predictions
// to the original grid and reports stratified DSC. Cases with missing or
// unreadable files are skipped with a warning count.
EvalResult evaluate(ModelGraph& model, double crop_mm, const std::filesystem::path& data_dir,
                    const EvalOptions& options = {});

// Full-volume inference: crop, per-slice forward, paste back onto the input
// grid as a mask volume.
Volume predict_volume(ModelGraph& model, double crop_mm, const Volume& image);

// ---------------------------------------------------------------------------
// Stem max-pool ablation

struct AblationArm {
  std::optional<double> mean_pz;  // prostate-slices means
  std::optional<double> mean_tz;
  SegReport report;
};

struct AblationResult {
  AblationArm no_pool;
  AblationArm pool;
  std::optional<stats::TestResult> signed_rank_pz;
  std::optional<stats::TestResult> signed_rank_tz;
};

// Trains the two stem-pooling arms with identical seeds/data and compares
// prostate-slice DSC on a held-out directory.
AblationResult run_stem_pool_ablation(const TrainConfig& base,
                                      const std::filesystem::path& eval_dir,
                                      const std::filesystem::path& out_dir);

}  // namespace zonalnet
