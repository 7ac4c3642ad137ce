#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "zonalnet/phantom.hpp"
#include "zonalnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace zonalnet;

namespace {

std::string zero_pad(int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, value);
  return buf;
}

int run_phantoms(const std::string& out_dir, int count, std::uint64_t seed,
                 const PhantomOptions& opts) {
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    const PhantomCase pc = generate_phantom(derive_seed(seed, static_cast<std::uint64_t>(i)), opts);
    const std::string id = "phantom_" + zero_pad(i, 3);
    save_volume(pc.image, fs::path(out_dir) / (id + "_img"));
    save_volume(pc.mask, fs::path(out_dir) / (id + "_mask"));
    if (pc.reader2_mask) save_volume(*pc.reader2_mask, fs::path(out_dir) / (id + "_mask_reader2"));
  }
  std::cout << "wrote " << count << " cases to " << out_dir << std::endl;
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume) {
  const TrainConfig cfg = load_train_config(config_path);
  const TrainResult r = train(cfg, out_dir, resume);
  std::cout << "final checkpoint: " << r.final_checkpoint.string() << std::endl;
  if (!r.best_checkpoint.empty())
    std::cout << "best checkpoint: " << r.best_checkpoint.string() << std::endl;
  return 0;
}

int run_cv(const std::string& config_path, const std::string& out_dir, int folds) {
  TrainConfig cfg = load_train_config(config_path);
  if (folds > 0) cfg.folds = folds;
  const CvResult r = cross_validate(cfg, out_dir);
  std::cout << "best fold: " << r.best_fold << std::endl;
  for (const FoldSummary& f : r.folds)
    std::cout << "fold " << f.fold << " selection metric " << f.selection_metric << std::endl;
  return 0;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& reader2,
             const std::vector<std::string>& report_paths) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const double crop_mm = loaded.train_config ? loaded.train_config->crop_mm : 93.0;
  EvalOptions opt;
  opt.reader2_dir = reader2;
  const EvalResult r = evaluate(loaded.model, crop_mm, data_dir, opt);
  for (const std::string& path : report_paths) {
    if (has_suffix(path, ".csv"))
      r.model_report.save_csv(path);
    else
      r.model_report.save_json(path);
  }
  std::cout << r.model_report.to_csv_string();
  if (r.skipped_cases > 0) std::cout << "skipped cases: " << r.skipped_cases << std::endl;
  if (r.inter_reader_report) {
    std::cout << "\ninter-reader reference:\n" << r.inter_reader_report->to_csv_string();
    std::cout << "\nmodel vs inter-reader (signed rank):\n";
    for (const CellComparison& c : r.model_vs_inter_reader) {
      std::cout << report_subset_name(c.subset) << "," << zone_name(c.zone) << ",";
      if (c.test)
        std::cout << "p=" << c.test->p_value << (c.test->exact ? " (exact)" : " (approx)");
      else
        std::cout << "n/a (" << c.note << ")";
      std::cout << "\n";
    }
  }
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& in_path, const std::string& out_path) {
  LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const double crop_mm = loaded.train_config ? loaded.train_config->crop_mm : 93.0;
  const Volume image = load_volume(in_path);
  const Volume pred = predict_volume(loaded.model, crop_mm, image);
  save_volume(pred, out_path);
  std::cout << "wrote " << out_path << std::endl;
  return 0;
}

int run_stats(const std::vector<std::string>& reports, const std::string& test,
              const std::string& subset_arg, const std::string& zone_arg) {
  const SegReport a = SegReport::load_json(reports[0]);
  const SegReport b = SegReport::load_json(reports[1]);
  ReportSubset subset = ReportSubset::all_slices;
  bool found = false;
  for (const ReportSubset s : kReportSubsets)
    if (std::string(report_subset_name(s)) == subset_arg) {
      subset = s;
      found = true;
    }
  if (!found) throw CLI::ValidationError("--subset", "unknown subset " + subset_arg);
  const Zone zone = zone_arg == "tz" ? Zone::tz : Zone::pz;
  if (zone_arg != "tz" && zone_arg != "pz")
    throw CLI::ValidationError("--zone", "expected pz or tz");

  stats::TestResult r;
  if (test == "ranksum") {
    const auto va = a.cell_values(subset, zone);
    const auto vb = b.cell_values(subset, zone);
    r = stats::wilcoxon_rank_sum(va, vb);
  } else {
    const auto paired = SegReport::paired_cell_values(a, b, subset, zone);
    r = stats::wilcoxon_signed_rank(paired.first, paired.second);
  }
  std::cout << "statistic " << r.statistic << "\np " << r.p_value << "\nmethod "
            << (r.exact ? "exact" : "normal approximation") << "\nn1 " << r.n1 << "\nn2 " << r.n2
            << std::endl;
  return 0;
}

int run_ablation(const std::string& config_path, const std::string& eval_dir,
                 const std::string& out_dir) {
  const TrainConfig cfg = load_train_config(config_path);
  const AblationResult r = run_stem_pool_ablation(cfg, eval_dir, out_dir);
  auto show = [](const char* name, const AblationArm& arm) {
    std::cout << name << ": pz "
              << (arm.mean_pz ? std::to_string(*arm.mean_pz) : std::string("n/a")) << ", tz "
              << (arm.mean_tz ? std::to_string(*arm.mean_tz) : std::string("n/a")) << std::endl;
  };
  show("no_pool", r.no_pool);
  show("pool", r.pool);
  if (r.signed_rank_pz) std::cout << "signed rank pz p " << r.signed_rank_pz->p_value << std::endl;
  if (r.signed_rank_tz) std::cout << "signed rank tz p " << r.signed_rank_tz->p_value << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zonal prostate segmentation pipeline"};
  app.require_subcommand(1);

  auto* phantoms = app.add_subcommand("phantoms", "generate a synthetic phantom dataset");
  std::string ph_out;
  int ph_count = 10;
  std::uint64_t ph_seed = 1;
  PhantomOptions ph_opts;
  int ph_slices = static_cast<int>(ph_opts.n_slices);
  int ph_size = static_cast<int>(ph_opts.size);
  phantoms->add_option("--out", ph_out, "output directory")->required();
  phantoms->add_option("--count", ph_count, "number of cases");
  phantoms->add_option("--seed", ph_seed, "base seed");
  phantoms->add_option("--slices", ph_slices, "slices per case");
  phantoms->add_option("--size", ph_size, "in-plane size in px");
  phantoms->add_option("--reader2-jitter", ph_opts.reader_jitter,
                       "second-reader jitter in [0, 0.3]; 0 disables reader 2");

  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
  std::string tr_config, tr_out, tr_resume;
  train_cmd->add_option("--config", tr_config, "train config JSON")->required();
  train_cmd->add_option("--out", tr_out, "output directory")->required();
  train_cmd->add_option("--resume", tr_resume, "checkpoint to resume from");

  auto* cv_cmd = app.add_subcommand("cv", "k-fold cross validation");
  std::string cv_config, cv_out = "cv_out";
  int cv_folds = 0;
  cv_cmd->add_option("--config", cv_config, "train config JSON")->required();
  cv_cmd->add_option("--out", cv_out, "output directory (default cv_out)");
  cv_cmd->add_option("--folds", cv_folds, "override fold count");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_reader2;
  std::vector<std::string> ev_reports;
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint manifest")->required();
  eval_cmd->add_option("--data", ev_data, "dataset directory")->required();
  eval_cmd->add_option("--reader2", ev_reader2, "second-reader mask directory");
  eval_cmd->add_option("--report", ev_reports,
                       "write the report here (.csv writes CSV, anything else JSON); repeatable");

  auto* predict_cmd = app.add_subcommand("predict", "segment one image volume");
  std::string pr_ckpt, pr_in, pr_out;
  predict_cmd->add_option("--ckpt", pr_ckpt, "checkpoint manifest")->required();
  predict_cmd->add_option("--in", pr_in, "input image volume")->required();
  predict_cmd->add_option("--out", pr_out, "output mask volume base path")->required();

  auto* stats_cmd = app.add_subcommand("stats", "compare two report JSON files");
  std::vector<std::string> st_reports;
  std::string st_test = "signedrank", st_subset = "all_slices", st_zone = "pz";
  stats_cmd->add_option("--report", st_reports, "report JSON (pass exactly twice)")
      ->required()
      ->expected(2);
  stats_cmd->add_option("--test", st_test, "ranksum or signedrank")
      ->check(CLI::IsMember({"ranksum", "signedrank"}));
  stats_cmd->add_option("--subset", st_subset, "report subset name");
  stats_cmd->add_option("--zone", st_zone, "pz or tz");

  auto* abl_cmd = app.add_subcommand("ablation", "stem max-pool ablation (two training arms)");
  std::string ab_config, ab_eval, ab_out;
  abl_cmd->add_option("--config", ab_config, "train config JSON")->required();
  abl_cmd->add_option("--eval-data", ab_eval, "held-out dataset directory")->required();
  abl_cmd->add_option("--out", ab_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*phantoms) {
      ph_opts.n_slices = ph_slices;
      ph_opts.size = ph_size;
      return run_phantoms(ph_out, ph_count, ph_seed, ph_opts);
    }
    if (*train_cmd) return run_train(tr_config, tr_out, tr_resume);
    if (*cv_cmd) return run_cv(cv_config, cv_out, cv_folds);
    if (*eval_cmd) return run_eval(ev_ckpt, ev_data, ev_reader2, ev_reports);
    if (*predict_cmd) return run_predict(pr_ckpt, pr_in, pr_out);
    if (*stats_cmd) return run_stats(st_reports, st_test, st_subset, st_zone);
    if (*abl_cmd) return run_ablation(ab_config, ab_eval, ab_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
