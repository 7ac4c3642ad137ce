// Acceptance harness: each criterion prints one "[PASS] name" or
// "[FAIL] name" line (plus diagnostic detail above it) and the process exit
// code counts failures. Run with no arguments for the full battery or with a
// single criterion name.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "helpers/oracles.hpp"
#include "zonalnet/losses.hpp"
#include "zonalnet/metrics.hpp"
#include "zonalnet/model.hpp"
#include "zonalnet/ops.hpp"
#include "zonalnet/phantom.hpp"
#include "zonalnet/stats.hpp"
#include "zonalnet/trainer.hpp"

using namespace zonalnet;
namespace fs = std::filesystem;
using DTensor = TensorT<double>;

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir(const std::string& sub) {
  const fs::path d = fs::temp_directory_path() / "zonalnet_acceptance" / sub;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void write_phantoms(const fs::path& dir, int count, std::uint64_t seed,
                    const PhantomOptions& opt = {}) {
  char buf[16];
  for (int i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof(buf), "%03d", i);
    const PhantomCase pc = generate_phantom(derive_seed(seed, static_cast<std::uint64_t>(i)), opt);
    save_volume(pc.image, dir / ("phantom_" + std::string(buf) + "_img"));
    save_volume(pc.mask, dir / ("phantom_" + std::string(buf) + "_mask"));
  }
}

DTensor random_leaf(const Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (double& x : v) x = dist(rng);
  return DTensor::from_vector(shape, std::move(v), true);
}

bool check_rel(const char* what, double err, double tol) {
  if (err < tol) return true;
  std::printf("  %s: max relative error %.3e exceeds %.0e\n", what, err, tol);
  return false;
}

// ---------------------------------------------------------------------------

bool gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<int> small(2, 5);
  bool ok = true;

  for (int rep = 0; rep < 5; ++rep) {
    const std::int64_t n = small(rng) / 2 + 1, c = small(rng) / 2 + 1;
    const std::int64_t h = small(rng) + 3, w = small(rng) + 3;
    const std::int64_t f = small(rng) / 2 + 1, k = 1 + 2 * (rep % 2);
    const Conv2dOpts opts{1 + rep % 2, rep % 3, 1 + rep % 2};
    if (oracles::conv_out(h, k, opts.stride, opts.padding, opts.dilation) < 1 ||
        oracles::conv_out(w, k, opts.stride, opts.padding, opts.dilation) < 1)
      continue;
    auto x = random_leaf({n, c, h, w}, rng);
    auto wt = random_leaf({f, c, k, k}, rng, 0.5);
    auto b = random_leaf({f}, rng, 0.5);
    std::vector<DTensor> leaves{x, wt, b};
    auto make = [&] { return mean_all(conv2d(x, wt, b, opts)); };
    ok &= check_rel("conv2d", oracles::gradcheck(make, leaves).max_rel_err, 1e-4);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto x = random_leaf({small(rng), 3, small(rng) + 2, small(rng) + 2}, rng);
    auto gamma = random_leaf({3}, rng, 0.4);
    auto beta = random_leaf({3}, rng, 0.4);
    std::vector<DTensor> leaves{x, gamma, beta};
    auto train_mode = [&] {
      BatchNormStateT<double> state;
      return mean_all(mul(batch_norm2d(x, gamma, beta, state, BnMode::train), x));
    };
    ok &= check_rel("batch_norm train", oracles::gradcheck(train_mode, leaves).max_rel_err, 1e-4);

    BatchNormStateT<double> frozen;
    {
      NoGradGuard guard;
      auto warm = random_leaf({4, 3, 6, 6}, rng);
      (void)batch_norm2d(warm, gamma, beta, frozen, BnMode::train);
    }
    auto eval_mode = [&] {
      return mean_all(batch_norm2d(x, gamma, beta, frozen, BnMode::eval));
    };
    ok &= check_rel("batch_norm eval", oracles::gradcheck(eval_mode, leaves).max_rel_err, 1e-4);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto x = random_leaf({small(rng), small(rng), 6, 6}, rng);
    std::vector<DTensor> leaves{x};
    auto mx = [&] { return mean_all(pool2d(x, PoolKind::max)); };
    ok &= check_rel("max_pool", oracles::gradcheck(mx, leaves).max_rel_err, 1e-4);
    auto gap = [&] { return mean_all(pool2d(x, PoolKind::global_avg)); };
    ok &= check_rel("global_avg_pool", oracles::gradcheck(gap, leaves).max_rel_err, 1e-4);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto x = random_leaf({2, small(rng) / 2 + 1, small(rng) + 2, small(rng) + 2}, rng);
    std::vector<DTensor> leaves{x};
    auto up = [&] { return mean_all(bilinear_resize(x, 2 * x.dim(2), 2 * x.dim(3) + 1)); };
    ok &= check_rel("bilinear_resize up", oracles::gradcheck(up, leaves).max_rel_err, 1e-4);
    auto down = [&] { return mean_all(bilinear_resize(x, 3, 3)); };
    ok &= check_rel("bilinear_resize down", oracles::gradcheck(down, leaves).max_rel_err, 1e-4);
  }

  for (int rep = 0; rep < 5; ++rep) {
    auto a = random_leaf({2, 3, 4, 4}, rng);
    auto b = random_leaf({2, 3, 4, 4}, rng);
    auto s = random_leaf({2, 3, 1, 1}, rng);
    for (auto& v : a.leaf_values()) v += (v >= 0 ? 0.5 : -0.5);  // keep relu off the kink
    std::vector<DTensor> leaves{a, b, s};
    auto make = [&] {
      auto y = add(mul(relu(a), b), s);
      auto cat = concat_channels(softmax_channel(y), y);
      return mean_all(mul(cat, cat));
    };
    ok &= check_rel("relu/add/mul/softmax/concat", oracles::gradcheck(make, leaves).max_rel_err,
                    1e-4);
  }

  std::uniform_int_distribution<int> lab(0, 2);
  for (int rep = 0; rep < 5; ++rep) {
    const std::int64_t n = 1 + rep % 2, s = small(rng) + 1;
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::vector<double> p(static_cast<std::size_t>(n * 3 * s * s));
    for (auto& v : p) v = u(rng);
    auto probs = DTensor::from_vector({n, 3, s, s}, std::move(p), true);
    std::vector<LabelMask> targets;
    for (std::int64_t i = 0; i < n; ++i) {
      LabelMask m;
      m.width = s;
      m.height = s;
      m.labels.resize(static_cast<std::size_t>(s * s));
      for (auto& v : m.labels) v = static_cast<std::uint8_t>(lab(rng));
      targets.push_back(std::move(m));
    }
    std::vector<DTensor> leaves{probs};
    auto make = [&] { return cross_entropy_loss<double>(probs, targets); };
    ok &= check_rel("cross_entropy", oracles::gradcheck(make, leaves).max_rel_err, 1e-4);
  }

  const double secs = seconds_since(t0);
  std::printf("  gradient suite completed in %.1fs\n", secs);
  return ok && secs < 120.0;
}

bool conv_oracle() {
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int> dim(1, 5), spatial(4, 14), kern(1, 3), sp(1, 2), pd(0, 2);
  bool ok = true;
  int done = 0;
  while (done < 50) {
    oracles::ConvSpec spec;
    spec.n = dim(rng);
    spec.c = dim(rng);
    spec.f = dim(rng);
    spec.h = spatial(rng);
    spec.w = spatial(rng);
    spec.kh = kern(rng);
    spec.kw = kern(rng);
    spec.stride = sp(rng);
    spec.padding = pd(rng);
    spec.dilation = done % 3 == 0 ? 2 : 1;  // every third case dilated
    spec.bias = done % 2 == 0;
    if (oracles::conv_out(spec.h, spec.kh, spec.stride, spec.padding, spec.dilation) < 1 ||
        oracles::conv_out(spec.w, spec.kw, spec.stride, spec.padding, spec.dilation) < 1)
      continue;
    ++done;

    std::normal_distribution<float> d(0.0f, 1.0f);
    std::vector<float> xv(static_cast<std::size_t>(spec.n * spec.c * spec.h * spec.w));
    std::vector<float> wv(static_cast<std::size_t>(spec.f * spec.c * spec.kh * spec.kw));
    std::vector<float> bv(static_cast<std::size_t>(spec.f));
    for (auto& v : xv) v = d(rng);
    for (auto& v : wv) v = d(rng);
    for (auto& v : bv) v = d(rng);

    auto x = Tensor::from_vector({spec.n, spec.c, spec.h, spec.w}, xv);
    auto w = Tensor::from_vector({spec.f, spec.c, spec.kh, spec.kw}, wv);
    auto b = spec.bias ? Tensor::from_vector({spec.f}, bv) : Tensor{};
    auto got = conv2d(x, w, b, {spec.stride, spec.padding, spec.dilation});

    const std::vector<double> xd(xv.begin(), xv.end()), wd(wv.begin(), wv.end()),
        bd(bv.begin(), bv.end());
    const auto want = oracles::naive_conv2d<double>(
        spec, xd, wd, spec.bias ? std::span<const double>(bd) : std::span<const double>{});
    for (std::size_t i = 0; i < want.size(); ++i) {
      const double err = std::abs(static_cast<double>(got.values()[i]) - want[i]) /
                         std::max(1.0, std::abs(want[i]));
      if (err > 1e-5) {
        std::printf("  case %d element %zu: got %.8f want %.8f\n", done, i,
                    static_cast<double>(got.values()[i]), want[i]);
        ok = false;
        break;
      }
    }
  }
  return ok;
}

bool architecture_contract() {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = true;

  ModelConfig quarter;
  quarter.width_multiplier = 0.25;
  quarter.input_size = 192;
  ModelGraph model = ModelGraph::build(quarter, 7);
  NoGradGuard guard;
  std::mt19937_64 rng(3);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> xv(2 * 192 * 192);
  for (auto& v : xv) v = d(rng);
  // batch of 2, forwarded in train mode: fresh models have no running
  // statistics, and train-mode batch norm needs >1 value per channel.
  auto x = Tensor::from_vector({2, 1, 192, 192}, std::move(xv));

  auto feats = model.forward_encoder(x, /*train=*/true);
  if (feats.dim(2) != 24 || feats.dim(3) != 24) {
    std::printf("  encoder output %lldx%lld, expected 24x24\n",
                static_cast<long long>(feats.dim(2)), static_cast<long long>(feats.dim(3)));
    ok = false;
  }
  auto logits = model.forward(x, /*train=*/true);
  if (logits.shape() != Shape{2, 3, 192, 192}) {
    std::printf("  logits shape %s, expected 2x3x192x192\n", shape_str(logits.shape()).c_str());
    ok = false;
  }
  auto probs = softmax_channel(logits);
  double worst = 0.0;
  for (std::int64_t b = 0; b < 2; ++b)
    for (std::int64_t i = 0; i < 192 * 192; ++i) {
      double s = 0.0;
      for (std::int64_t c = 0; c < 3; ++c)
        s += probs.values()[static_cast<std::size_t>((b * 3 + c) * 192 * 192 + i)];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  if (worst > 1e-6) {
    std::printf("  softmax pixel sum deviates by %.2e\n", worst);
    ok = false;
  }

  ModelConfig pooled = quarter;
  pooled.use_stem_max_pool = true;
  ModelGraph pm = ModelGraph::build(pooled, 7);
  auto pf = pm.forward_encoder(x, true);
  if (pf.dim(2) != 12 || pf.dim(3) != 12) {
    std::printf("  pooled encoder output %lldx%lld, expected 12x12\n",
                static_cast<long long>(pf.dim(2)), static_cast<long long>(pf.dim(3)));
    ok = false;
  }
  if (pm.forward(x, true).shape() != Shape{2, 3, 192, 192}) {
    std::printf("  pooled logits lost the input resolution\n");
    ok = false;
  }

  // Full-width channel bookkeeping from parameter shapes (no forward pass).
  ModelConfig full;
  full.width_multiplier = 1.0;
  full.input_size = 192;
  ModelGraph fm = ModelGraph::build(full, 7);
  bool saw_backbone_out = false, saw_fpa_in = false;
  for (const NamedTensor& p : fm.parameters()) {
    if (p.name == "fpa.main.conv.weight") {
      saw_fpa_in = true;
      if (p.tensor.shape() != Shape{512, 2048, 1, 1}) {
        std::printf("  fpa main conv is %s, expected 512x2048x1x1\n",
                    shape_str(p.tensor.shape()).c_str());
        ok = false;
      }
    }
    if (p.name.find("encoder.layer4.") != std::string::npos &&
        p.tensor.shape().size() == 4 && p.tensor.dim(0) == 2048)
      saw_backbone_out = true;
  }
  if (!saw_fpa_in || !saw_backbone_out) {
    std::printf("  full-width parameter trace missing expected 2048-channel tensors\n");
    ok = false;
  }

  ModelConfig unet;
  unet.arch = "unet";
  unet.width_multiplier = 0.25;
  unet.input_size = 96;
  ModelGraph um = ModelGraph::build(unet, 7);
  std::vector<float> uv(2 * 96 * 96);
  for (auto& v : uv) v = d(rng);
  auto ux = Tensor::from_vector({2, 1, 96, 96}, std::move(uv));
  if (um.forward(ux, true).shape() != Shape{2, 3, 96, 96}) {
    std::printf("  unet output shape mismatch\n");
    ok = false;
  }

  const double secs = seconds_since(t0);
  std::printf("  architecture contract completed in %.1fs\n", secs);
  return ok && secs < 60.0;
}

bool gradient_reachability() {
  ModelConfig cfg;
  cfg.width_multiplier = 0.25;
  cfg.input_size = 96;
  ModelGraph model = ModelGraph::build(cfg, 21);

  std::mt19937_64 rng(4);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> xv(2 * 96 * 96);
  for (auto& v : xv) v = d(rng);
  auto x = Tensor::from_vector({2, 1, 96, 96}, std::move(xv));
  std::uniform_int_distribution<int> lab(0, 2);
  std::vector<LabelMask> targets;
  for (int i = 0; i < 2; ++i) {
    LabelMask m;
    m.width = 96;
    m.height = 96;
    m.labels.resize(96 * 96);
    for (auto& v : m.labels) v = static_cast<std::uint8_t>(lab(rng));
    targets.push_back(std::move(m));
  }

  auto loss = cross_entropy_loss<float>(softmax_channel(model.forward(x, true)), targets);
  loss.backward();

  int dead = 0;
  for (const NamedTensor& p : model.parameters()) {
    bool any = false;
    for (const float g : p.tensor.grad())
      if (g != 0.0f) {
        any = true;
        break;
      }
    if (!any) {
      std::printf("  zero gradient: %s\n", p.name.c_str());
      ++dead;
    }
  }
  std::printf("  %zu parameters checked, %d without gradient\n", model.parameters().size(), dead);
  return dead == 0;
}

bool overfit_probe() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = work_dir("overfit");
  write_phantoms(dir, 1, 2024);
  const auto cases = scan_dataset(dir, true);
  const PreparedCase pc = prepare_case(cases[0], 93.0, 96);

  // Four slices spanning the prostate.
  std::vector<PreparedSlice> batch;
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < pc.slices.size() && batch.size() < 4; ++i)
    if (categorize_slice(pc.slices[i].mask) != SliceCategory::non_prostate) {
      batch.push_back(pc.slices[i]);
      picked.push_back(i);
    }
  if (batch.size() < 4) {
    std::printf("  phantom yielded only %zu prostate slices\n", batch.size());
    return false;
  }

  TrainConfig cfg = TrainConfig::desk_profile();
  cfg.dataset_dir = dir.string();
  cfg.learning_rate = 5e-3;
  cfg.seed = 9;
  const std::vector<float> losses = fit_single_batch(cfg, batch, 300);
  const double secs = seconds_since(t0);
  std::printf("  loss %.4f -> %.4f over %zu steps in %.0fs\n",
              static_cast<double>(losses.front()), static_cast<double>(losses.back()),
              losses.size(), secs);
  return losses.back() < 0.05f && secs < 600.0;
}

bool phantom_study() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path train_dir = work_dir("study_train");
  const fs::path eval_dir = work_dir("study_eval");
  write_phantoms(train_dir, 40, 11);
  write_phantoms(eval_dir, 10, 9090);

  TrainConfig cfg = TrainConfig::desk_profile();
  cfg.dataset_dir = train_dir.string();
  cfg.seed = 3;
  const fs::path run = work_dir("study_run");
  const TrainResult tr = train(cfg, run);

  LoadedCheckpoint ck = load_checkpoint(tr.final_checkpoint);
  EvalResult ev = evaluate(ck.model, cfg.crop_mm, eval_dir);

  bool ok = true;
  for (const ReportSubset s : kReportSubsets)
    for (const Zone z : kZones) {
      // base slices hold no PZ and apex slices no TZ; a clean prediction
      // leaves those two cells undefined (both masks empty), so only the
      // anatomy-defined cells are required
      if ((s == ReportSubset::base_end && z == Zone::pz) ||
          (s == ReportSubset::apex_end && z == Zone::tz))
        continue;
      if (ev.model_report.cell_values(s, z).empty()) {
        std::printf("  report cell %s/%s is empty\n", report_subset_name(s), zone_name(z));
        ok = false;
      }
    }

  const auto pz = ev.model_report.cell_values(ReportSubset::prostate_slices, Zone::pz);
  const auto tz = ev.model_report.cell_values(ReportSubset::prostate_slices, Zone::tz);
  const double mean_pz = pz.empty() ? 0.0 : stats::summarize(pz).mean;
  const double mean_tz = tz.empty() ? 0.0 : stats::summarize(tz).mean;
  const double secs = seconds_since(t0);
  std::printf("  held-out prostate-slice DSC: PZ %.4f, TZ %.4f (%d cases, %.0fs)\n", mean_pz,
              mean_tz, static_cast<int>(ev.model_report.patients.size()), secs);
  return ok && mean_pz >= 0.80 && mean_tz >= 0.80 && secs < 2700.0;
}

bool ablation_directionality() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path train_dir = work_dir("ablation_train");
  const fs::path eval_dir = work_dir("ablation_eval");
  write_phantoms(train_dir, 16, 505);
  write_phantoms(eval_dir, 8, 606);

  // 128 px inputs keep the attention pyramid valid in both arms (the pooled
  // encoder output would fall below the pyramid minimum at 96 px).
  TrainConfig cfg = TrainConfig::desk_profile();
  cfg.model.input_size = 128;
  cfg.epochs = 5;
  cfg.seed = 17;
  cfg.dataset_dir = train_dir.string();

  const AblationResult r = run_stem_pool_ablation(cfg, eval_dir, work_dir("ablation_out"));
  const double np_pz = r.no_pool.mean_pz.value_or(0.0), np_tz = r.no_pool.mean_tz.value_or(0.0);
  const double p_pz = r.pool.mean_pz.value_or(0.0), p_tz = r.pool.mean_tz.value_or(0.0);
  std::printf("  no-pool PZ %.4f TZ %.4f | pool PZ %.4f TZ %.4f\n", np_pz, np_tz, p_pz, p_tz);
  if (r.signed_rank_pz)
    std::printf("  signed-rank PZ p = %.4f (%s)\n", r.signed_rank_pz->p_value,
                r.signed_rank_pz->exact ? "exact" : "approx");
  if (r.signed_rank_tz)
    std::printf("  signed-rank TZ p = %.4f (%s)\n", r.signed_rank_tz->p_value,
                r.signed_rank_tz->exact ? "exact" : "approx");
  std::printf("  ablation completed in %.0fs\n", seconds_since(t0));
  return np_pz >= p_pz - 0.02 && np_tz >= p_tz - 0.02;
}

bool dsc_engine() {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> lab(0, 5);
  bool ok = true;
  for (int rep = 0; rep < 100; ++rep) {
    const std::int64_t w = 4 + rep % 5, h = 3 + rep % 4, s = 1 + rep % 3;
    Volume p = make_mask_volume(w, h, s, {1, 1, 3});
    Volume t = make_mask_volume(w, h, s, {1, 1, 3});
    for (auto& v : p.mask_data) v = static_cast<std::uint8_t>(lab(rng) % 3);
    for (auto& v : t.mask_data) v = static_cast<std::uint8_t>(lab(rng) % 3);
    for (const Zone z : kZones) {
      const auto got = dsc(p, t, z);
      const auto want = oracles::brute_dsc(p.mask_data, t.mask_data, zone_label(z));
      const auto sym = dsc(t, p, z);
      if (got.has_value() != want.has_value() ||
          (got && *got != *want)) {  // exact: same counts, same division
        std::printf("  mismatch at rep %d zone %s\n", rep, zone_name(z));
        ok = false;
      }
      if (got.has_value() != sym.has_value() || (got && *got != *sym)) {
        std::printf("  asymmetry at rep %d zone %s\n", rep, zone_name(z));
        ok = false;
      }
      const auto self = dsc(t, t, z);
      if (self && *self != 1.0) {
        std::printf("  self-DSC %f != 1 at rep %d\n", *self, rep);
        ok = false;
      }
    }
  }
  return ok;
}

bool statistics_exactness() {
  std::mt19937_64 rng(271828);
  bool ok = true;

  // Worked examples.
  {
    const std::vector<double> a{1, 2}, b{3, 4};
    const auto r = stats::wilcoxon_rank_sum(a, b);
    if (!r.exact || std::abs(r.p_value - 1.0 / 3.0) > 1e-12 || r.statistic != 0.0) {
      std::printf("  rank-sum worked example: p = %.12f (want 1/3)\n", r.p_value);
      ok = false;
    }
    const std::vector<double> x{0.70, 0.72, 0.68, 0.75, 0.71};
    const std::vector<double> y{0.73, 0.74, 0.72, 0.78, 0.76};
    const auto s = stats::wilcoxon_signed_rank(x, y);
    if (!s.exact || std::abs(s.p_value - 0.0625) > 1e-12) {
      std::printf("  signed-rank worked example: p = %.12f (want 0.0625)\n", s.p_value);
      ok = false;
    }
  }

  // Rank sum: every size pair with n1 + n2 <= 10, several tied draws each.
  std::uniform_int_distribution<int> grid(0, 3);
  for (int n1 = 1; n1 <= 9 && ok; ++n1)
    for (int n2 = 1; n1 + n2 <= 10 && ok; ++n2)
      for (int rep = 0; rep < 4; ++rep) {
        std::vector<double> a(static_cast<std::size_t>(n1)), b(static_cast<std::size_t>(n2));
        for (auto& v : a) v = grid(rng) * 0.5;
        for (auto& v : b) v = grid(rng) * 0.5;
        const auto r = stats::wilcoxon_rank_sum(a, b);
        const double want = oracles::enum_rank_sum_p(a, b);
        if (!r.exact || std::abs(r.p_value - want) > 1e-12) {
          std::printf("  rank-sum n1=%d n2=%d: got %.15f want %.15f\n", n1, n2, r.p_value, want);
          ok = false;
        }
      }

  // Signed rank: every effective size up to 10.
  std::uniform_int_distribution<int> dgrid(-2, 2);
  for (int n = 2; n <= 10 && ok; ++n)
    for (int rep = 0; rep < 6; ++rep) {
      std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
      bool any = false;
      for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = dgrid(rng) * 0.25;
        y[static_cast<std::size_t>(i)] = dgrid(rng) * 0.25;
        any |= x[static_cast<std::size_t>(i)] != y[static_cast<std::size_t>(i)];
      }
      if (!any) {
        --rep;
        continue;
      }
      const auto r = stats::wilcoxon_signed_rank(x, y);
      const double want = oracles::enum_signed_rank_p(x, y);
      if (!r.exact || std::abs(r.p_value - want) > 1e-12) {
        std::printf("  signed-rank n=%d: got %.15f want %.15f\n", n, r.p_value, want);
        ok = false;
      }
    }
  return ok;
}

bool determinism_persistence() {
  const fs::path data = work_dir("determinism_data");
  write_phantoms(data, 2, 424242, [] {
    PhantomOptions o;
    o.n_slices = 8;
    return o;
  }());

  TrainConfig cfg = TrainConfig::desk_profile();
  cfg.model.input_size = 64;
  cfg.epochs = 2;
  cfg.batch_size = 6;
  cfg.seed = 77;
  cfg.dataset_dir = data.string();

  const TrainResult a = train(cfg, work_dir("det_a"));
  const TrainResult b = train(cfg, work_dir("det_b"));
  bool ok = a.step_losses.size() == b.step_losses.size();
  if (ok)
    for (std::size_t i = 0; i < a.step_losses.size(); ++i)
      if (a.step_losses[i] != b.step_losses[i]) {
        std::printf("  step %zu diverged: %.9g vs %.9g\n", i,
                    static_cast<double>(a.step_losses[i]),
                    static_cast<double>(b.step_losses[i]));
        ok = false;
        break;
      }
  if (!ok) std::printf("  repeated runs diverged\n");

  TrainConfig first = cfg;
  first.epochs = 1;
  const TrainResult c = train(first, work_dir("det_c"));
  const TrainResult d = train(cfg, work_dir("det_d"), c.final_checkpoint);

  auto read_blob = [](fs::path p) {
    p.replace_extension(".bin");
    std::FILE* f = std::fopen(p.string().c_str(), "rb");
    std::vector<unsigned char> bytes;
    if (!f) return bytes;
    unsigned char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) bytes.insert(bytes.end(), buf, buf + got);
    std::fclose(f);
    return bytes;
  };
  const auto blob_a = read_blob(a.final_checkpoint);
  const auto blob_d = read_blob(d.final_checkpoint);
  if (blob_a.empty() || blob_a != blob_d) {
    std::printf("  resumed checkpoint blob differs from the uninterrupted run\n");
    ok = false;
  } else {
    std::printf("  %zu-byte state blob identical across resume\n", blob_a.size());
  }
  return ok;
}

struct Criterion {
  const char* name;
  std::function<bool()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"gradient_suite", gradient_suite},
      {"conv_oracle", conv_oracle},
      {"architecture_contract", architecture_contract},
      {"gradient_reachability", gradient_reachability},
      {"overfit_probe", overfit_probe},
      {"phantom_study", phantom_study},
      {"ablation_directionality", ablation_directionality},
      {"dsc_engine", dsc_engine},
      {"statistics_exactness", statistics_exactness},
      {"determinism_persistence", determinism_persistence},
  };

  int failures = 0;
  bool matched = false;
  for (const Criterion& c : criteria) {
    if (argc > 1 && std::strcmp(argv[1], c.name) != 0) continue;
    matched = true;
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::printf("  exception: %s\n", e.what());
    }
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", c.name);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (argc > 1 && !matched) {
    std::printf("unknown criterion '%s'\n", argv[1]);
    return 2;
  }
  return failures;
}
