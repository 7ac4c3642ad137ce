#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zonalnet/image.hpp"
#include "zonalnet/volume.hpp"

namespace zonalnet {

enum class Zone { pz, tz };
inline constexpr std::array<Zone, 2> kZones{Zone::pz, Zone::tz};
std::uint8_t zone_label(Zone z);
const char* zone_name(Zone z);

// A slice's category is decided by which zones its ground-truth mask
// contains: TZ only -> base end, both -> middle, PZ only -> apex end.
enum class SliceCategory { non_prostate, base_end, middle, apex_end };
const char* slice_category_name(SliceCategory c);
SliceCategory categorize_slice(const LabelMask& truth);

// Report rows: every slice, prostate-bearing slices pooled, and the three
// prostate regions individually.
enum class ReportSubset { all_slices, prostate_slices, base_end, middle, apex_end };
inline constexpr std::array<ReportSubset, 5> kReportSubsets{
    ReportSubset::all_slices, ReportSubset::prostate_slices, ReportSubset::base_end,
    ReportSubset::middle, ReportSubset::apex_end};
const char* report_subset_name(ReportSubset s);

// Dice similarity coefficient 2|X n Y| / (|X| + |Y|) pooled over the listed
// slices (3-D voxel counts, not a per-slice average). Returns nullopt when
// both sets are empty; 0 when only the prediction is non-empty or only the
// truth is non-empty.
std::optional<double> dsc(const Volume& pred, const Volume& truth, Zone zone,
                          std::span<const std::int64_t> slice_indices);
std::optional<double> dsc(const Volume& pred, const Volume& truth, Zone zone);

// Per-patient stratified DSC table: one optional value per subset x zone.
struct PatientReport {
  std::string case_id;
  std::array<std::array<std::optional<double>, 2>, 5> cells;  // [subset][zone]
  std::array<std::int64_t, 4> category_counts{};              // per SliceCategory

  const std::optional<double>& cell(ReportSubset s, Zone z) const;
  std::optional<double>& cell(ReportSubset s, Zone z);
};

PatientReport stratified_report(const Volume& pred, const Volume& truth, std::string case_id);

// Cohort report: per-patient rows plus mean +/- SD summaries.
struct SegReport {
  std::vector<PatientReport> patients;

  // Present values for one cell, in patient order.
  std::vector<double> cell_values(ReportSubset s, Zone z) const;
  // Per-patient values for one cell for the cases present in both this and
  // other (paired comparisons).
  static std::pair<std::vector<double>, std::vector<double>> paired_cell_values(
      const SegReport& a, const SegReport& b, ReportSubset s, Zone z);

  std::string to_json_string() const;
  static SegReport from_json_string(const std::string& text);
  void save_json(const std::filesystem::path& path) const;
  static SegReport load_json(const std::filesystem::path& path);
  std::string to_csv_string() const;
  void save_csv(const std::filesystem::path& path) const;
};

}  // namespace zonalnet
