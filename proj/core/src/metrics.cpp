#include "zonalnet/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "zonalnet/stats.hpp"

namespace zonalnet {

std::uint8_t zone_label(Zone z) { return z == Zone::pz ? kPzLabel : kTzLabel; }

const char* zone_name(Zone z) { return z == Zone::pz ? "pz" : "tz"; }

const char* slice_category_name(SliceCategory c) {
  switch (c) {
    case SliceCategory::non_prostate: return "non_prostate";
    case SliceCategory::base_end: return "base_end";
    case SliceCategory::middle: return "middle";
    case SliceCategory::apex_end: return "apex_end";
  }
  return "?";
}

const char* report_subset_name(ReportSubset s) {
  switch (s) {
    case ReportSubset::all_slices: return "all_slices";
    case ReportSubset::prostate_slices: return "prostate_slices";
    case ReportSubset::base_end: return "base_end";
    case ReportSubset::middle: return "middle";
    case ReportSubset::apex_end: return "apex_end";
  }
  return "?";
}

SliceCategory categorize_slice(const LabelMask& truth) {
  validate_mask(truth, "categorize_slice");
  bool has_pz = false, has_tz = false;
  for (const std::uint8_t v : truth.labels) {
    has_pz |= v == kPzLabel;
    has_tz |= v == kTzLabel;
    if (has_pz && has_tz) break;
  }
  if (has_pz && has_tz) return SliceCategory::middle;
  if (has_tz) return SliceCategory::base_end;
  if (has_pz) return SliceCategory::apex_end;
  return SliceCategory::non_prostate;
}

namespace {

void check_pair(const Volume& pred, const Volume& truth, const char* context) {
  validate_volume(pred, context);
  validate_volume(truth, context);
  if (pred.kind != VolumeKind::mask || truth.kind != VolumeKind::mask)
    throw std::invalid_argument(std::string(context) + ": both volumes must be masks");
  if (pred.width != truth.width || pred.height != truth.height || pred.slices != truth.slices)
    throw std::invalid_argument(std::string(context) + ": volume dims differ");
}

}  // namespace

std::optional<double> dsc(const Volume& pred, const Volume& truth, Zone zone,
                          std::span<const std::int64_t> slice_indices) {
  check_pair(pred, truth, "dsc");
  const std::uint8_t label = zone_label(zone);
  std::int64_t inter = 0, np = 0, nt = 0;
  const std::int64_t sp = pred.slice_pixels();
  for (const std::int64_t k : slice_indices) {
    if (k < 0 || k >= pred.slices)
      throw std::invalid_argument("dsc: slice index " + std::to_string(k) + " out of range");
    const std::uint8_t* p = pred.mask_data.data() + k * sp;
    const std::uint8_t* t = truth.mask_data.data() + k * sp;
    for (std::int64_t i = 0; i < sp; ++i) {
      const bool in_p = p[i] == label;
      const bool in_t = t[i] == label;
      np += in_p;
      nt += in_t;
      inter += in_p && in_t;
    }
  }
  if (np + nt == 0) return std::nullopt;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(np + nt);
}

std::optional<double> dsc(const Volume& pred, const Volume& truth, Zone zone) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(pred.slices));
  for (std::int64_t k = 0; k < pred.slices; ++k) all[static_cast<std::size_t>(k)] = k;
  return dsc(pred, truth, zone, all);
}

const std::optional<double>& PatientReport::cell(ReportSubset s, Zone z) const {
  return cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(z)];
}

std::optional<double>& PatientReport::cell(ReportSubset s, Zone z) {
  return cells[static_cast<std::size_t>(s)][static_cast<std::size_t>(z)];
}

PatientReport stratified_report(const Volume& pred, const Volume& truth, std::string case_id) {
  check_pair(pred, truth, "stratified_report");
  PatientReport report;
  report.case_id = std::move(case_id);

  std::array<std::vector<std::int64_t>, 5> subset_slices;
  for (std::int64_t k = 0; k < truth.slices; ++k) {
    const SliceCategory cat = categorize_slice(mask_slice(truth, k));
    ++report.category_counts[static_cast<std::size_t>(cat)];
    subset_slices[static_cast<std::size_t>(ReportSubset::all_slices)].push_back(k);
    switch (cat) {
      case SliceCategory::non_prostate:
        continue;
      case SliceCategory::base_end:
        subset_slices[static_cast<std::size_t>(ReportSubset::base_end)].push_back(k);
        break;
      case SliceCategory::middle:
        subset_slices[static_cast<std::size_t>(ReportSubset::middle)].push_back(k);
        break;
      case SliceCategory::apex_end:
        subset_slices[static_cast<std::size_t>(ReportSubset::apex_end)].push_back(k);
        break;
    }
    subset_slices[static_cast<std::size_t>(ReportSubset::prostate_slices)].push_back(k);
  }

  for (const ReportSubset s : kReportSubsets)
    for (const Zone z : kZones)
      report.cell(s, z) = dsc(pred, truth, z, subset_slices[static_cast<std::size_t>(s)]);
  return report;
}

std::vector<double> SegReport::cell_values(ReportSubset s, Zone z) const {
  std::vector<double> out;
  for (const PatientReport& p : patients)
    if (p.cell(s, z)) out.push_back(*p.cell(s, z));
  return out;
}

std::pair<std::vector<double>, std::vector<double>> SegReport::paired_cell_values(
    const SegReport& a, const SegReport& b, ReportSubset s, Zone z) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const PatientReport& pa : a.patients) {
    for (const PatientReport& pb : b.patients) {
      if (pa.case_id != pb.case_id) continue;
      if (pa.cell(s, z) && pb.cell(s, z)) {
        out.first.push_back(*pa.cell(s, z));
        out.second.push_back(*pb.cell(s, z));
      }
      break;
    }
  }
  return out;
}

namespace {

nlohmann::json patient_to_json(const PatientReport& p) {
  nlohmann::json cells;
  for (const ReportSubset s : kReportSubsets) {
    nlohmann::json row;
    for (const Zone z : kZones) {
      const auto& v = p.cell(s, z);
      row[zone_name(z)] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    cells[report_subset_name(s)] = row;
  }
  nlohmann::json counts;
  for (int c = 0; c < 4; ++c)
    counts[slice_category_name(static_cast<SliceCategory>(c))] = p.category_counts[c];
  return nlohmann::json{{"case_id", p.case_id}, {"cells", cells}, {"slice_counts", counts}};
}

PatientReport patient_from_json(const nlohmann::json& j) {
  PatientReport p;
  p.case_id = j.at("case_id").get<std::string>();
  const auto& cells = j.at("cells");
  for (const ReportSubset s : kReportSubsets) {
    const auto& row = cells.at(report_subset_name(s));
    for (const Zone z : kZones) {
      const auto& v = row.at(zone_name(z));
      if (!v.is_null()) p.cell(s, z) = v.get<double>();
    }
  }
  if (j.contains("slice_counts"))
    for (int c = 0; c < 4; ++c)
      p.category_counts[c] =
          j.at("slice_counts").value(slice_category_name(static_cast<SliceCategory>(c)), 0);
  return p;
}

}  // namespace

std::string SegReport::to_json_string() const {
  nlohmann::json j;
  j["patients"] = nlohmann::json::array();
  for (const PatientReport& p : patients) j["patients"].push_back(patient_to_json(p));
  nlohmann::json summary;
  for (const ReportSubset s : kReportSubsets) {
    nlohmann::json row;
    for (const Zone z : kZones) {
      const auto vals = cell_values(s, z);
      if (vals.empty()) {
        row[zone_name(z)] = nullptr;
        continue;
      }
      const stats::Summary sm = stats::summarize(vals);
      nlohmann::json cell{{"n", sm.n}, {"mean", sm.mean}};
      cell["sd"] = sm.sd ? nlohmann::json(*sm.sd) : nlohmann::json(nullptr);
      row[zone_name(z)] = cell;
    }
    summary[report_subset_name(s)] = row;
  }
  j["summary"] = summary;
  return j.dump(2);
}

SegReport SegReport::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    SegReport r;
    for (const auto& pj : j.at("patients")) r.patients.push_back(patient_from_json(pj));
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("seg report: malformed JSON: ") + e.what());
  }
}

void SegReport::save_json(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("seg report: cannot open " + path.string());
  f << to_json_string() << '\n';
}

SegReport SegReport::load_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("seg report: cannot open " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return from_json_string(buf.str());
}

std::string SegReport::to_csv_string() const {
  std::ostringstream os;
  os << "case_id";
  for (const ReportSubset s : kReportSubsets)
    for (const Zone z : kZones) os << ',' << report_subset_name(s) << '_' << zone_name(z);
  os << '\n';
  os.setf(std::ios::fixed);
  os.precision(4);
  for (const PatientReport& p : patients) {
    os << p.case_id;
    for (const ReportSubset s : kReportSubsets)
      for (const Zone z : kZones) {
        os << ',';
        if (p.cell(s, z)) os << *p.cell(s, z);
      }
    os << '\n';
  }
  os << "mean_sd";
  for (const ReportSubset s : kReportSubsets)
    for (const Zone z : kZones) {
      os << ',';
      const auto vals = cell_values(s, z);
      if (vals.empty()) continue;
      const stats::Summary sm = stats::summarize(vals);
      os << sm.mean;
      if (sm.sd) os << "+/-" << *sm.sd;
    }
  os << '\n';
  return os.str();
}

void SegReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("seg report: cannot open " + path.string());
  f << to_csv_string();
}

}  // namespace zonalnet
