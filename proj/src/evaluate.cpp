#include "pnl/evaluate.hpp"

#include "pnl/errors.hpp"
#include "pnl/parallel.hpp"

#include <fmt/format.h>

#include <fstream>
#include <stdexcept>

namespace pnl {

MetricsReport evaluate(const SegmentationModel& model, std::span<const Sample* const> samples,
                       Averaging averaging, int workers) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty test set");
  std::vector<ConfusionCounts> counts(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    const Sample& s = *samples[i];
    const BinaryMask* gt = s.mask ? &*s.mask : (s.heldout_mask ? &*s.heldout_mask : nullptr);
    if (gt == nullptr) throw std::invalid_argument("evaluate: sample " + s.id + " has no ground truth");
    counts[i] = confusion(threshold(model.predict(s.image)), *gt);
  });
  return aggregate(counts, averaging);
}

namespace {

nlohmann::ordered_json metric_json(const Metric& m) {
  return m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json(nullptr);
}

Metric metric_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::string csv_cell(const Metric& m) { return m ? fmt::format("{:.17g}", *m) : std::string(); }

}  // namespace

nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["miou"] = metric_json(r.miou);
  j["pa"] = metric_json(r.pa);
  j["recall"] = metric_json(r.recall);
  j["precision"] = metric_json(r.precision);
  j["dice"] = metric_json(r.dice);
  j["pseudo_point_containment"] = metric_json(r.pseudo_point_containment);
  j["pseudo_miou"] = metric_json(r.pseudo_miou);
  j["images"] = r.images;
  j["undefined_excluded"] = r.undefined_excluded;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.miou = metric_from(j, "miou");
  r.pa = metric_from(j, "pa");
  r.recall = metric_from(j, "recall");
  r.precision = metric_from(j, "precision");
  r.dice = metric_from(j, "dice");
  r.pseudo_point_containment = metric_from(j, "pseudo_point_containment");
  r.pseudo_miou = metric_from(j, "pseudo_miou");
  r.images = j.value("images", std::size_t{0});
  r.undefined_excluded = j.value("undefined_excluded", std::size_t{0});
  return r;
}

void write_report(const std::filesystem::path& dir, const MetricsReport& r) {
  std::filesystem::create_directories(dir);
  std::ofstream js(dir / "report.json");
  if (!js) throw IoError("cannot write " + (dir / "report.json").string());
  js << to_json(r).dump(2) << '\n';
  std::ofstream csv(dir / "report.csv");
  if (!csv) throw IoError("cannot write " + (dir / "report.csv").string());
  csv << "miou,pa,recall,precision,dice,pseudo_point_containment,pseudo_miou,images\n";
  csv << csv_cell(r.miou) << ',' << csv_cell(r.pa) << ',' << csv_cell(r.recall) << ','
      << csv_cell(r.precision) << ',' << csv_cell(r.dice) << ',' << csv_cell(r.pseudo_point_containment)
      << ',' << csv_cell(r.pseudo_miou) << ',' << r.images << '\n';
}

}  // namespace pnl
