#pragma once

#include "pnl/core_types.hpp"
#include "pnl/metrics.hpp"
#include "pnl/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>

namespace pnl {

/// Thresholds each prediction at 0.5 and aggregates confusion counts.
/// Samples must carry a mask (or a held-out mask). Throws on an empty set.
MetricsReport evaluate(const SegmentationModel& model, std::span<const Sample* const> samples,
                       Averaging averaging = Averaging::Micro, int workers = 1);

nlohmann::ordered_json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// report.json and report.csv (one header row, one value row).
void write_report(const std::filesystem::path& dir, const MetricsReport& report);

}  // namespace pnl
