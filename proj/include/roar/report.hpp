#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "roar/experiment.hpp"

namespace roar {

struct CurvePoint {
  double fraction = 0.0;
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct CurveSeries {
  CropKind policy = CropKind::OnhCrop;
  bool retrain = true;
  std::string metric;
  std::vector<CurvePoint> points;  // sorted by fraction
};

/// Groups results into one series per (policy, retrain) for `metric`.
/// Mean rows are used when present, otherwise repeat 0.
std::vector<CurveSeries> collect_series(const std::vector<RunResult>& rows, const std::string& metric);

/// Default metric drawn for a task: auc or r2.
std::string headline_metric(Task task);

/// Deterministic SVG of metric versus crop fraction with CI whiskers.
std::string render_curves_svg(const std::vector<CurveSeries>& series, const std::string& title);

void emit_curves(const std::vector<RunResult>& rows, const std::string& metric, const std::filesystem::path& out_svg);

}  // namespace roar
