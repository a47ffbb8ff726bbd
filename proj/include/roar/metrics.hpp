#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace roar {

struct PredictionRecord {
  std::string image_id;
  std::string patient_id;
  std::string eye_id;
  double prediction = 0.0;
  double label = 0.0;

  bool operator==(const PredictionRecord&) const = default;
};

/// Point estimate with a percentile bootstrap interval. Only
/// ci_low <= ci_high is guaranteed; the point estimate may fall outside.
struct MetricReport {
  std::string metric;
  double point_estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
  int bootstrap_iterations = 0;
};

double mae(std::span<const double> pred, std::span<const double> label);
/// 1 - SS_res / SS_tot. Throws UndefinedMetric on constant labels.
double r2(std::span<const double> pred, std::span<const double> label);
/// Product-moment correlation. Throws UndefinedMetric on zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);
/// Pearson correlation with the binary variable coded 0/1.
double point_biserial(std::span<const double> binary, std::span<const double> continuous);
/// Mann-Whitney AUC with ties credited 0.5. Labels must be 0 or 1.
double roc_auc(std::span<const double> score, std::span<const double> label);

/// One record per patient (first-appearance order): prediction is the max
/// over the patient's images, label is 1 if any image is positive.
std::vector<PredictionRecord> aggregate_patient_max(std::span<const PredictionRecord> records);

struct BootstrapOptions {
  int iterations = 5000;
  double level = 0.95;
  std::uint64_t seed = 0;
  double max_undefined_fraction = 0.2;
};

/// Metric evaluated on a resample given as unit indices (with repeats).
/// Signals "undefined on this resample" by throwing UndefinedMetric.
using ResampleMetric = std::function<double(std::span<const std::size_t>)>;

/// Percentile bootstrap over `n_units` evaluation units. Undefined resamples
/// are redrawn; if they exceed max_undefined_fraction of the requested
/// iterations an UndefinedMetric is raised.
MetricReport bootstrap_ci(std::size_t n_units, const ResampleMetric& metric, const std::string& name,
                          const BootstrapOptions& opts = {});

enum class MetricKind { Mae, R2, Pearson, Auc, PointBiserial };

std::string to_string(MetricKind kind);
double evaluate_metric(MetricKind kind, std::span<const double> pred, std::span<const double> label);

/// Bootstrap with each record as one unit.
MetricReport bootstrap_records(std::span<const PredictionRecord> records, MetricKind kind,
                               const BootstrapOptions& opts = {});

/// Linear-interpolated quantile of sorted data, q in [0,1].
double quantile_sorted(std::span<const double> sorted, double q);

/// 0.9 * min(sd, IQR / 1.34) * n^(-1/5); falls back to 1e-3 on degenerate data.
double silverman_bandwidth(std::span<const double> points);

/// Gaussian kernel density on `grid`; bandwidth nullopt selects Silverman.
std::vector<double> kde_density(std::span<const double> points, std::optional<double> bandwidth,
                                std::span<const double> grid);

/// Product-kernel 2-D density; result is row-major over (grid_y, grid_x).
std::vector<double> kde_density_2d(std::span<const double> xs, std::span<const double> ys,
                                   std::optional<double> bandwidth_x, std::optional<double> bandwidth_y,
                                   std::span<const double> grid_x, std::span<const double> grid_y);

}  // namespace roar
