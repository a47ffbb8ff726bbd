#include "roar/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <unordered_map>

#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

void require_pairs(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty()) throw InvalidArgument(fmt::format("{}: empty input", what));
  if (a.size() != b.size()) throw ShapeError(fmt::format("{}: length mismatch", what));
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void require_binary(std::span<const double> label, const char* what) {
  bool pos = false;
  bool neg = false;
  for (double y : label) {
    if (y == 1.0) {
      pos = true;
    } else if (y == 0.0) {
      neg = true;
    } else {
      throw InvalidArgument(fmt::format("{}: label {} not in {{0,1}}", what, y));
    }
  }
  if (!pos || !neg) throw UndefinedMetric(fmt::format("{}: both classes must be present", what));
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> label) {
  require_pairs(pred, label, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - label[i]);
  return s / static_cast<double>(pred.size());
}

double r2(std::span<const double> pred, std::span<const double> label) {
  require_pairs(pred, label, "r2");
  const double m = mean_of(label);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (label[i] - pred[i]) * (label[i] - pred[i]);
    ss_tot += (label[i] - m) * (label[i] - m);
  }
  if (!(ss_tot > 0.0)) throw UndefinedMetric("r2: labels have zero variance");
  return 1.0 - ss_res / ss_tot;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  require_pairs(x, y, "pearson_r");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedMetric("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double point_biserial(std::span<const double> binary, std::span<const double> continuous) {
  require_pairs(binary, continuous, "point_biserial");
  require_binary(binary, "point_biserial");
  return pearson_r(binary, continuous);
}

double roc_auc(std::span<const double> score, std::span<const double> label) {
  require_pairs(score, label, "roc_auc");
  require_binary(label, "roc_auc");
  const std::size_t n = score.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  // Average 1-based ranks over tie groups; halves are exact in binary.
  double pos_rank_sum = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && score[order[j + 1]] == score[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (label[order[k]] == 1.0) {
        pos_rank_sum += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

std::vector<PredictionRecord> aggregate_patient_max(std::span<const PredictionRecord> records) {
  std::vector<PredictionRecord> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, inserted] = slot.try_emplace(r.patient_id, out.size());
    if (inserted) {
      out.push_back({r.patient_id, r.patient_id, "", r.prediction, r.label == 1.0 ? 1.0 : 0.0});
      continue;
    }
    auto& agg = out[it->second];
    agg.prediction = std::max(agg.prediction, r.prediction);
    if (r.label == 1.0) agg.label = 1.0;
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile: empty input");
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double t = pos - static_cast<double>(lo);
  if (t == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
  return sorted[lo] + t * (sorted[hi] - sorted[lo]);
}

MetricReport bootstrap_ci(std::size_t n_units, const ResampleMetric& metric, const std::string& name,
                          const BootstrapOptions& opts) {
  if (n_units < 2) throw InvalidArgument("bootstrap_ci: need at least two evaluation units");
  if (opts.iterations < 1) throw InvalidArgument("bootstrap_ci: iterations must be >= 1");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw InvalidArgument("bootstrap_ci: level must lie in (0,1)");

  std::vector<std::size_t> all(n_units);
  std::iota(all.begin(), all.end(), std::size_t{0});
  MetricReport report;
  report.metric = name;
  report.n = n_units;
  report.bootstrap_iterations = opts.iterations;
  report.point_estimate = metric(all);

  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n_units - 1);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(opts.iterations));
  std::vector<std::size_t> sample(n_units);
  const auto max_undefined = static_cast<long>(std::floor(opts.max_undefined_fraction * opts.iterations));
  long undefined = 0;
  while (stats.size() < static_cast<std::size_t>(opts.iterations)) {
    for (auto& s : sample) s = pick(rng);
    try {
      stats.push_back(metric(sample));
    } catch (const UndefinedMetric&) {
      if (++undefined > max_undefined) {
        throw UndefinedMetric(fmt::format("bootstrap {}: metric undefined on more than {:.0f}% of resamples", name,
                                          100.0 * opts.max_undefined_fraction));
      }
    }
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - opts.level;
  report.ci_low = quantile_sorted(stats, alpha / 2.0);
  report.ci_high = quantile_sorted(stats, 1.0 - alpha / 2.0);
  return report;
}

std::string to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::Mae:
      return "mae";
    case MetricKind::R2:
      return "r2";
    case MetricKind::Pearson:
      return "pearson_r";
    case MetricKind::Auc:
      return "auc";
    case MetricKind::PointBiserial:
      return "point_biserial";
  }
  return "unknown";
}

double evaluate_metric(MetricKind kind, std::span<const double> pred, std::span<const double> label) {
  switch (kind) {
    case MetricKind::Mae:
      return mae(pred, label);
    case MetricKind::R2:
      return r2(pred, label);
    case MetricKind::Pearson:
      return pearson_r(pred, label);
    case MetricKind::Auc:
      return roc_auc(pred, label);
    case MetricKind::PointBiserial:
      return point_biserial(label, pred);
  }
  throw InvalidArgument("unknown metric");
}

MetricReport bootstrap_records(std::span<const PredictionRecord> records, MetricKind kind,
                               const BootstrapOptions& opts) {
  std::vector<double> pred;
  std::vector<double> label;
  for (const auto& r : records) {
    pred.push_back(r.prediction);
    label.push_back(r.label);
  }
  std::vector<double> p;
  std::vector<double> l;
  const ResampleMetric metric = [&](std::span<const std::size_t> idx) {
    p.resize(idx.size());
    l.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      p[i] = pred[idx[i]];
      l[i] = label[idx[i]];
    }
    return evaluate_metric(kind, p, l);
  };
  return bootstrap_ci(records.size(), metric, to_string(kind), opts);
}

namespace {

double sample_sd(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

constexpr double kBandwidthFloor = 1e-3;

}  // namespace

double silverman_bandwidth(std::span<const double> points) {
  if (points.size() < 2) throw InvalidArgument("kde: need at least two points");
  std::vector<double> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  const double sd = sample_sd(points);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = sd;
  if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
  const double h = 0.9 * spread * std::pow(static_cast<double>(points.size()), -0.2);
  return h > 0.0 ? h : kBandwidthFloor;
}

std::vector<double> kde_density(std::span<const double> points, std::optional<double> bandwidth,
                                std::span<const double> grid) {
  if (points.size() < 2) throw InvalidArgument("kde: need at least two points");
  const double h = bandwidth.value_or(silverman_bandwidth(points));
  if (!(h > 0.0)) throw InvalidArgument("kde: bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(points.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double p : points) {
      const double u = (grid[g] - p) / h;
      acc += std::exp(-0.5 * u * u);
    }
    out[g] = acc * norm;
  }
  return out;
}

std::vector<double> kde_density_2d(std::span<const double> xs, std::span<const double> ys,
                                   std::optional<double> bandwidth_x, std::optional<double> bandwidth_y,
                                   std::span<const double> grid_x, std::span<const double> grid_y) {
  if (xs.size() < 2) throw InvalidArgument("kde: need at least two points");
  if (xs.size() != ys.size()) throw ShapeError("kde: coordinate lengths differ");
  const double factor = std::pow(static_cast<double>(xs.size()), -1.0 / 6.0);
  const auto auto_bw = [&](std::span<const double> v) {
    const double h = sample_sd(v) * factor;
    return h > 0.0 ? h : kBandwidthFloor;
  };
  const double hx = bandwidth_x.value_or(auto_bw(xs));
  const double hy = bandwidth_y.value_or(auto_bw(ys));
  if (!(hx > 0.0) || !(hy > 0.0)) throw InvalidArgument("kde: bandwidth must be positive");
  const double norm = 1.0 / (static_cast<double>(xs.size()) * 2.0 * std::numbers::pi * hx * hy);
  std::vector<double> out(grid_x.size() * grid_y.size(), 0.0);
  for (std::size_t gy = 0; gy < grid_y.size(); ++gy) {
    for (std::size_t gx = 0; gx < grid_x.size(); ++gx) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double u = (grid_x[gx] - xs[i]) / hx;
        const double v = (grid_y[gy] - ys[i]) / hy;
        acc += std::exp(-0.5 * (u * u + v * v));
      }
      out[gy * grid_x.size() + gx] = acc * norm;
    }
  }
  return out;
}

}  // namespace roar
