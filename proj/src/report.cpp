#include "roar/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 170.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 56.0;

struct Frame {
  double x_max = 0.6;
  double y_min = 0.0;
  double y_max = 1.0;

  double px(double f) const { return kLeft + f / x_max * (kWidth - kLeft - kRight); }
  double py(double v) const { return kTop + (y_max - v) / (y_max - y_min) * (kHeight - kTop - kBottom); }
};

std::string series_color(CropKind policy) { return policy == CropKind::PeripheryCrop ? "#c0392b" : "#2471a3"; }

std::string series_label(const CurveSeries& s) {
  return fmt::format("{} {}", to_string(s.policy), s.retrain ? "retrained" : "occluded");
}

std::string escape_xml(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string headline_metric(Task task) { return task == Task::VcdrRegression ? "r2" : "auc"; }

std::vector<CurveSeries> collect_series(const std::vector<RunResult>& rows, const std::string& metric) {
  // key: policy, retrain
  std::map<std::pair<int, int>, bool> has_mean;
  for (const auto& r : rows) {
    if (r.metric == metric && r.repeat < 0) has_mean[{static_cast<int>(r.policy), r.retrain ? 1 : 0}] = true;
  }
  std::map<std::pair<int, int>, CurveSeries> grouped;
  for (const auto& r : rows) {
    if (r.metric != metric) continue;
    const std::pair<int, int> key{static_cast<int>(r.policy), r.retrain ? 1 : 0};
    const bool want = has_mean.count(key) ? r.repeat < 0 : r.repeat == 0;
    if (!want) continue;
    auto& s = grouped[key];
    s.policy = r.policy;
    s.retrain = r.retrain;
    s.metric = metric;
    s.points.push_back({r.fraction, r.value, r.ci_low, r.ci_high});
  }
  std::vector<CurveSeries> out;
  for (auto& [key, s] : grouped) {
    std::stable_sort(s.points.begin(), s.points.end(),
                     [](const CurvePoint& a, const CurvePoint& b) { return a.fraction < b.fraction; });
    out.push_back(std::move(s));
  }
  // Retrained series first so occlusion markers draw on top.
  std::stable_sort(out.begin(), out.end(), [](const CurveSeries& a, const CurveSeries& b) { return a.retrain > b.retrain; });
  return out;
}

std::string render_curves_svg(const std::vector<CurveSeries>& series, const std::string& title) {
  if (series.empty()) throw InvalidArgument("render_curves_svg: no series to draw");
  Frame fr;
  double x_max = 0.0;
  double lo = 1e300, hi = -1e300;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      x_max = std::max(x_max, p.fraction);
      lo = std::min({lo, p.value, p.ci_low});
      hi = std::max({hi, p.value, p.ci_high});
    }
  }
  fr.x_max = x_max > 0.0 ? x_max : 1.0;
  if (!(hi > lo)) {
    lo -= 0.05;
    hi += 0.05;
  }
  const double pad = 0.05 * (hi - lo);
  fr.y_min = std::floor((lo - pad) * 20.0) / 20.0;
  fr.y_max = std::ceil((hi + pad) * 20.0) / 20.0;

  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n",
      kWidth, kHeight, kWidth, kHeight);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += fmt::format("<text x=\"{:.2f}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n", kLeft,
                     escape_xml(title));

  const double x0 = fr.px(0.0), x1 = fr.px(fr.x_max);
  const double y0 = fr.py(fr.y_min), y1 = fr.py(fr.y_max);
  svg += fmt::format("<g id=\"axes\" stroke=\"#333\" stroke-width=\"1\">\n"
                     "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n"
                     "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n</g>\n",
                     x0, y0, x1, y0, x0, y0, x0, y1);
  const int x_ticks = 6;
  for (int i = 0; i <= x_ticks; ++i) {
    const double f = fr.x_max * i / x_ticks;
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                       "text-anchor=\"middle\">{:.0f}%</text>\n",
                       fr.px(f), y0 + 16, f * 100.0);
  }
  const int y_ticks = 5;
  for (int i = 0; i <= y_ticks; ++i) {
    const double v = fr.y_min + (fr.y_max - fr.y_min) * i / y_ticks;
    svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#ddd\"/>\n", x0,
                       fr.py(v), x1, fr.py(v));
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" "
                       "text-anchor=\"end\">{:.2f}</text>\n",
                       x0 - 6, fr.py(v) + 4, v);
  }
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "text-anchor=\"middle\">crop fraction of image width</text>\n",
                     (x0 + x1) / 2, kHeight - 14);
  svg += fmt::format("<text x=\"16\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "transform=\"rotate(-90 16 {:.2f})\" text-anchor=\"middle\">{}</text>\n",
                     (y0 + y1) / 2, (y0 + y1) / 2, escape_xml(series.front().metric));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto color = series_color(s.policy);
    svg += fmt::format("<g class=\"series\" data-policy=\"{}\" data-retrain=\"{}\">\n", to_string(s.policy),
                       s.retrain ? 1 : 0);
    for (const auto& p : s.points) {
      const double x = fr.px(p.fraction);
      svg += fmt::format("<line class=\"whisker\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" "
                         "stroke=\"{}\" stroke-width=\"1\"/>\n",
                         x, fr.py(p.ci_low), x, fr.py(p.ci_high), color);
    }
    std::string pts;
    for (const auto& p : s.points) {
      if (!pts.empty()) pts += ' ';
      pts += fmt::format("{:.2f},{:.2f}", fr.px(p.fraction), fr.py(p.value));
    }
    svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"{}/>\n", pts, color,
                       s.retrain ? "" : " stroke-dasharray=\"5,4\"");
    for (const auto& p : s.points) {
      const double x = fr.px(p.fraction), y = fr.py(p.value);
      if (s.retrain) {
        svg += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3.5\" fill=\"{}\"/>\n", x, y, color);
      } else {
        svg += fmt::format("<rect class=\"occlusion\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"8\" height=\"8\" "
                           "fill=\"white\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                           x - 4, y - 4, color);
      }
    }
    const double ly = kTop + 18.0 * static_cast<double>(k);
    const double lx = kWidth - kRight + 16;
    svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
                       "stroke-width=\"2\"{}/>\n",
                       lx, ly, lx + 22, ly, color, s.retrain ? "" : " stroke-dasharray=\"5,4\"");
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                       lx + 28, ly + 4, escape_xml(series_label(s)));
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_curves(const std::vector<RunResult>& rows, const std::string& metric, const std::filesystem::path& out_svg) {
  const auto series = collect_series(rows, metric);
  if (series.empty()) throw ValidationError(fmt::format("no results rows for metric '{}'", metric));
  const auto title = fmt::format("{} {} versus crop fraction", to_string(rows.front().task), metric);
  if (out_svg.has_parent_path()) std::filesystem::create_directories(out_svg.parent_path());
  std::ofstream out(out_svg, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", out_svg.string()));
  out << render_curves_svg(series, title);
}

}  // namespace roar
