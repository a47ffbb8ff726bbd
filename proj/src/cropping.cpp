#include "roar/cropping.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "roar/error.hpp"

namespace roar {

std::string to_string(CropKind kind) {
  switch (kind) {
    case CropKind::None:
      return "none";
    case CropKind::OnhCrop:
      return "onh";
    case CropKind::PeripheryCrop:
      return "periphery";
  }
  return "none";
}

CropKind parse_crop_kind(const std::string& text) {
  if (text == "none") return CropKind::None;
  if (text == "onh" || text == "onh_crop") return CropKind::OnhCrop;
  if (text == "periphery" || text == "periphery_crop") return CropKind::PeripheryCrop;
  throw InvalidArgument(fmt::format("unknown crop policy '{}' (expected none, onh, periphery)", text));
}

std::vector<double> default_onh_fractions() { return {0.0, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60}; }

std::vector<double> default_periphery_fractions() {
  return {0.01, 0.025, 0.05, 0.10, 0.20, 0.30, 0.40, 0.50, 0.60};
}

std::size_t CircleMask::count() const {
  return static_cast<std::size_t>(std::count(inside.begin(), inside.end(), std::uint8_t{1}));
}

CircleMask make_circular_mask(int w, int h, const DiscLocation& center, double fraction) {
  if (w < 1 || h < 1) throw InvalidArgument("make_circular_mask: invalid size");
  if (!(fraction >= 0.0 && fraction <= 1.5)) {
    throw InvalidArgument(fmt::format("make_circular_mask: fraction {} outside [0,1.5]", fraction));
  }
  CircleMask mask{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};
  const double radius = fraction * w / 2.0;
  const double r2 = radius * radius;
  for (int y = 0; y < h; ++y) {
    const double dy = y - center.cy;
    for (int x = 0; x < w; ++x) {
      const double dx = x - center.cx;
      if (dx * dx + dy * dy < r2) mask.inside[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return mask;
}

RasterImage apply_crop_policy(const RasterImage& img, const DiscLocation& disc,
                              const CropPolicy& policy) {
  if (policy.is_noop()) return img;
  if (!(disc.cx >= 0 && disc.cx < img.width() && disc.cy >= 0 && disc.cy < img.height())) {
    throw InvalidArgument(fmt::format("apply_crop_policy: disc ({}, {}) outside {}x{} frame",
                                      disc.cx, disc.cy, img.width(), img.height()));
  }
  const auto mask = make_circular_mask(img.width(), img.height(), disc, policy.fraction);
  const bool zero_inside = policy.kind == CropKind::OnhCrop;
  RasterImage out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (mask.contains(x, y) == zero_inside) {
        for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = 0.0;
      }
    }
  }
  return out;
}

DiscLocation locate_disc_heuristic(const RasterImage& img, const DiscHeuristicOptions& opts) {
  const int w = img.width();
  const int h = img.height();
  if (w < 1 || h < 1) throw InvalidArgument("locate_disc_heuristic: empty image");
  std::vector<double> gray(img.pixel_count());
  const auto data = img.data();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    gray[i] = (data[3 * i] + data[3 * i + 1] + data[3 * i + 2]) / 3.0;
  }
  const auto blurred = blur_plane(gray, w, h, std::max(1.0, opts.blur_sigma_fraction * w));

  auto sorted = blurred;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const auto peak_it = std::max_element(blurred.begin(), blurred.end());
  const double peak = *peak_it;
  if (peak - median < opts.min_contrast) {
    throw NoDiscFound(fmt::format("no optic disc found: peak contrast {:.4f} below threshold {:.4f}",
                                  peak - median, opts.min_contrast));
  }

  const double threshold = median + opts.level * (peak - median);
  const std::size_t seed = static_cast<std::size_t>(peak_it - blurred.begin());
  std::vector<std::uint8_t> visited(blurred.size(), 0);
  std::deque<std::size_t> queue{seed};
  visited[seed] = 1;
  double sum_w = 0.0;
  double sum_x = 0.0;
  double sum_y = 0.0;
  int min_y = h;
  int max_y = -1;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    const double weight = blurred[i] - threshold;
    sum_w += weight;
    sum_x += weight * x;
    sum_y += weight * y;
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
      const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
      if (!visited[j] && blurred[j] >= threshold) {
        visited[j] = 1;
        queue.push_back(j);
      }
    }
  }
  DiscLocation loc;
  if (sum_w > 0.0) {
    loc.cx = sum_x / sum_w;
    loc.cy = sum_y / sum_w;
  } else {
    loc.cx = static_cast<double>(seed % w);
    loc.cy = static_cast<double>(seed / w);
  }
  loc.vertical_diameter = static_cast<double>(max_y - min_y + 1);
  return loc;
}

std::map<std::string, DiscLocation> load_disc_annotations(const std::vector<AnnotationRow>& rows) {
  std::map<std::string, DiscLocation> out;
  std::vector<std::string> bad;
  for (const auto& row : rows) {
    if (!row.disc_x || !row.disc_y) continue;
    const double x = *row.disc_x;
    const double y = *row.disc_y;
    if (!(x >= 0 && x < row.image_width && y >= 0 && y < row.image_height)) {
      bad.push_back(fmt::format("{} ({}, {}) outside {}x{}", row.image_id, x, y, row.image_width,
                                row.image_height));
      continue;
    }
    out[row.image_id] = DiscLocation{x, y, std::nullopt};
  }
  if (!bad.empty()) {
    throw ValidationError(fmt::format("disc annotations out of bounds: {}", fmt::join(bad, "; ")));
  }
  return out;
}

}  // namespace roar
