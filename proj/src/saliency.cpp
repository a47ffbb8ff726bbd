#include "roar/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "roar/error.hpp"
#include "roar/training.hpp"

namespace roar {

SaliencyMap::SaliencyMap(int w, int h, double fill)
    : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {
  if (w < 1 || h < 1) throw InvalidArgument("SaliencyMap: invalid size");
}

double SaliencyMap::total() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

std::vector<SaliencyMap> saliency_maps(const Network& net, std::span<const RasterImage> images, int batch_size) {
  std::vector<SaliencyMap> out;
  out.reserve(images.size());
  const std::size_t step = static_cast<std::size_t>(std::max(1, batch_size));
  for (std::size_t start = 0; start < images.size(); start += step) {
    const std::size_t end = std::min(images.size(), start + step);
    const Tensor grad = net.input_gradient(to_batch(images.subspan(start, end - start)));
    const std::size_t h = grad.dim(2);
    const std::size_t w = grad.dim(3);
    const std::size_t plane = h * w;
    for (std::size_t n = 0; n < end - start; ++n) {
      SaliencyMap map(static_cast<int>(w), static_cast<int>(h));
      const double* g = grad.data() + n * 3 * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        map.values[p] = std::max({std::abs(g[p]), std::abs(g[plane + p]), std::abs(g[2 * plane + p])});
      }
      out.push_back(std::move(map));
    }
  }
  return out;
}

SaliencyMap saliency_map(const Network& net, const RasterImage& image) {
  return saliency_maps(net, std::span<const RasterImage>(&image, 1)).front();
}

SaliencyMap shift_map(const SaliencyMap& map, int dx, int dy) {
  SaliencyMap out(map.width, map.height);
  for (int y = 0; y < map.height; ++y) {
    const int ty = y + dy;
    if (ty < 0 || ty >= map.height) continue;
    for (int x = 0; x < map.width; ++x) {
      const int tx = x + dx;
      if (tx < 0 || tx >= map.width) continue;
      out.at(tx, ty) = map.at(x, y);
    }
  }
  return out;
}

SaliencyMap align_map(const SaliencyMap& map, const DiscLocation& disc, PixelCoord target_center) {
  if (!(disc.cx >= 0 && disc.cx < map.width && disc.cy >= 0 && disc.cy < map.height)) {
    throw InvalidArgument("align_map: disc centroid outside the map");
  }
  const int dx = static_cast<int>(std::lround(target_center.x - disc.cx));
  const int dy = static_cast<int>(std::lround(target_center.y - disc.cy));
  if (dx == 0 && dy == 0) return map;
  return shift_map(map, dx, dy);
}

SaliencyMap mirror_left(const SaliencyMap& map, Laterality side) {
  if (side == Laterality::Right) return map;
  SaliencyMap out = map;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) out.at(x, y) = map.at(map.width - 1 - x, y);
  }
  return out;
}

SaliencyMap average_maps(std::span<const SaliencyMap> maps) {
  if (maps.empty()) throw InvalidArgument("average_maps: empty list");
  SaliencyMap out(maps.front().width, maps.front().height);
  for (const auto& m : maps) {
    if (m.width != out.width || m.height != out.height) throw ShapeError("average_maps: maps differ in size");
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += m.values[i];
  }
  const double n = static_cast<double>(maps.size());
  for (double& v : out.values) v /= n;
  return out;
}

SaliencyMap normalize_mass(const SaliencyMap& map) {
  const double t = map.total();
  if (!(t > 0.0)) return map;
  SaliencyMap out = map;
  for (double& v : out.values) v /= t;
  return out;
}

void SectorSpec::validate() const {
  if (!(inner >= 0.0 && inner < outer)) throw InvalidArgument(fmt::format("sector {}: need 0 <= inner < outer", name));
  const auto ok = [](double a) { return a >= 0.0 && a < 360.0; };
  if (!ok(angle_begin) || !(angle_end > 0.0 && angle_end <= 360.0)) {
    throw InvalidArgument(fmt::format("sector {}: angles must lie in [0,360)", name));
  }
}

double sector_angle(double dx, double dy) {
  double deg = std::atan2(-dy, -dx) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

bool SectorSpec::contains(double dx, double dy, int width) const {
  const double r = std::sqrt(dx * dx + dy * dy);
  if (r < inner * width || r >= outer * width) return false;
  const double a = sector_angle(dx, dy);
  if (angle_begin <= angle_end) return a >= angle_begin && a < angle_end;
  return a >= angle_begin || a < angle_end;
}

double sector_mass(const SaliencyMap& map, const SectorSpec& sector, PixelCoord center) {
  sector.validate();
  double inside = 0.0;
  double total = 0.0;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const double v = map.at(x, y);
      total += v;
      if (sector.contains(x - center.x, y - center.y, map.width)) inside += v;
    }
  }
  if (!(total > 0.0)) throw UndefinedMetric("sector_mass: map has zero total mass");
  return inside / total;
}

double sector_area_share(int width, int height, const SectorSpec& sector, PixelCoord center) {
  sector.validate();
  std::size_t inside = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (sector.contains(x - center.x, y - center.y, width)) ++inside;
    }
  }
  return static_cast<double>(inside) / (static_cast<double>(width) * height);
}

std::vector<SectorSpec> quadrant_sectors(double inner, double outer) {
  return {{"superotemporal", inner, outer, 0.0, 90.0},
          {"superonasal", inner, outer, 90.0, 180.0},
          {"inferonasal", inner, outer, 180.0, 270.0},
          {"inferotemporal", inner, outer, 270.0, 360.0}};
}

namespace {

double map_max(const SaliencyMap& map) {
  double m = 0.0;
  for (double v : map.values) m = std::max(m, v);
  return m;
}

}  // namespace

void write_saliency_pgm(const std::filesystem::path& path, const SaliencyMap& map) {
  const double peak = map_max(map);
  std::vector<std::uint16_t> q(map.values.size(), 0);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      q[i] = static_cast<std::uint16_t>(std::lround(std::clamp(map.values[i] / peak, 0.0, 1.0) * 65535.0));
    }
  }
  write_pgm16(path, map.width, map.height, q);
}

void write_saliency_png(const std::filesystem::path& path, const SaliencyMap& map) {
  const double peak = map_max(map);
  Raw8Image img{map.width, map.height, std::vector<std::uint8_t>(map.values.size() * 3)};
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const double t = peak > 0.0 ? std::clamp(map.values[i] / peak, 0.0, 1.0) : 0.0;
    // black -> red -> yellow -> white
    const double r = std::clamp(3.0 * t, 0.0, 1.0);
    const double g = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
    const double b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
    img.data[3 * i] = static_cast<std::uint8_t>(std::lround(255.0 * r));
    img.data[3 * i + 1] = static_cast<std::uint8_t>(std::lround(255.0 * g));
    img.data[3 * i + 2] = static_cast<std::uint8_t>(std::lround(255.0 * b));
  }
  write_png(path, img);
}

}  // namespace roar
