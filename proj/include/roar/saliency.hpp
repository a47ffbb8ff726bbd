#pragma once

#include <span>
#include <string>
#include <vector>

#include "roar/cropping.hpp"
#include "roar/imaging.hpp"
#include "roar/network.hpp"

namespace roar {

/// Nonnegative per-pixel relevance, row-major.
struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  SaliencyMap() = default;
  SaliencyMap(int w, int h, double fill = 0.0);

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double total() const;

  bool operator==(const SaliencyMap&) const = default;
};

/// max over channels of |d logit / d pixel|.
SaliencyMap saliency_map(const Network& net, const RasterImage& image);
/// Batched form of saliency_map; results are identical per image.
std::vector<SaliencyMap> saliency_maps(const Network& net, std::span<const RasterImage> images,
                                       int batch_size = 32);

/// Integer translation moving the disc centroid onto target_center. Vacated
/// pixels are 0, pixels shifted out of frame are dropped.
SaliencyMap align_map(const SaliencyMap& map, const DiscLocation& disc, PixelCoord target_center);
SaliencyMap shift_map(const SaliencyMap& map, int dx, int dy);

/// Reverses columns for left eyes so every map is in the right-eye frame.
SaliencyMap mirror_left(const SaliencyMap& map, Laterality side);

/// Per-pixel mean, summed in list order.
SaliencyMap average_maps(std::span<const SaliencyMap> maps);

/// Divides a map by its total mass (no-op on an all-zero map).
SaliencyMap normalize_mass(const SaliencyMap& map);

/// Annular sector around a center. Radii are fractions of the map width.
/// Angles are in degrees, counter-clockwise, 0 deg pointing temporally in the
/// right-eye frame (towards -x) and 90 deg pointing superiorly (towards -y).
/// An interval with begin > end wraps through 0.
struct SectorSpec {
  std::string name;
  double inner = 0.0;
  double outer = 0.5;
  double angle_begin = 0.0;
  double angle_end = 90.0;

  void validate() const;
  bool contains(double dx, double dy, int width) const;
};

/// Angle of (dx, dy) in the sector convention above.
double sector_angle(double dx, double dy);

/// Fraction of the total map mass inside the sector.
double sector_mass(const SaliencyMap& map, const SectorSpec& sector, PixelCoord center);
/// Fraction of the map's pixels inside the sector.
double sector_area_share(int width, int height, const SectorSpec& sector, PixelCoord center);

/// Superotemporal, superonasal, inferonasal, inferotemporal quadrants.
std::vector<SectorSpec> quadrant_sectors(double inner, double outer);

/// 16-bit graymap scaled so the map maximum is 65535.
void write_saliency_pgm(const std::filesystem::path& path, const SaliencyMap& map);
/// Heat-colored PNG scaled to the map maximum.
void write_saliency_png(const std::filesystem::path& path, const SaliencyMap& map);

}  // namespace roar
