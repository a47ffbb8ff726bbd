#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roar/imaging.hpp"

namespace roar {

/// Optic-disc centroid in pixel coordinates (pixel centers at integers).
struct DiscLocation {
  double cx = 0.0;
  double cy = 0.0;
  std::optional<double> vertical_diameter;

  bool operator==(const DiscLocation&) const = default;
};

enum class CropKind { None, OnhCrop, PeripheryCrop };

std::string to_string(CropKind kind);
CropKind parse_crop_kind(const std::string& text);

/// Circular occlusion: `fraction` is the circle DIAMETER over image width.
struct CropPolicy {
  CropKind kind = CropKind::None;
  double fraction = 0.0;

  bool is_noop() const { return kind == CropKind::None || fraction == 0.0; }
};

/// Equidistant ONH-crop grid: 0, 0.1, ..., 0.6.
std::vector<double> default_onh_fractions();
/// Periphery-crop grid including the 1% and 2.5% points.
std::vector<double> default_periphery_fractions();

/// Boolean "inside" grid, row-major.
struct CircleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> inside;

  bool contains(int x, int y) const { return inside[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

/// Pixel (x,y) is inside iff its distance to the center is strictly less
/// than fraction * w / 2.
CircleMask make_circular_mask(int w, int h, const DiscLocation& center, double fraction);

/// ONH_CROP zeroes the inside of the circle, PERIPHERY_CROP the outside.
/// A zero fraction leaves the image untouched for either kind.
RasterImage apply_crop_policy(const RasterImage& img, const DiscLocation& disc,
                              const CropPolicy& policy);

struct DiscHeuristicOptions {
  double blur_sigma_fraction = 0.05;  // of image width
  double min_contrast = 0.1;          // peak minus median of the blurred gray image
  double level = 0.5;                 // region threshold between median and peak
};

/// Intensity-weighted centroid of the brightest connected region after a
/// heavy blur. Throws NoDiscFound on low contrast.
DiscLocation locate_disc_heuristic(const RasterImage& img, const DiscHeuristicOptions& opts = {});

struct AnnotationRow {
  std::string image_id;
  std::optional<double> disc_x;
  std::optional<double> disc_y;
  int image_width = 0;
  int image_height = 0;
};

/// Rows with both coordinates yield an entry; rows missing either are
/// skipped. Out-of-bounds coordinates raise one ValidationError naming
/// every offending image_id.
std::map<std::string, DiscLocation> load_disc_annotations(const std::vector<AnnotationRow>& rows);

}  // namespace roar
