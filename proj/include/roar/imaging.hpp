#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace roar {

using Rng = std::mt19937_64;

/// Three-channel image with intensities in [0,1], stored row-major with
/// channels interleaved (r,g,b,r,g,b,...).
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  RasterImage(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const RasterImage&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// 8-bit interleaved RGB buffer as read from disk.
struct Raw8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
};

enum class Laterality { Left, Right };

std::string to_string(Laterality side);
Laterality parse_laterality(const std::string& text);

struct ImageMeta {
  std::string image_id;
  std::string patient_id;
  std::string eye_id;
  Laterality laterality = Laterality::Right;
  std::optional<double> vcdr_label;
  std::optional<bool> glaucoma_label;
};

enum class AugmentKind { HMirror, Elastic, Brightness, Cutout };

struct AugmentSpec {
  AugmentKind kind = AugmentKind::HMirror;
  double elastic_amplitude = 4.0;   // px, peak displacement
  double elastic_smoothing = 16.0;  // px, Gaussian sigma of the displacement field
  double brightness_delta = 0.0;    // added to each intensity, then clamped
  int cutout_side = 0;              // px

  static AugmentSpec hmirror();
  static AugmentSpec elastic(double amplitude = 4.0, double smoothing = 16.0);
  static AugmentSpec brightness(double delta);
  static AugmentSpec cutout(int side);
};

// Preprocessing chain ---------------------------------------------------------

RasterImage crop_to_square(const RasterImage& img);

/// Separable Gaussian blur, truncated at ceil(4 sigma), replicate borders.
RasterImage gaussian_blur(const RasterImage& img, double sigma);

/// clamp01(alpha * (img - blur(img, sigma)) + 0.5), per channel.
RasterImage enhance_local_contrast(const RasterImage& img, double sigma, double alpha);

struct PixelCoord {
  double x = 0.0;
  double y = 0.0;
};

/// Zeroes every pixel at distance >= radius from center.
RasterImage apply_roi_clip(const RasterImage& img, PixelCoord center, double radius);

/// Bilinear resampling with corner-aligned sample grids.
RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h);

RasterImage rescale_unit(const Raw8Image& raw);
Raw8Image quantize_8bit(const RasterImage& img);

// Augmentation ----------------------------------------------------------------

void validate(const AugmentSpec& spec, int width, int height);
RasterImage augment(const RasterImage& img, const AugmentSpec& spec, Rng& rng);

RasterImage hmirror(const RasterImage& img);

/// Bilinear sample of one channel; coordinates outside the frame read as 0.
double sample_bilinear_zero(const RasterImage& img, double x, double y, int c);

/// 1-D normalized Gaussian taps covering [-radius, radius], radius = ceil(4 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Single-plane separable Gaussian blur with replicate borders.
std::vector<double> blur_plane(std::span<const double> plane, int width, int height,
                               double sigma);

// File formats ------------------------------------------------------------------

Raw8Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Raw8Image& img);

/// Reads only the header of a binary PPM and returns {width, height}.
std::pair<int, int> read_ppm_size(const std::filesystem::path& path);

/// 16-bit binary graymap (P5, maxval 65535, big endian).
void write_pgm16(const std::filesystem::path& path, int width, int height,
                 std::span<const std::uint16_t> values);
std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& width, int& height);

/// 1-bit portable bitmap (P4); true pixels are written as black.
void write_pbm(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> bits);

Raw8Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raw8Image& img);

/// Loads a PPM or PNG (by extension) and rescales to [0,1].
RasterImage load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const RasterImage& img);

}  // namespace roar
