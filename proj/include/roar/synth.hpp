#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "roar/cropping.hpp"
#include "roar/imaging.hpp"
#include "roar/manifest.hpp"
#include "roar/saliency.hpp"

namespace roar {

/// Disc-centered synthetic fundus generator. The cup diameter encodes VCDR
/// and two striated arcuate bands in the supero- and inferotemporal
/// peripapillary region lose contrast with severity.
struct SynthConfig {
  int image_size = 64;
  int n_patients = 100;
  int images_per_eye = 2;

  double disc_fraction = 0.23;  // vertical disc diameter / image height
  double disc_aspect = 0.9;     // horizontal / vertical disc diameter
  double disc_jitter = 0.03;    // max centroid offset from frame center, fraction of size
  double image_jitter_px = 1.0; // extra per-image shift for repeated captures of one eye

  double vcdr_mean = 0.67;
  double vcdr_spread = 0.12;
  double vcdr_min = 0.3;
  double vcdr_max = 0.95;
  double eye_correlation = 0.8;   // correlation of latent severity between the two eyes
  double glaucoma_rate = 0.55;    // eyes above the (1 - rate) severity quantile are positive

  double peripheral_signal_strength = 0.8;
  double band_contrast = 0.18;
  double band_center_deg = 40.0;     // angular distance of each band from the temporal axis
  double band_half_width_deg = 24.0;
  double band_inner = 0.13;          // radial extent from the disc center, fraction of size
  double band_outer = 0.47;
  double stripe_period_deg = 12.0;

  double texture_amplitude = 0.06;
  double noise_sd = 0.02;
  std::uint64_t seed = 7;

  void validate() const;
  /// Latent severity threshold above which an eye is labelled glaucomatous.
  double glaucoma_threshold() const;
  double severity_to_vcdr(double severity) const;
  double vcdr_to_severity(double vcdr) const;
};

/// Per-eye geometry shared by repeated captures.
struct EyeGeometry {
  double disc_dx = 0.0;  // offset of the disc from the frame center, canonical frame
  double disc_dy = 0.0;
  double stripe_phase = 0.0;
  std::uint64_t texture_seed = 0;
};

struct SynthRecord {
  RasterImage image;
  ImageMeta meta;
  DiscLocation disc;
  double severity = 0.0;
};

EyeGeometry sample_eye_geometry(const SynthConfig& config, Rng& rng);

/// Renders one capture. Labels are derived from `severity` and the config.
SynthRecord render_eye(double severity, Laterality laterality, const SynthConfig& config, Rng& rng);
SynthRecord render_eye(double severity, Laterality laterality, const EyeGeometry& geometry,
                       const SynthConfig& config, Rng& rng);

struct SynthDataset {
  std::vector<SynthRecord> records;
  Manifest manifest;  // image_path = "<image_id>.ppm"
};

/// n_patients x 2 eyes x images_per_eye captures.
SynthDataset generate_dataset(const SynthConfig& config);

/// Writes every image as PPM plus manifest.csv into `dir`.
void write_dataset(const std::filesystem::path& dir, const SynthDataset& data);

/// Sectors covering the planted bands (right-eye frame, radii as fractions
/// of width, starting at `inner`).
std::vector<SectorSpec> planted_band_sectors(const SynthConfig& config, double inner);

}  // namespace roar
