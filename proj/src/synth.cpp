#include "roar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Linear 1-px ramp from 0 outside to 1 inside given a signed distance in px.
double edge_weight(double signed_px) { return std::clamp(0.5 + signed_px, 0.0, 1.0); }

double angular_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

constexpr double kBackground[3] = {0.62, 0.32, 0.16};
constexpr double kDisc[3] = {0.92, 0.72, 0.48};
constexpr double kCup[3] = {1.0, 0.93, 0.78};
constexpr double kBandTint[3] = {1.0, 0.75, 0.45};

std::vector<double> texture_field(int size, std::uint64_t seed, double amplitude) {
  std::vector<double> field(static_cast<std::size_t>(size) * size, 0.0);
  if (amplitude == 0.0) return field;
  Rng rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (double& v : field) v = unit(rng);
  field = blur_plane(field, size, size, std::max(1.0, size / 16.0));
  double peak = 0.0;
  for (double v : field) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : field) v *= amplitude / peak;
  }
  return field;
}

}  // namespace

void SynthConfig::validate() const {
  if (image_size < 16) throw InvalidArgument("synth: image_size must be >= 16");
  if (n_patients < 1) throw InvalidArgument("synth: n_patients must be >= 1");
  if (images_per_eye < 1) throw InvalidArgument("synth: images_per_eye must be >= 1");
  if (!(disc_fraction > 0.0 && disc_fraction < 0.8)) throw InvalidArgument("synth: disc_fraction must lie in (0,0.8)");
  if (!(disc_aspect > 0.0 && disc_aspect <= 1.5)) throw InvalidArgument("synth: disc_aspect must lie in (0,1.5]");
  if (!(disc_jitter >= 0.0) || disc_fraction / 2.0 + disc_jitter >= 0.5) {
    throw InvalidArgument("synth: disc does not fit inside the frame");
  }
  if (!(vcdr_min >= 0.0 && vcdr_min < vcdr_max && vcdr_max <= 1.0)) throw InvalidArgument("synth: invalid vcdr range");
  if (!(vcdr_spread > 0.0)) throw InvalidArgument("synth: vcdr_spread must be positive");
  if (!(eye_correlation >= 0.0 && eye_correlation <= 1.0)) throw InvalidArgument("synth: eye_correlation outside [0,1]");
  if (!(glaucoma_rate > 0.0 && glaucoma_rate < 1.0)) throw InvalidArgument("synth: glaucoma_rate must lie in (0,1)");
  if (!(peripheral_signal_strength >= 0.0 && peripheral_signal_strength <= 1.0)) {
    throw InvalidArgument("synth: peripheral_signal_strength outside [0,1]");
  }
  if (!(band_contrast >= 0.0 && band_contrast <= 1.0)) throw InvalidArgument("synth: band_contrast outside [0,1]");
  if (!(band_inner >= 0.0 && band_inner < band_outer && band_outer <= 0.5)) throw InvalidArgument("synth: invalid band radii");
  if (!(noise_sd >= 0.0) || !(texture_amplitude >= 0.0)) throw InvalidArgument("synth: noise must be >= 0");
}

double SynthConfig::severity_to_vcdr(double severity) const { return vcdr_min + (vcdr_max - vcdr_min) * severity; }

double SynthConfig::vcdr_to_severity(double vcdr) const { return (vcdr - vcdr_min) / (vcdr_max - vcdr_min); }

double SynthConfig::glaucoma_threshold() const {
  // (1 - rate) quantile of the truncated normal VCDR marginal, by bisection.
  const double a = normal_cdf((vcdr_min - vcdr_mean) / vcdr_spread);
  const double b = normal_cdf((vcdr_max - vcdr_mean) / vcdr_spread);
  const double target = 1.0 - glaucoma_rate;
  double lo = vcdr_min;
  double hi = vcdr_max;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double f = (normal_cdf((mid - vcdr_mean) / vcdr_spread) - a) / (b - a);
    (f < target ? lo : hi) = mid;
  }
  return vcdr_to_severity(0.5 * (lo + hi));
}

EyeGeometry sample_eye_geometry(const SynthConfig& config, Rng& rng) {
  std::uniform_real_distribution<double> jitter(-config.disc_jitter, config.disc_jitter);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  EyeGeometry g;
  g.disc_dx = jitter(rng) * config.image_size;
  g.disc_dy = jitter(rng) * config.image_size;
  g.stripe_phase = phase(rng);
  g.texture_seed = rng();
  return g;
}

SynthRecord render_eye(double severity, Laterality laterality, const SynthConfig& config, Rng& rng) {
  const EyeGeometry g = sample_eye_geometry(config, rng);
  return render_eye(severity, laterality, g, config, rng);
}

SynthRecord render_eye(double severity, Laterality laterality, const EyeGeometry& geometry,
                       const SynthConfig& config, Rng& rng) {
  config.validate();
  if (!(severity >= 0.0 && severity <= 1.0)) throw InvalidArgument("render_eye: severity outside [0,1]");
  const int s = config.image_size;
  const double center = (s - 1) / 2.0;
  const double roi = s / 2.0;

  std::uniform_real_distribution<double> shift(-config.image_jitter_px, config.image_jitter_px);
  const double cx = center + geometry.disc_dx + (config.image_jitter_px > 0 ? shift(rng) : 0.0);
  const double cy = center + geometry.disc_dy + (config.image_jitter_px > 0 ? shift(rng) : 0.0);

  const double vcdr = config.severity_to_vcdr(severity);
  const double disc_ry = config.disc_fraction * s / 2.0;
  const double disc_rx = disc_ry * config.disc_aspect;
  const double cup_ry = disc_ry * vcdr;
  const double cup_rx = disc_rx * vcdr;
  const double band_gain = config.band_contrast * (1.0 - config.peripheral_signal_strength * severity);
  const double band_in = config.band_inner * s;
  const double band_out = config.band_outer * s;
  const double centers[2] = {config.band_center_deg, 360.0 - config.band_center_deg};

  const auto texture = texture_field(s, geometry.texture_seed, config.texture_amplitude);
  std::normal_distribution<double> noise(0.0, config.noise_sd);

  RasterImage img(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double rx = x - center;
      const double ry = y - center;
      const double r_roi = std::sqrt(rx * rx + ry * ry);
      if (r_roi >= roi) continue;

      const double illum = (1.0 - 0.3 * (r_roi / roi) * (r_roi / roi)) *
                           (1.0 + texture[static_cast<std::size_t>(y) * s + x]);
      double px[3];
      for (int c = 0; c < 3; ++c) px[c] = kBackground[c] * illum;

      const double dx = x - cx;
      const double dy = y - cy;
      const double d = std::sqrt(dx * dx + dy * dy);
      if (band_gain > 0.0 && d > band_in && d < band_out) {
        const double angle = sector_angle(dx, dy);
        double angular = 0.0;
        for (double c0 : centers) {
          const double delta = angular_distance(angle, c0);
          if (delta < config.band_half_width_deg) {
            const double t = std::cos(0.5 * std::numbers::pi * delta / config.band_half_width_deg);
            angular = std::max(angular, t * t);
          }
        }
        if (angular > 0.0) {
          const double radial = std::clamp((d - band_in) / 2.0, 0.0, 1.0) * std::clamp((band_out - d) / 2.0, 0.0, 1.0);
          const double stripe =
              0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * angle / config.stripe_period_deg + geometry.stripe_phase);
          const double v = band_gain * angular * radial * stripe;
          for (int c = 0; c < 3; ++c) px[c] += v * kBandTint[c];
        }
      }

      const double e_disc = std::sqrt((dx / disc_rx) * (dx / disc_rx) + (dy / disc_ry) * (dy / disc_ry));
      const double w_disc = edge_weight((1.0 - e_disc) * disc_ry);
      if (w_disc > 0.0) {
        for (int c = 0; c < 3; ++c) px[c] += w_disc * (kDisc[c] - px[c]);
        const double e_cup = std::sqrt((dx / cup_rx) * (dx / cup_rx) + (dy / cup_ry) * (dy / cup_ry));
        const double w_cup = edge_weight((1.0 - e_cup) * cup_ry);
        if (w_cup > 0.0) {
          for (int c = 0; c < 3; ++c) px[c] += w_cup * (kCup[c] - px[c]);
        }
      }

      for (int c = 0; c < 3; ++c) {
        const double n = config.noise_sd > 0.0 ? noise(rng) : 0.0;
        img.at(x, y, c) = std::clamp(px[c] + n, 0.0, 1.0);
      }
    }
  }

  SynthRecord rec;
  rec.severity = severity;
  rec.meta.laterality = laterality;
  rec.meta.vcdr_label = vcdr;
  rec.meta.glaucoma_label = severity > config.glaucoma_threshold();
  rec.disc = DiscLocation{cx, cy, 2.0 * disc_ry};
  if (laterality == Laterality::Left) {
    rec.image = hmirror(img);
    rec.disc.cx = (s - 1) - cx;
  } else {
    rec.image = std::move(img);
  }
  return rec;
}

SynthDataset generate_dataset(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const double rho = config.eye_correlation;
  const double rest = std::sqrt(1.0 - rho * rho);

  SynthDataset out;
  for (int p = 0; p < config.n_patients; ++p) {
    const std::string patient = fmt::format("p{:05d}", p);
    double z_patient = unit(rng);
    for (const Laterality side : {Laterality::Right, Laterality::Left}) {
      double vcdr = 0.0;
      for (int attempt = 0;; ++attempt) {
        // Fully correlated eyes leave nothing per-eye to redraw.
        if (attempt > 0 && rest < 1e-12) z_patient = unit(rng);
        vcdr = config.vcdr_mean + config.vcdr_spread * (rho * z_patient + rest * unit(rng));
        if (vcdr >= config.vcdr_min && vcdr <= config.vcdr_max) break;
      }
      const double severity = std::clamp(config.vcdr_to_severity(vcdr), 0.0, 1.0);
      const std::string eye = fmt::format("{}_{}", patient, to_string(side));
      const EyeGeometry geom = sample_eye_geometry(config, rng);
      for (int k = 0; k < config.images_per_eye; ++k) {
        SynthRecord rec = render_eye(severity, side, geom, config, rng);
        rec.meta.patient_id = patient;
        rec.meta.eye_id = eye;
        rec.meta.image_id = fmt::format("{}_{}", eye, k);
        ManifestRow row;
        row.image_path = rec.meta.image_id + ".ppm";
        row.patient_id = patient;
        row.eye_id = eye;
        row.laterality = side;
        row.vcdr = rec.meta.vcdr_label;
        row.glaucoma = rec.meta.glaucoma_label;
        row.disc_x = rec.disc.cx;
        row.disc_y = rec.disc.cy;
        out.manifest.rows.push_back(std::move(row));
        out.records.push_back(std::move(rec));
      }
    }
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    write_ppm(dir / data.manifest.rows[i].image_path, quantize_8bit(data.records[i].image));
  }
  Manifest m = data.manifest;
  m.base_dir = dir;
  write_manifest(dir / "manifest.csv", m);
}

std::vector<SectorSpec> planted_band_sectors(const SynthConfig& config, double inner) {
  const double lo = config.band_center_deg - config.band_half_width_deg;
  const double hi = config.band_center_deg + config.band_half_width_deg;
  return {{"planted_superotemporal", inner, config.band_outer, std::max(0.0, lo), hi},
          {"planted_inferotemporal", inner, config.band_outer, 360.0 - hi, std::min(360.0, 360.0 - lo)}};
}

}  // namespace roar
