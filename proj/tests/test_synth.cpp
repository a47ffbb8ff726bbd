#include <doctest.h>

#include <cmath>
#include <memory>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "roar/error.hpp"
#include "roar/synth.hpp"
#include "support.hpp"

using namespace roar;

namespace {

SynthConfig clean_config(int size) {
  SynthConfig c;
  c.image_size = size;
  c.noise_sd = 0.0;
  c.texture_amplitude = 0.0;
  return c;
}

// Green channel levels of the flat disc rim and the cup.
constexpr double kRimGreen = 0.72;
constexpr double kCupGreen = 0.93;

// Cup and disc vertical diameters from the green profile through the disc
// center. Ramp pixels contribute their partial weight.
std::pair<double, double> profile_diameters(const RasterImage& img, const DiscLocation& disc) {
  const int x = static_cast<int>(std::lround(disc.cx));
  const int cy = static_cast<int>(std::lround(disc.cy));
  double cup = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    const double g = img.at(x, y, 1);
    if (g > kRimGreen + 1e-12) cup += (g - kRimGreen) / (kCupGreen - kRimGreen);
  }
  double disc_len = 0.0;
  for (int dir : {-1, 1}) {
    int y = cy;
    while (img.at(x, y + dir, 1) >= kRimGreen - 1e-12) y += dir;
    // y is the last plateau pixel; y + dir is the ramp pixel; y + 2 dir is background.
    const double g_ramp = img.at(x, y + dir, 1);
    const double g_bg = img.at(x, y + 2 * dir, 1);
    const double w = std::clamp((g_ramp - g_bg) / (kRimGreen - g_bg), 0.0, 1.0);
    disc_len += std::abs(y - cy) + 0.5 + w;
  }
  return {cup, disc_len};
}

double band_mean(const SynthRecord& rec, const SynthConfig& cfg) {
  const auto sectors = planted_band_sectors(cfg, cfg.band_inner + 0.02);
  const int s = rec.image.width();
  double sum = 0.0;
  int count = 0;
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      // right-eye frame
      const int xr = rec.meta.laterality == Laterality::Left ? s - 1 - x : x;
      const double cxr = rec.meta.laterality == Laterality::Left ? s - 1 - rec.disc.cx : rec.disc.cx;
      const double dx = xr - cxr, dy = y - rec.disc.cy;
      for (const auto& sec : sectors) {
        if (sec.contains(dx, dy, s) && std::hypot(x - (s - 1) / 2.0, y - (s - 1) / 2.0) < s / 2.0 - 1) {
          sum += rec.image.at(x, y, 1);
          ++count;
        }
      }
    }
  }
  return sum / count;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("dataset population structure") {
  SynthConfig cfg;
  cfg.n_patients = 10;
  cfg.images_per_eye = 2;
  cfg.image_size = 32;
  const auto data = generate_dataset(cfg);
  CHECK(data.records.size() == 40);
  CHECK(data.manifest.rows.size() == 40);
  std::set<std::string> eyes, patients, ids;
  for (const auto& r : data.manifest.rows) {
    eyes.insert(r.eye_id);
    patients.insert(r.patient_id);
    ids.insert(r.image_id());
    CHECK(r.eye_id.rfind(r.patient_id, 0) == 0);
    CHECK(r.vcdr.has_value());
    CHECK(r.glaucoma.has_value());
  }
  CHECK(eyes.size() == 20);
  CHECK(patients.size() == 10);
  CHECK(ids.size() == 40);
  CHECK_NOTHROW(validate_manifest(data.manifest));
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    CHECK(data.records[i].meta.patient_id == data.manifest.rows[i].patient_id);
    CHECK(*data.manifest.rows[i].vcdr == data.records[i].meta.vcdr_label);
  }
}

TEST_CASE("marginal label statistics") {
  SynthConfig cfg;
  cfg.n_patients = 1000;
  cfg.images_per_eye = 1;
  cfg.image_size = 16;
  const auto data = generate_dataset(cfg);
  REQUIRE(data.records.size() == 2000);
  double vcdr = 0.0, positives = 0.0;
  for (const auto& r : data.records) {
    vcdr += *r.meta.vcdr_label;
    positives += *r.meta.glaucoma_label ? 1.0 : 0.0;
    CHECK(*r.meta.glaucoma_label == (r.severity > cfg.glaucoma_threshold()));
    CHECK(*r.meta.vcdr_label == doctest::Approx(cfg.severity_to_vcdr(r.severity)));
  }
  CHECK(std::abs(vcdr / 2000.0 - 0.67) <= 0.02);
  CHECK(std::abs(positives / 2000.0 - 0.55) <= 0.04);
}

TEST_CASE("fully correlated eyes still terminate") {
  SynthConfig cfg;
  cfg.n_patients = 200;
  cfg.images_per_eye = 1;
  cfg.image_size = 16;
  cfg.eye_correlation = 1.0;
  cfg.vcdr_spread = 0.4;
  const auto data = generate_dataset(cfg);
  CHECK(data.records.size() == 400);
}

TEST_CASE("cup to disc ratio is recoverable from the vertical profile") {
  const auto cfg = clean_config(256);
  Rng rng(3);
  for (double severity : {0.0, 0.2, 0.45, 0.7, 1.0}) {
    for (auto side : {Laterality::Right, Laterality::Left}) {
      const auto rec = render_eye(severity, side, cfg, rng);
      const auto [cup, disc] = profile_diameters(rec.image, rec.disc);
      INFO("severity " << severity << " cup " << cup << " disc " << disc);
      CHECK(std::abs(cup / disc - *rec.meta.vcdr_label) <= 0.05);
      CHECK(std::abs(disc - 0.23 * 256) <= 1.5);
    }
  }
}

TEST_CASE("rendering is deterministic") {
  SynthConfig cfg;
  cfg.image_size = 48;
  Rng a(9), b(9);
  const auto ra = render_eye(0.4, Laterality::Left, cfg, a);
  const auto rb = render_eye(0.4, Laterality::Left, cfg, b);
  CHECK(ra.image.data().size() == rb.image.data().size());
  CHECK(std::equal(ra.image.data().begin(), ra.image.data().end(), rb.image.data().begin()));
  CHECK(ra.disc == rb.disc);
  cfg.n_patients = 5;
  const auto d1 = generate_dataset(cfg);
  const auto d2 = generate_dataset(cfg);
  CHECK(format_manifest(d1.manifest) == format_manifest(d2.manifest));
  for (std::size_t i = 0; i < d1.records.size(); ++i) {
    const auto x = d1.records[i].image.data();
    const auto y = d2.records[i].image.data();
    CHECK(std::equal(x.begin(), x.end(), y.begin()));
  }
}

TEST_CASE("zero peripheral strength makes the periphery independent of severity") {
  auto cfg = clean_config(64);
  cfg.noise_sd = 0.03;
  cfg.texture_amplitude = 0.06;
  cfg.peripheral_signal_strength = 0.0;
  Rng g(4);
  const auto geom = sample_eye_geometry(cfg, g);
  Rng r1(5), r2(5);
  const auto low = render_eye(0.05, Laterality::Right, geom, cfg, r1);
  const auto high = render_eye(0.95, Laterality::Right, geom, cfg, r2);
  const double disc_r = cfg.disc_fraction * 64 / 2.0;
  int compared = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (std::hypot(x - low.disc.cx, y - low.disc.cy) <= disc_r + 1.5) continue;
      for (int c = 0; c < 3; ++c) CHECK(low.image.at(x, y, c) == high.image.at(x, y, c));
      ++compared;
    }
  }
  CHECK(compared > 2000);
}

TEST_CASE("peripheral band intensity decreases with severity") {
  const auto cfg = clean_config(96);
  Rng g(6);
  const auto geom = sample_eye_geometry(cfg, g);
  for (auto side : {Laterality::Right, Laterality::Left}) {
    double prev = 1e9;
    for (double severity = 0.0; severity <= 1.0 + 1e-9; severity += 0.1) {
      Rng rng(1);
      const double m = band_mean(render_eye(severity, side, geom, cfg, rng), cfg);
      CHECK(m < prev);
      prev = m;
    }
  }
}

TEST_CASE("manifest disc centroid matches the rendered ellipse") {
  auto cfg = clean_config(128);
  cfg.n_patients = 6;
  cfg.images_per_eye = 2;
  const auto data = generate_dataset(cfg);
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& img = data.records[i].image;
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        if (img.at(x, y, 1) >= kRimGreen - 1e-9) {
          sx += x;
          sy += y;
          n += 1;
        }
      }
    }
    const auto& row = data.manifest.rows[i];
    CHECK(std::abs(sx / n - *row.disc_x) <= 1.0);
    CHECK(std::abs(sy / n - *row.disc_y) <= 1.0);
  }
}

TEST_CASE("written datasets round trip through the manifest") {
  SynthConfig cfg;
  cfg.n_patients = 2;
  cfg.image_size = 24;
  const auto data = generate_dataset(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "roar_synth_rt";
  std::filesystem::remove_all(dir);
  write_dataset(dir, data);
  const auto m = read_manifest(dir / "manifest.csv");
  REQUIRE(m.rows.size() == data.manifest.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(m.rows[i].image_path == data.manifest.rows[i].image_path);
    CHECK(*m.rows[i].vcdr == doctest::Approx(*data.manifest.rows[i].vcdr).epsilon(1e-9));
    CHECK(std::filesystem::exists(m.resolve(m.rows[i])));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("invalid configurations are rejected") {
  SynthConfig c;
  c.peripheral_signal_strength = 1.5;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.disc_fraction = 0.9;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  CHECK_THROWS_AS(render_eye(1.2, Laterality::Right, c, *std::make_unique<Rng>(1)), InvalidArgument);
}

}  // TEST_SUITE
