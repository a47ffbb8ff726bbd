#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <filesystem>

#include "roar/error.hpp"
#include "roar/imaging.hpp"
#include "support.hpp"

using namespace roar;

TEST_SUITE("imaging") {

TEST_CASE("crop_to_square keeps the centered window") {
  RasterImage wide(1444, 1000, 0.25);
  const auto sq = crop_to_square(wide);
  CHECK(sq.width() == 1000);
  CHECK(sq.height() == 1000);

  RasterImage same(512, 512, 0.5);
  same.at(3, 4, 1) = 0.9;
  CHECK(crop_to_square(same) == same);

  RasterImage grid(6, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) grid.at(x, y, c) = (y * 6 + x) * 3 + c;
  for (double& v : grid.data()) v /= 72.0;
  const auto out = crop_to_square(grid);
  REQUIRE(out.width() == 4);
  REQUIRE(out.height() == 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) CHECK(out.at(x, y, c) == ((y * 6 + x + 1) * 3 + c) / 72.0);
}

TEST_CASE("crop_to_square is idempotent") {
  Rng rng(3);
  const auto img = test::random_image(9, 5, rng);
  const auto once = crop_to_square(img);
  CHECK(crop_to_square(once) == once);
}

TEST_CASE("enhance_local_contrast on constant images is exactly one half") {
  for (double c : {0.0, 0.13, 0.5, 0.77, 1.0}) {
    const auto out = enhance_local_contrast(RasterImage(23, 17, c), 2.5, 4.0);
    for (double v : out.data()) REQUIRE(v == 0.5);
  }
  Rng rng(5);
  const auto img = test::random_image(16, 16, rng);
  const auto flat = enhance_local_contrast(img, 3.0, 0.0);
  for (double v : flat.data()) CHECK(v == 0.5);
  CHECK_THROWS_AS(enhance_local_contrast(img, 0.0, 4.0), InvalidArgument);
  CHECK_THROWS_AS(enhance_local_contrast(img, -1.0, 4.0), InvalidArgument);
}

TEST_CASE("enhance_local_contrast matches a dense convolution around an impulse") {
  const int n = 41;
  const double sigma = 2.0;
  const double base = 0.2, peak = 0.3, alpha = 1.0;
  RasterImage img(n, n, base);
  for (int c = 0; c < 3; ++c) img.at(20, 20, c) = peak;
  const auto out = enhance_local_contrast(img, sigma, alpha);

  // Dense 2-D kernel on the same truncated support.
  const int r = static_cast<int>(std::ceil(4.0 * sigma));
  double norm = 0.0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) norm += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  for (int y = 20 - 6; y <= 20 + 6; ++y) {
    for (int x = 20 - 6; x <= 20 + 6; ++x) {
      double blurred = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = x + dx, sy = y + dy;
          const double v = (sx == 20 && sy == 20) ? peak : base;
          blurred += v * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / norm;
        }
      }
      const double pix = (x == 20 && y == 20) ? peak : base;
      const double expected = std::clamp(alpha * (pix - blurred) + 0.5, 0.0, 1.0);
      for (int c = 0; c < 3; ++c) REQUIRE(std::abs(out.at(x, y, c) - expected) <= 1e-6);
    }
  }
}

TEST_CASE("apply_roi_clip zeroes everything at or beyond the radius") {
  RasterImage img(64, 64, 0.7);
  const PixelCoord center{31.5, 31.5};
  const auto out = apply_roi_clip(img, center, 20.0);
  CHECK(out.at(31, 31, 0) == 0.7);
  const int x_far = static_cast<int>(std::lround(31.5 + 25.0));
  CHECK(out.at(x_far, 31, 1) == 0.0);
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      const double d = std::hypot(x - center.x, y - center.y);
      REQUIRE(out.at(x, y, 2) == (d >= 20.0 ? 0.0 : 0.7));
    }
  }
}

TEST_CASE("apply_roi_clip retained count is close to the disc area") {
  RasterImage img(512, 512, 1.0);
  const auto out = apply_roi_clip(img, {255.5, 255.5}, 100.0);
  std::size_t kept = 0;
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x) kept += out.at(x, y, 0) > 0.0;
  CHECK(std::abs(static_cast<double>(kept) - std::numbers::pi * 1e4) <= 400.0);
}

TEST_CASE("resize_bilinear") {
  Rng rng(9);
  const auto img = test::random_image(7, 5, rng);
  const auto same = resize_bilinear(img, 7, 5);
  for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(same.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-9));

  const auto c = resize_bilinear(RasterImage(9, 9, 0.375), 4, 13);
  for (double v : c.data()) CHECK(v == 0.375);

  RasterImage ramp(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int ch = 0; ch < 3; ++ch) ramp.at(x, y, ch) = (x + 4 * y) / 15.0;
  const auto small = resize_bilinear(ramp, 2, 2);
  // Corner-aligned: output (i,j) samples input (3i, 3j).
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      const double sx = 3.0 * x, sy = 3.0 * y;
      const double expected = (sx + 4.0 * sy) / 15.0;
      CHECK(small.at(x, y, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
  }

  const auto up = resize_bilinear(img, 19, 11);
  double lo = 1.0, hi = 0.0;
  for (double v : img.data()) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : up.data()) {
    CHECK(v >= lo);
    CHECK(v <= hi);
  }
}

TEST_CASE("rescale_unit and quantize_8bit") {
  Raw8Image raw{3, 1, {255, 0, 128, 255, 0, 128, 255, 0, 128}};
  const auto img = rescale_unit(raw);
  CHECK(img.at(0, 0, 0) == 1.0);
  CHECK(img.at(0, 0, 1) == 0.0);
  CHECK(img.at(0, 0, 2) == 128.0 / 255.0);
  const auto back = quantize_8bit(img);
  CHECK(back.data == raw.data);
}

TEST_CASE("augment: mirror, brightness, cutout, elastic") {
  Rng rng(11);
  const auto img = test::random_image(12, 9, rng);
  Rng a(1);
  CHECK(augment(augment(img, AugmentSpec::hmirror(), a), AugmentSpec::hmirror(), a) == img);
  const auto m = hmirror(img);
  CHECK(m.at(0, 3, 1) == img.at(11, 3, 1));

  RasterImage bright(2, 2, 0.95);
  Rng b(1);
  const auto brightened = augment(bright, AugmentSpec::brightness(0.1), b);
  for (double v : brightened.data()) CHECK(v == 1.0);
  CHECK_THROWS_AS(validate(AugmentSpec::brightness(1.5), 4, 4), InvalidArgument);

  RasterImage ones(20, 16, 1.0);
  for (int side : {1, 4, 7, 16}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng r(seed);
      const auto out = augment(ones, AugmentSpec::cutout(side), r);
      std::size_t zeroed = 0;
      for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 20; ++x) zeroed += out.at(x, y, 0) == 0.0;
      CHECK(zeroed == static_cast<std::size_t>(side * side));
    }
  }
  CHECK_THROWS_AS(validate(AugmentSpec::cutout(17), 20, 16), InvalidArgument);

  Rng e(4);
  const auto still = augment(img, AugmentSpec::elastic(0.0, 4.0), e);
  for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(still.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-9));
}

TEST_CASE("augment is reproducible for a fixed seed and stays in range") {
  Rng rng(21);
  const auto img = test::random_image(24, 24, rng);
  for (const auto& spec : {AugmentSpec::elastic(3.0, 5.0), AugmentSpec::brightness(-0.3), AugmentSpec::cutout(6)}) {
    Rng r1(99), r2(99);
    const auto o1 = augment(img, spec, r1);
    const auto o2 = augment(img, spec, r2);
    CHECK(o1 == o2);
    for (double v : o1.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("image files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "roar_imaging_test";
  std::filesystem::create_directories(dir);
  Rng rng(2);
  const auto img = rescale_unit(quantize_8bit(test::random_image(13, 7, rng)));
  save_image(dir / "a.ppm", img);
  save_image(dir / "a.png", img);
  CHECK(load_image(dir / "a.ppm") == img);
  CHECK(load_image(dir / "a.png") == img);
  CHECK(read_ppm_size(dir / "a.ppm") == std::pair{13, 7});
  std::vector<std::uint16_t> g{0, 1, 65535, 300};
  write_pgm16(dir / "g.pgm", 2, 2, g);
  int w = 0, h = 0;
  CHECK(read_pgm16(dir / "g.pgm", w, h) == g);
  CHECK_THROWS_AS(load_image(dir / "missing.ppm"), IoError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
