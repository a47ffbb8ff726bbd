#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gradcheck.hpp"
#include "roar/error.hpp"
#include "roar/saliency.hpp"
#include "support.hpp"

using namespace roar;

namespace {

SaliencyMap random_map(int w, int h, Rng& rng) {
  SaliencyMap m(w, h);
  for (double& v : m.values) v = test::uniform(rng, 0.0, 1.0);
  return m;
}

double logit_of(const Network& net, const RasterImage& img) {
  return net.forward_logits(to_batch(std::span<const RasterImage>(&img, 1)))[0];
}

}  // namespace

TEST_SUITE("saliency") {

TEST_CASE("all-zero network gives an all-zero map") {
  NetworkConfig cfg;
  cfg.input_size = 16;
  Network net(cfg, 3);
  for (auto& p : net.parameters())
    for (double& v : p.values()) v = 0.0;
  Rng rng(1);
  const auto map = saliency_map(net, test::random_image(16, 16, rng));
  CHECK(map.width == 16);
  CHECK(map.height == 16);
  for (double v : map.values) CHECK(v == 0.0);
}

TEST_CASE("linear model saliency is the channel-wise max of |w| for any input") {
  const int w = 7, h = 5;
  GraphSpec g{3, h, w, {LayerSpec::flatten(), LayerSpec::dense(1)}, HeadKind::SigmoidBinary};
  Network net(g, 4);
  const auto& weights = net.parameters()[0];
  Rng rng(2);
  const auto a = saliency_map(net, test::random_image(w, h, rng));
  const auto b = saliency_map(net, test::random_image(w, h, rng));
  CHECK(a == b);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double expected = 0.0;
      for (int c = 0; c < 3; ++c) expected = std::max(expected, std::abs(weights[(c * h + y) * w + x]));
      CHECK(a.at(x, y) == expected);
    }
  }
}

TEST_CASE("saliency matches finite differences of the logit") {
  NetworkConfig cfg;
  cfg.input_size = 16;
  cfg.stages = {{4, 3, 2}};
  Network net(cfg, 12);
  Rng rng(9);
  const auto img = test::random_image(16, 16, rng);
  const auto map = saliency_map(net, img);
  const double hstep = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const int x = test::uniform_int(rng, 0, 15);
    const int y = test::uniform_int(rng, 0, 15);
    double fd_max = 0.0;
    for (int c = 0; c < 3; ++c) {
      auto up = img, down = img;
      up.at(x, y, c) += hstep;
      down.at(x, y, c) -= hstep;
      fd_max = std::max(fd_max, std::abs((logit_of(net, up) - logit_of(net, down)) / (2 * hstep)));
    }
    CHECK(std::abs(map.at(x, y) - fd_max) <= 1e-4);
  }
}

TEST_CASE("batched saliency equals per-image saliency") {
  NetworkConfig cfg;
  cfg.input_size = 16;
  Network net(cfg, 5);
  Rng rng(4);
  std::vector<RasterImage> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back(test::random_image(16, 16, rng));
  const auto maps = saliency_maps(net, imgs, 2);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    const auto single = saliency_map(net, imgs[i]);
    for (std::size_t p = 0; p < single.values.size(); ++p)
      CHECK(std::abs(single.values[p] - maps[i].values[p]) <= 1e-12);
    for (double v : single.values) CHECK(v >= 0.0);
  }
}

TEST_CASE("alignment and shifting") {
  Rng rng(5);
  const auto m = random_map(30, 20, rng);
  CHECK(align_map(m, {12.0, 7.0, {}}, {12.0, 7.0}) == m);
  CHECK(align_map(m, {12.2, 6.8, {}}, {12.0, 7.0}) == m);

  const auto s = shift_map(m, 10, 0);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 30; ++x) {
      if (x + 10 < 30) CHECK(s.at(x + 10, y) == m.at(x, y));
      if (x < 10) CHECK(s.at(x, y) == 0.0);
    }
  }
  CHECK(align_map(m, {5.0, 10.0, {}}, {15.0, 10.0}) == s);

  const int dx = -4, dy = 6;
  const auto moved = shift_map(m, dx, dy);
  double retained = 0.0;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 30; ++x)
      if (x + dx >= 0 && x + dx < 30 && y + dy >= 0 && y + dy < 20) retained += m.at(x, y);
  CHECK(moved.total() == doctest::Approx(retained).epsilon(1e-12));

  const auto back = shift_map(moved, -dx, -dy);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 30; ++x) {
      const bool stayed = x + dx >= 0 && x + dx < 30 && y + dy >= 0 && y + dy < 20;
      CHECK(back.at(x, y) == (stayed ? m.at(x, y) : 0.0));
    }
  }
  CHECK_THROWS_AS(align_map(m, {31.0, 3.0, {}}, {15.0, 10.0}), InvalidArgument);
}

TEST_CASE("left-eye mirroring") {
  SaliencyMap m(2, 2);
  m.values = {1, 2, 3, 4};
  CHECK(mirror_left(m, Laterality::Right) == m);
  CHECK(mirror_left(m, Laterality::Left).values == std::vector<double>{2, 1, 4, 3});
  Rng rng(6);
  const auto r = random_map(9, 4, rng);
  CHECK(mirror_left(mirror_left(r, Laterality::Left), Laterality::Left) == r);
}

TEST_CASE("averaging maps") {
  Rng rng(7);
  const auto a = random_map(6, 5, rng);
  const auto b = random_map(6, 5, rng);
  const auto c = random_map(6, 5, rng);
  CHECK(average_maps(std::vector{a}) == a);
  const auto ab = average_maps(std::vector{a, b});
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(ab.values[i] == doctest::Approx((a.values[i] + b.values[i]) / 2));
  const auto copies = average_maps(std::vector<SaliencyMap>(13, c));
  for (std::size_t i = 0; i < c.values.size(); ++i) CHECK(std::abs(copies.values[i] - c.values[i]) <= 1e-12);
  const auto abc = average_maps(std::vector{a, b, c});
  const auto cab = average_maps(std::vector{c, a, b});
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(std::abs(abc.values[i] - cab.values[i]) <= 1e-12);
    CHECK(abc.values[i] >= 0.0);
  }
  CHECK_THROWS_AS(average_maps(std::vector<SaliencyMap>{}), InvalidArgument);
  CHECK_THROWS_AS(average_maps(std::vector{a, SaliencyMap(5, 5)}), ShapeError);
}

TEST_CASE("normalize_mass") {
  Rng rng(8);
  const auto m = random_map(8, 8, rng);
  CHECK(normalize_mass(m).total() == doctest::Approx(1.0).epsilon(1e-12));
  const SaliencyMap z(4, 4);
  CHECK(normalize_mass(z) == z);
}

TEST_CASE("sector angle convention") {
  CHECK(sector_angle(-1.0, 0.0) == doctest::Approx(0.0));
  CHECK(sector_angle(0.0, -1.0) == doctest::Approx(90.0));
  CHECK(sector_angle(1.0, 0.0) == doctest::Approx(180.0));
  CHECK(sector_angle(0.0, 1.0) == doctest::Approx(270.0));
  SectorSpec wrap{"wrap", 0.0, 0.5, 300.0, 30.0};
  CHECK(wrap.contains(-5.0, 0.0, 64));
  CHECK(wrap.contains(-5.0, 1.0, 64));
  CHECK_FALSE(wrap.contains(5.0, 0.0, 64));
  CHECK_THROWS_AS((SectorSpec{"bad", 0.3, 0.2, 0.0, 90.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SectorSpec{"bad", 0.0, 0.2, 360.0, 20.0}.validate()), InvalidArgument);
  CHECK_NOTHROW((SectorSpec{"edge", 0.0, 0.2, 270.0, 360.0}.validate()));
}

TEST_CASE("sector mass") {
  const int n = 101;
  const PixelCoord center{50.0, 50.0};
  SaliencyMap uniform(n, n, 1.0);
  const auto quads = quadrant_sectors(0.0, 2.0);
  double sum = 0.0;
  for (const auto& q : quads) {
    const double m = sector_mass(uniform, q, center);
    CHECK(m == doctest::Approx(0.25).epsilon(0.03));
    CHECK(m == doctest::Approx(sector_area_share(n, n, q, center)).epsilon(1e-12));
    sum += m;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  SaliencyMap spot(n, n);
  spot.at(20, 30) = 3.0;
  spot.at(25, 35) = 1.0;
  const SectorSpec st = quads[0];
  CHECK(sector_mass(spot, st, center) == 1.0);

  // Gaussian blob against a direct pixel sum.
  SaliencyMap blob(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) blob.at(x, y) = std::exp(-((x - 30.0) * (x - 30.0) + (y - 30.0) * (y - 30.0)) / 50.0);
  const SectorSpec ring{"ring", 0.1, 0.35, 20.0, 80.0};
  double inside = 0.0, total = 0.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double dx = x - 50.0, dy = y - 50.0;
      const double r = std::hypot(dx, dy);
      double a = std::atan2(-dy, -dx) * 180.0 / std::numbers::pi;
      if (a < 0) a += 360.0;
      total += blob.at(x, y);
      if (r >= 0.1 * n && r < 0.35 * n && a >= 20.0 && a < 80.0) inside += blob.at(x, y);
    }
  }
  CHECK(std::abs(sector_mass(blob, ring, center) - inside / total) <= 1e-12);
  CHECK_THROWS_AS(sector_mass(SaliencyMap(8, 8), st, {4, 4}), UndefinedMetric);
}

}  // TEST_SUITE
