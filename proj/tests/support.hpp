#pragma once

#include <random>

#include "roar/imaging.hpp"

namespace roar::test {

inline RasterImage random_image(int w, int h, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RasterImage img(w, h);
  for (double& v : img.data()) v = u(rng);
  return img;
}

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace roar::test
