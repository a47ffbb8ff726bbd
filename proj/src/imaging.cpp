#include "roar/imaging.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "roar/error.hpp"

namespace roar {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// a + t (b - a), kept inside [min(a,b), max(a,b)] despite rounding.
double lerp_bounded(double a, double b, double t) {
  const double v = a + t * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

void require_valid(const RasterImage& img, const char* what) {
  if (img.width() < 1 || img.height() < 1) {
    throw InvalidArgument(fmt::format("{}: empty image", what));
  }
}

std::vector<double> extract_plane(const RasterImage& img, int c) {
  std::vector<double> plane(img.pixel_count());
  const auto data = img.data();
  for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = data[i * RasterImage::kChannels + c];
  return plane;
}

void store_plane(RasterImage& img, int c, std::span<const double> plane) {
  auto data = img.data();
  for (std::size_t i = 0; i < plane.size(); ++i) data[i * RasterImage::kChannels + c] = plane[i];
}

}  // namespace

RasterImage::RasterImage(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw InvalidArgument(fmt::format("RasterImage: invalid size {}x{}", width, height));
  }
  if (!(fill >= 0.0 && fill <= 1.0)) {
    throw InvalidArgument("RasterImage: fill outside [0,1]");
  }
  data_.assign(static_cast<std::size_t>(width) * height * kChannels, fill);
}

std::string to_string(Laterality side) { return side == Laterality::Left ? "L" : "R"; }

Laterality parse_laterality(const std::string& text) {
  if (text == "L" || text == "l" || text == "left" || text == "LEFT" || text == "OS") {
    return Laterality::Left;
  }
  if (text == "R" || text == "r" || text == "right" || text == "RIGHT" || text == "OD") {
    return Laterality::Right;
  }
  throw InvalidArgument(fmt::format("unknown laterality '{}'", text));
}

AugmentSpec AugmentSpec::hmirror() { return AugmentSpec{}; }

AugmentSpec AugmentSpec::elastic(double amplitude, double smoothing) {
  AugmentSpec s;
  s.kind = AugmentKind::Elastic;
  s.elastic_amplitude = amplitude;
  s.elastic_smoothing = smoothing;
  return s;
}

AugmentSpec AugmentSpec::brightness(double delta) {
  AugmentSpec s;
  s.kind = AugmentKind::Brightness;
  s.brightness_delta = delta;
  return s;
}

AugmentSpec AugmentSpec::cutout(int side) {
  AugmentSpec s;
  s.kind = AugmentKind::Cutout;
  s.cutout_side = side;
  return s;
}

RasterImage crop_to_square(const RasterImage& img) {
  require_valid(img, "crop_to_square");
  const int side = std::min(img.width(), img.height());
  if (img.width() == img.height()) return img;
  const int x0 = (img.width() - side) / 2;
  const int y0 = (img.height() - side) / 2;
  RasterImage out(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    }
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_kernel: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    taps[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += taps[i + radius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

std::vector<double> blur_plane(std::span<const double> plane, int width, int height,
                               double sigma) {
  const auto taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> tmp(plane.size());
  std::vector<double> out(plane.size());
  for (int y = 0; y < height; ++y) {
    const double* row = plane.data() + static_cast<std::size_t>(y) * width;
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[k + radius] * row[std::clamp(x + k, 0, width - 1)];
      }
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += taps[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, height - 1)) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  return out;
}

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
  require_valid(img, "gaussian_blur");
  RasterImage out(img.width(), img.height());
  for (int c = 0; c < RasterImage::kChannels; ++c) {
    const auto plane = extract_plane(img, c);
    store_plane(out, c, blur_plane(plane, img.width(), img.height(), sigma));
  }
  return out;
}

RasterImage enhance_local_contrast(const RasterImage& img, double sigma, double alpha) {
  require_valid(img, "enhance_local_contrast");
  if (!(sigma > 0.0)) throw InvalidArgument("enhance_local_contrast: sigma must be positive");
  RasterImage out(img.width(), img.height());
  for (int c = 0; c < RasterImage::kChannels; ++c) {
    // Offsetting by one reference pixel makes flat regions cancel exactly.
    auto plane = extract_plane(img, c);
    const double ref = plane.front();
    for (double& v : plane) v -= ref;
    const auto background = blur_plane(plane, img.width(), img.height(), sigma);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      plane[i] = clamp01(alpha * (plane[i] - background[i]) + 0.5);
    }
    store_plane(out, c, plane);
  }
  return out;
}

RasterImage apply_roi_clip(const RasterImage& img, PixelCoord center, double radius) {
  require_valid(img, "apply_roi_clip");
  if (!(radius > 0.0)) throw InvalidArgument("apply_roi_clip: radius must be positive");
  RasterImage out = img;
  const double r2 = radius * radius;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double dx = x - center.x;
      const double dy = y - center.y;
      if (dx * dx + dy * dy >= r2) {
        for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = 0.0;
      }
    }
  }
  return out;
}

RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h) {
  require_valid(img, "resize_bilinear");
  if (out_w < 1 || out_h < 1) throw InvalidArgument("resize_bilinear: output size must be >= 1");
  if (out_w == img.width() && out_h == img.height()) return img;
  const auto coord = [](int i, int out_n, int in_n) {
    if (out_n == 1) return (in_n - 1) / 2.0;
    return static_cast<double>(i) * (in_n - 1) / (out_n - 1);
  };
  RasterImage out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const double sy = coord(y, out_h, img.height());
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double sx = coord(x, out_w, img.width());
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = sx - x0;
      for (int c = 0; c < RasterImage::kChannels; ++c) {
        const double top = lerp_bounded(img.at(x0, y0, c), img.at(x1, y0, c), tx);
        const double bottom = lerp_bounded(img.at(x0, y1, c), img.at(x1, y1, c), tx);
        out.at(x, y, c) = clamp01(lerp_bounded(top, bottom, ty));
      }
    }
  }
  return out;
}

RasterImage rescale_unit(const Raw8Image& raw) {
  const std::size_t expected = static_cast<std::size_t>(raw.width) * raw.height * 3;
  if (raw.width < 1 || raw.height < 1 || raw.data.size() != expected) {
    throw InvalidArgument("rescale_unit: buffer size does not match dimensions");
  }
  RasterImage out(raw.width, raw.height);
  auto data = out.data();
  for (std::size_t i = 0; i < expected; ++i) data[i] = raw.data[i] / 255.0;
  return out;
}

Raw8Image quantize_8bit(const RasterImage& img) {
  Raw8Image raw{img.width(), img.height(), std::vector<std::uint8_t>(img.data().size())};
  const auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    raw.data[i] = static_cast<std::uint8_t>(std::lround(clamp01(data[i]) * 255.0));
  }
  return raw;
}

void validate(const AugmentSpec& spec, int width, int height) {
  switch (spec.kind) {
    case AugmentKind::HMirror:
      return;
    case AugmentKind::Brightness:
      if (!(spec.brightness_delta >= -1.0 && spec.brightness_delta <= 1.0)) {
        throw InvalidArgument("augment: brightness delta outside [-1,1]");
      }
      return;
    case AugmentKind::Cutout:
      if (spec.cutout_side < 0 || spec.cutout_side > std::min(width, height)) {
        throw InvalidArgument("augment: cutout side exceeds image size");
      }
      return;
    case AugmentKind::Elastic:
      if (!(spec.elastic_amplitude >= 0.0) || !(spec.elastic_smoothing > 0.0)) {
        throw InvalidArgument("augment: elastic amplitude must be >= 0 and smoothing > 0");
      }
      return;
  }
}

RasterImage hmirror(const RasterImage& img) {
  RasterImage out = img;
  const int w = img.width();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = img.at(w - 1 - x, y, c);
    }
  }
  return out;
}

double sample_bilinear_zero(const RasterImage& img, double x, double y, int c) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double tx = x - x0;
  const double ty = y - y0;
  const auto px = [&](int xi, int yi) {
    if (xi < 0 || yi < 0 || xi >= img.width() || yi >= img.height()) return 0.0;
    return img.at(xi, yi, c);
  };
  const double top = px(x0, y0) * (1.0 - tx) + px(x0 + 1, y0) * tx;
  const double bottom = px(x0, y0 + 1) * (1.0 - tx) + px(x0 + 1, y0 + 1) * tx;
  return top * (1.0 - ty) + bottom * ty;
}

RasterImage augment(const RasterImage& img, const AugmentSpec& spec, Rng& rng) {
  require_valid(img, "augment");
  validate(spec, img.width(), img.height());
  switch (spec.kind) {
    case AugmentKind::HMirror:
      return hmirror(img);
    case AugmentKind::Brightness: {
      RasterImage out = img;
      for (double& v : out.data()) v = clamp01(v + spec.brightness_delta);
      return out;
    }
    case AugmentKind::Cutout: {
      RasterImage out = img;
      const int s = spec.cutout_side;
      if (s == 0) return out;
      std::uniform_int_distribution<int> px(0, img.width() - s);
      std::uniform_int_distribution<int> py(0, img.height() - s);
      const int x0 = px(rng);
      const int y0 = py(rng);
      for (int y = y0; y < y0 + s; ++y) {
        for (int x = x0; x < x0 + s; ++x) {
          for (int c = 0; c < RasterImage::kChannels; ++c) out.at(x, y, c) = 0.0;
        }
      }
      return out;
    }
    case AugmentKind::Elastic: {
      const int w = img.width();
      const int h = img.height();
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      std::vector<double> dx(img.pixel_count());
      std::vector<double> dy(img.pixel_count());
      for (double& v : dx) v = unit(rng);
      for (double& v : dy) v = unit(rng);
      if (spec.elastic_amplitude == 0.0) return img;
      dx = blur_plane(dx, w, h, spec.elastic_smoothing);
      dy = blur_plane(dy, w, h, spec.elastic_smoothing);
      double peak = 0.0;
      for (std::size_t i = 0; i < dx.size(); ++i) {
        peak = std::max({peak, std::abs(dx[i]), std::abs(dy[i])});
      }
      const double scale = peak > 0.0 ? spec.elastic_amplitude / peak : 0.0;
      RasterImage out(w, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const double sx = x + scale * dx[i];
          const double sy = y + scale * dy[i];
          for (int c = 0; c < RasterImage::kChannels; ++c) {
            out.at(x, y, c) = clamp01(sample_bilinear_zero(img, sx, sy, c));
          }
        }
      }
      return out;
    }
  }
  return img;
}

}  // namespace roar
