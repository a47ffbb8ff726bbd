#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>

#include <fmt/format.h>
#include <png.h>

#include "roar/error.hpp"
#include "roar/imaging.hpp"

namespace roar {

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      if (!token.empty()) break;
    } else {
      token.push_back(static_cast<char>(ch));
    }
    ch = in.get();
  }
  return token;
}

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 1;
};

PnmHeader read_header(std::istream& in, const std::filesystem::path& path, bool has_maxval) {
  PnmHeader h;
  h.magic = next_token(in);
  try {
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    if (has_maxval) h.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError(fmt::format("{}: malformed header", path.string()));
  }
  if (h.width < 1 || h.height < 1) {
    throw IoError(fmt::format("{}: invalid dimensions", path.string()));
  }
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

}  // namespace

Raw8Image read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_header(in, path, true);
  if (h.magic != "P6") throw IoError(fmt::format("{}: not a binary PPM (P6)", path.string()));
  if (h.maxval != 255) throw IoError(fmt::format("{}: only maxval 255 is supported", path.string()));
  Raw8Image img{h.width, h.height, std::vector<std::uint8_t>(static_cast<std::size_t>(h.width) * h.height * 3)};
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw IoError(fmt::format("{}: truncated pixel data", path.string()));
  }
  return img;
}

std::pair<int, int> read_ppm_size(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_header(in, path, true);
  if (h.magic != "P6") throw IoError(fmt::format("{}: not a binary PPM (P6)", path.string()));
  return {h.width, h.height};
}

void write_ppm(const std::filesystem::path& path, const Raw8Image& img) {
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void write_pgm16(const std::filesystem::path& path, int width, int height,
                 std::span<const std::uint16_t> values) {
  if (values.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("write_pgm16: value count does not match dimensions");
  }
  auto out = open_out(path);
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  for (std::uint16_t v : values) {
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    out.write(bytes, 2);
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& width, int& height) {
  auto in = open_in(path);
  const auto h = read_header(in, path, true);
  if (h.magic != "P5" || h.maxval != 65535) {
    throw IoError(fmt::format("{}: not a 16-bit PGM", path.string()));
  }
  width = h.width;
  height = h.height;
  std::vector<std::uint16_t> values(static_cast<std::size_t>(width) * height);
  for (auto& v : values) {
    unsigned char bytes[2];
    in.read(reinterpret_cast<char*>(bytes), 2);
    if (!in) throw IoError(fmt::format("{}: truncated pixel data", path.string()));
    v = static_cast<std::uint16_t>((bytes[0] << 8) | bytes[1]);
  }
  return values;
}

void write_pbm(const std::filesystem::path& path, int width, int height,
               std::span<const std::uint8_t> bits) {
  if (bits.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("write_pbm: bit count does not match dimensions");
  }
  auto out = open_out(path);
  out << "P4\n" << width << ' ' << height << '\n';
  const int row_bytes = (width + 7) / 8;
  std::vector<unsigned char> row(row_bytes);
  for (int y = 0; y < height; ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < width; ++x) {
      if (bits[static_cast<std::size_t>(y) * width + x]) row[x / 8] |= static_cast<unsigned char>(0x80 >> (x % 8));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
  }
}

Raw8Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError(fmt::format("{}: {}", path.string(), image.message));
  }
  image.format = PNG_FORMAT_RGB;
  Raw8Image img{static_cast<int>(image.width), static_cast<int>(image.height),
                std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
  if (!png_image_finish_read(&image, nullptr, img.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(fmt::format("{}: {}", path.string(), image.message));
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Raw8Image& img) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr)) {
    throw IoError(fmt::format("{}: {}", path.string(), image.message));
  }
}

RasterImage load_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return rescale_unit(read_png(path));
  return rescale_unit(read_ppm(path));
}

void save_image(const std::filesystem::path& path, const RasterImage& img) {
  const auto ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") {
    write_png(path, quantize_8bit(img));
  } else {
    write_ppm(path, quantize_8bit(img));
  }
}

}  // namespace roar
