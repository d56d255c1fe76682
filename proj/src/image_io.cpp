// SPDX-License-Identifier: Apache-2.0

#include "gaslens/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "gaslens/errors.hpp"

namespace gaslens {

std::string encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw std::invalid_argument("pixel count does not match image dims");
  }
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space_and_comments();
    long value = 0;
    const auto start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > 1 << 20) throw InputError("PGM dimension too large");
      ++pos;
    }
    if (pos == start) throw InputError("malformed PGM header");
    return static_cast<int>(value);
  };

  if (bytes.size() < 2 || bytes.substr(0, 2) != "P5") throw InputError("not a binary PGM (P5)");
  pos = 2;
  GrayImage image;
  image.width = read_int();
  image.height = read_int();
  const int maxval = read_int();
  if (maxval <= 0 || maxval > 255) throw InputError("only 8-bit PGM is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw InputError("malformed PGM header");
  }
  ++pos;
  const auto count = static_cast<std::size_t>(image.width) * image.height;
  if (bytes.size() - pos < count) throw InputError("truncated PGM payload");
  image.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
  return image;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  write_text_file(path, encode_pgm(image));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_text_file(path));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

GrayImage heatmap_to_gray(const Heatmap& heatmap) {
  const auto& v = heatmap.values;
  GrayImage image;
  image.height = static_cast<int>(v.rows());
  image.width = static_cast<int>(v.cols());
  image.pixels.assign(static_cast<std::size_t>(v.size()), 0);
  if (v.size() == 0) return image;
  const double lo = v.minCoeff();
  const double hi = v.maxCoeff();
  if (!(hi > lo)) return image;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      const double scaled = std::round(255.0 * (v(r, c) - lo) / (hi - lo));
      image.pixels[r * v.cols() + c] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
    }
  }
  return image;
}

std::string format_g9(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

double round_g9(double value) { return std::strtod(format_g9(value).c_str(), nullptr); }

std::string heatmap_to_csv(const Heatmap& heatmap) {
  std::string out;
  const auto& v = heatmap.values;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (c) out += ',';
      out += format_g9(v(r, c));
    }
    out += '\n';
  }
  return out;
}

BinaryMask gray_to_mask(const GrayImage& image) {
  BinaryMask mask(image.height, image.width);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) mask(r, c) = image.pixels[r * image.width + c] > 127;
  }
  return mask;
}

GrayImage mask_to_gray(const BinaryMask& mask) {
  GrayImage image;
  image.height = static_cast<int>(mask.rows());
  image.width = static_cast<int>(mask.cols());
  image.pixels.resize(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      image.pixels[r * mask.cols() + c] = mask(r, c) ? 255 : 0;
    }
  }
  return image;
}

BinaryMask read_mask(const std::filesystem::path& path) { return gray_to_mask(read_pgm(path)); }

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  write_pgm(path, mask_to_gray(mask));
}

}  // namespace gaslens
