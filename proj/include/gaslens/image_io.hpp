// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gaslens/types.hpp"

namespace gaslens {

/// Raw 8-bit grayscale image, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::string_view bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// v' = round(255 (v - min) / (max - min)); a constant map becomes all zeros.
GrayImage heatmap_to_gray(const Heatmap& heatmap);

/// Rows of comma-separated values at 9 significant digits, LF-terminated.
std::string heatmap_to_csv(const Heatmap& heatmap);

/// Pixels above 127 are foreground.
BinaryMask gray_to_mask(const GrayImage& image);
GrayImage mask_to_gray(const BinaryMask& mask);

BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// "%.9g" formatting used for every float the tools print.
std::string format_g9(double value);
/// value rounded through its 9-significant-digit decimal form.
double round_g9(double value);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace gaslens
