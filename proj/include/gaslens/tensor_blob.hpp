// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gaslens {

// On-disk layout, all little-endian:
//   "ATND" | version u8 | dtype u8 (0 = f32) | ndim u32 | dims u64 x ndim
//   | payload f32 x prod(dims), row-major
inline constexpr char kBlobMagic[4] = {'A', 'T', 'N', 'D'};
inline constexpr std::uint8_t kBlobVersion = 1;
inline constexpr std::uint8_t kBlobDtypeF32 = 0;

struct TensorBlob {
  std::vector<std::uint64_t> dims;
  std::vector<float> values;

  std::uint64_t element_count() const;
  friend bool operator==(const TensorBlob&, const TensorBlob&) = default;
};

std::size_t blob_header_size(std::size_t ndim);

std::string encode_blob(std::span<const std::uint64_t> dims, std::span<const float> values);
TensorBlob decode_blob(std::string_view bytes);

void write_blob(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                std::span<const float> values);
TensorBlob read_blob(const std::filesystem::path& path);

/// Bitwise comparison; distinguishes -0.0f from 0.0f and NaN payloads.
bool bit_equal(std::span<const float> a, std::span<const float> b);

}  // namespace gaslens
