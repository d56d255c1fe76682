// SPDX-License-Identifier: Apache-2.0

#include "gaslens/tensor_blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "gaslens/errors.hpp"

namespace gaslens {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

std::uint64_t TensorBlob::element_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
}

std::size_t blob_header_size(std::size_t ndim) { return 4 + 1 + 1 + 4 + 8 * ndim; }

std::string encode_blob(std::span<const std::uint64_t> dims, std::span<const float> values) {
  const auto count =
      std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  if (count != values.size()) {
    throw ShapeMismatch("blob dims describe " + std::to_string(count) + " values, got " +
                        std::to_string(values.size()));
  }
  std::string out;
  out.reserve(blob_header_size(dims.size()) + 4 * values.size());
  out.append(kBlobMagic, 4);
  out.push_back(static_cast<char>(kBlobVersion));
  out.push_back(static_cast<char>(kBlobDtypeF32));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_le<std::uint64_t>(out, d);
  for (float v : values) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

TensorBlob decode_blob(std::string_view bytes) {
  if (bytes.size() < blob_header_size(0) || std::memcmp(bytes.data(), kBlobMagic, 4) != 0) {
    throw InputError("not an ATND tensor blob");
  }
  if (static_cast<std::uint8_t>(bytes[4]) != kBlobVersion) {
    throw InputError("unsupported blob version " +
                     std::to_string(static_cast<unsigned char>(bytes[4])));
  }
  if (static_cast<std::uint8_t>(bytes[5]) != kBlobDtypeF32) {
    throw InputError("unsupported blob dtype (only f32)");
  }
  const auto ndim = get_le<std::uint32_t>(bytes, 6);
  const auto header = blob_header_size(ndim);
  if (bytes.size() < header) throw InputError("truncated blob header");

  TensorBlob blob;
  blob.dims.resize(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) blob.dims[i] = get_le<std::uint64_t>(bytes, 10 + 8 * i);
  const auto count = blob.element_count();
  if (count > (bytes.size() - header) / 4 || bytes.size() - header != 4 * count) {
    throw ShapeMismatch("blob payload holds " + std::to_string(bytes.size() - header) +
                        " bytes, header implies " + std::to_string(4 * count));
  }
  blob.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    blob.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, header + 4 * i));
  }
  return blob;
}

void write_blob(const std::filesystem::path& path, std::span<const std::uint64_t> dims,
                std::span<const float> values) {
  const auto bytes = encode_blob(dims, values);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

TensorBlob read_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing blob " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_blob(bytes);
  } catch (const ShapeMismatch& e) {
    throw ShapeMismatch(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

bool bit_equal(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

}  // namespace gaslens
