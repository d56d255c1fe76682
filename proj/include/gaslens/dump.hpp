// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace gaslens {

enum class Normalization { raw_scores, row_softmax };
enum class TensorKind { text_text, text_image };

std::string_view to_string(Normalization n);
std::string_view to_string(TensorKind k);
Normalization parse_normalization(std::string_view s);
TensorKind parse_tensor_kind(std::string_view s);

struct TokenEntry {
  int index = 0;
  std::string text;
  bool is_stop = false;
  bool is_magnet = false;
  bool is_eos = false;
  bool in_noun_phrase = false;
  bool is_color = false;

  friend bool operator==(const TokenEntry&, const TokenEntry&) = default;
};

using TokenTable = std::vector<TokenEntry>;

struct TensorIndexEntry {
  int block = 0;
  TensorKind kind = TensorKind::text_text;
  std::string relative_path;
  std::vector<std::uint64_t> shape;

  friend bool operator==(const TensorIndexEntry&, const TensorIndexEntry&) = default;
};

struct Manifest {
  int format_version = 1;
  std::string model_name;
  int timestep = 0;
  int n_blocks = 0;
  int n_heads = 0;
  int n_text_tokens = 0;
  int grid_h = 0;
  int grid_w = 0;
  int image_h = 0;
  int image_w = 0;
  Normalization normalization = Normalization::raw_scores;
  TokenTable tokens;
  std::vector<TensorIndexEntry> tensor_index;

  int n_patches() const { return grid_h * grid_w; }
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

using MatrixRf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One transformer block. Each vector holds one matrix per head:
/// text_text[h] is T x T, text_image[h] is T x (grid_h * grid_w).
struct BlockAttention {
  std::vector<MatrixRf> text_text;
  std::vector<MatrixRf> text_image;
};

struct AttentionDump {
  Manifest manifest;
  std::vector<BlockAttention> blocks;
};

struct Violation {
  std::string path;
  std::string message;
};

using ValidationReport = std::vector<Violation>;

/// Relative blob path for a tensor, e.g. "tensors/block_0003_text_image.atnd".
std::string tensor_relative_path(int block, TensorKind kind);

/// The canonical tensor index implied by the manifest's dimensions.
std::vector<TensorIndexEntry> standard_tensor_index(const Manifest& m);

/// Sets n_text_tokens and tensor_index from the other manifest fields.
void finalize_manifest(Manifest& m);

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(std::string_view text);

/// Row-sum tolerance for dumps that declare row_softmax normalization.
inline constexpr double kRowSumTolerance = 1e-4;

ValidationReport validate_dump(const AttentionDump& dump);
std::string describe(const ValidationReport& report);

/// Throws InputError naming the first violated field when the dump is invalid.
void write_dump(const AttentionDump& dump, const std::filesystem::path& directory);

struct LoadOptions {
  bool validate = true;
};

AttentionDump load_dump(const std::filesystem::path& directory, LoadOptions options = {});

bool bit_equal(const AttentionDump& a, const AttentionDump& b);

}  // namespace gaslens
