// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <set>
#include <string>
#include <vector>

#include "gaslens/dump.hpp"
#include "gaslens/tokens.hpp"
#include "gaslens/types.hpp"

namespace gaslens {

enum class Provenance { raw_scores, row_softmax, token_softmax };

/// Text-to-image maps for every block and head, in double precision.
/// values[b][h] is a T x P matrix (row = token, column = patch).
struct TokenHeatmapStack {
  std::vector<std::vector<Eigen::MatrixXd>> values;
  Provenance provenance = Provenance::raw_scores;
  int grid_h = 0;
  int grid_w = 0;
  int image_h = 0;
  int image_w = 0;
  /// Tokens excluded from every downstream mean.
  std::vector<bool> suppressed;

  int n_blocks() const { return static_cast<int>(values.size()); }
  int n_heads() const { return values.empty() ? 0 : static_cast<int>(values.front().size()); }
  int n_tokens() const { return static_cast<int>(suppressed.size()); }
  int n_patches() const { return grid_h * grid_w; }
};

TokenHeatmapStack stack_from_dump(const AttentionDump& dump);

/// Column-wise softmax over tokens for each (block, head, patch), computed
/// with max subtraction. Suppressed tokens stay at zero and are left out of
/// the normalization.
TokenHeatmapStack token_softmax(const TokenHeatmapStack& stack, int threads = 1);

enum class MassAxis { received, allocated };

std::string_view to_string(MassAxis axis);
MassAxis parse_mass_axis(std::string_view s);

inline constexpr double kDefaultGasFactor = 10.0;

struct GasReport {
  std::set<int> gas_indices;
  Eigen::VectorXd per_token_mass;
  double threshold_factor = kDefaultGasFactor;
  MassAxis mass_axis = MassAxis::received;
  /// Coefficient of variation of each token's block/head-averaged
  /// text-to-text row. Reported only; plays no part in flagging.
  Eigen::VectorXd row_cv;
};

/// per_token_mass[k] averages text_text over blocks, heads and either the
/// query rows (received) or the key columns (allocated) of token k. A token
/// is a sink when its mass exceeds threshold_factor times the mean mass.
GasReport detect_gas(const AttentionDump& dump, double threshold_factor = kDefaultGasFactor,
                     MassAxis axis = MassAxis::received);

TokenHeatmapStack suppress_tokens(const TokenHeatmapStack& stack, const std::set<int>& indices,
                                  bool renormalize);

/// Mean over the selected blocks, all heads and the kept (non-suppressed)
/// tokens. Each patch is reduced block-major, then head, then token, with
/// pairwise_sum, so the output is independent of input ordering and thread
/// count.
Heatmap aggregate_heatmap(const TokenHeatmapStack& stack, const KeptIndices& kept,
                          const BlockSelection& blocks, int threads = 1);

struct EntropyProfile {
  Eigen::VectorXd per_block_mean;
  Eigen::VectorXd per_block_min;
  /// ln P, the entropy upper bound.
  double max_entropy = 0.0;

  int n_blocks() const { return static_cast<int>(per_block_mean.size()); }
};

/// Shannon entropy (nats) of each token's head-averaged text-to-image row.
/// Raw-score rows are shifted by their minimum before normalization; a
/// constant row has entropy ln P.
EntropyProfile block_entropy(const AttentionDump& dump);

/// Entropy of one nonnegative row after dividing by its sum.
double row_entropy(const Eigen::Ref<const Eigen::VectorXd>& row, bool shift_by_min);

struct BlockPolicy {
  enum class Kind { all, drop_first_fraction, entropy_threshold };
  Kind kind = Kind::all;
  double value = 0.0;

  static BlockPolicy all() { return {}; }
  static BlockPolicy drop_first(double fraction) { return {Kind::drop_first_fraction, fraction}; }
  static BlockPolicy entropy_below(double threshold) {
    return {Kind::entropy_threshold, threshold};
  }
  /// "all", "drop-first=F" or "entropy=THETA".
  static BlockPolicy parse(std::string_view text);
  std::string describe() const;
};

BlockSelection select_blocks(const EntropyProfile& profile, const BlockPolicy& policy);
BlockSelection all_blocks(int n_blocks);

/// max / mean of the heatmap; 0 for an all-zero map.
double peak_sharpness(const Heatmap& heatmap);

struct RedistributionStats {
  /// Fraction of background patches whose token-argmax is a magnet.
  double magnet_background_share = 0.0;
  /// (token index, reassigned) for every GAS token of the plain dump.
  std::vector<std::pair<int, bool>> gas_reassigned;
  double peak_sharpness_plain = 0.0;
  double peak_sharpness_magnet = 0.0;
};

RedistributionStats redistribution_report(const AttentionDump& dump_plain,
                                          const AttentionDump& dump_magnet,
                                          const BinaryMask& background_mask,
                                          const GasReport& gas_plain);

}  // namespace gaslens
