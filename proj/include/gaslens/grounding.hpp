// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "gaslens/attention.hpp"
#include "gaslens/dump.hpp"
#include "gaslens/tokens.hpp"
#include "gaslens/types.hpp"

namespace gaslens {

struct GridPoint {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct PointResult {
  GridPoint grid;
  PixelPoint pixel;
};

/// First maximal cell in row-major order, and its center in pixels.
PointResult argmax_point(const Heatmap& heatmap);

enum class PriorKeyword {
  left,
  right,
  top,
  bottom,
  top_left,
  top_right,
  bottom_left,
  bottom_right,
  center
};

std::string_view to_string(PriorKeyword keyword);
PriorKeyword parse_prior_keyword(std::string_view text);

struct SpatialPrior {
  PriorKeyword keyword = PriorKeyword::center;
  Eigen::MatrixXd weights;
};

/// Linear ramps over the normalized coordinate col/(W-1) (row/(H-1)); corners
/// multiply two ramps; center multiplies two tents rescaled to peak at 1.
SpatialPrior spatial_prior(PriorKeyword keyword, int grid_h, int grid_w);

Heatmap apply_spatial_prior(const Heatmap& heatmap, const SpatialPrior& prior);

struct GroundingOptions {
  FilterPolicy policy = FilterPolicy::grounding_default();
  BlockPolicy blocks = BlockPolicy::all();
  double gas_factor = kDefaultGasFactor;
  MassAxis gas_axis = MassAxis::received;
  std::optional<PriorKeyword> prior;
  int threads = 1;
};

struct GroundingResult {
  Heatmap heatmap;
  GridPoint point_grid;
  PixelPoint point_pixel;
  KeptIndices kept_tokens;
  GasReport gas;
  BlockSelection blocks_used;
  std::optional<std::string> prior_applied;
  double peak_sharpness = 0.0;
};

/// token_softmax -> detect_gas -> build_filter_set -> aggregate over the
/// selected blocks -> optional prior -> argmax.
GroundingResult ground(const AttentionDump& dump, const GroundingOptions& options = {});

}  // namespace gaslens
