// SPDX-License-Identifier: Apache-2.0

#include "gaslens/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gaslens/errors.hpp"

namespace gaslens {

PointResult argmax_point(const Heatmap& heatmap) {
  const auto& v = heatmap.values;
  if (v.size() == 0) throw std::invalid_argument("empty heatmap");
  PointResult result;
  double best = v(0, 0);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (v(r, c) > best) {
        best = v(r, c);
        result.grid = {static_cast<int>(r), static_cast<int>(c)};
      }
    }
  }
  const double cell_w = static_cast<double>(heatmap.image_w) / static_cast<double>(v.cols());
  const double cell_h = static_cast<double>(heatmap.image_h) / static_cast<double>(v.rows());
  result.pixel = {(result.grid.col + 0.5) * cell_w, (result.grid.row + 0.5) * cell_h};
  return result;
}

namespace {

constexpr std::pair<PriorKeyword, std::string_view> kKeywords[] = {
    {PriorKeyword::left, "left"},
    {PriorKeyword::right, "right"},
    {PriorKeyword::top, "top"},
    {PriorKeyword::bottom, "bottom"},
    {PriorKeyword::top_left, "top_left"},
    {PriorKeyword::top_right, "top_right"},
    {PriorKeyword::bottom_left, "bottom_left"},
    {PriorKeyword::bottom_right, "bottom_right"},
    {PriorKeyword::center, "center"},
};

// 1 at index 0 falling to 0 at n-1; a single cell gets weight 1.
Eigen::VectorXd falling_ramp(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = n == 1 ? 1.0 : 1.0 - static_cast<double>(i) / (n - 1);
  return w;
}

Eigen::VectorXd rising_ramp(int n) { return falling_ramp(n).reverse(); }

Eigen::VectorXd tent(int n) {
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    w[i] = 1.0 - std::abs(2.0 * x - 1.0);
  }
  return w / w.maxCoeff();
}

}  // namespace

std::string_view to_string(PriorKeyword keyword) {
  for (const auto& [k, name] : kKeywords) {
    if (k == keyword) return name;
  }
  return "unknown";
}

PriorKeyword parse_prior_keyword(std::string_view text) {
  std::string normalized(text);
  std::replace(normalized.begin(), normalized.end(), '-', '_');
  std::replace(normalized.begin(), normalized.end(), ' ', '_');
  for (const auto& [k, name] : kKeywords) {
    if (name == normalized) return k;
  }
  throw std::invalid_argument("unknown spatial prior '" + std::string(text) + "'");
}

SpatialPrior spatial_prior(PriorKeyword keyword, int grid_h, int grid_w) {
  if (grid_h <= 0 || grid_w <= 0) throw std::invalid_argument("grid dims must be positive");
  Eigen::VectorXd rows = Eigen::VectorXd::Ones(grid_h);
  Eigen::VectorXd cols = Eigen::VectorXd::Ones(grid_w);
  switch (keyword) {
    case PriorKeyword::left:
      cols = falling_ramp(grid_w);
      break;
    case PriorKeyword::right:
      cols = rising_ramp(grid_w);
      break;
    case PriorKeyword::top:
      rows = falling_ramp(grid_h);
      break;
    case PriorKeyword::bottom:
      rows = rising_ramp(grid_h);
      break;
    case PriorKeyword::top_left:
      rows = falling_ramp(grid_h);
      cols = falling_ramp(grid_w);
      break;
    case PriorKeyword::top_right:
      rows = falling_ramp(grid_h);
      cols = rising_ramp(grid_w);
      break;
    case PriorKeyword::bottom_left:
      rows = rising_ramp(grid_h);
      cols = falling_ramp(grid_w);
      break;
    case PriorKeyword::bottom_right:
      rows = rising_ramp(grid_h);
      cols = rising_ramp(grid_w);
      break;
    case PriorKeyword::center:
      rows = tent(grid_h);
      cols = tent(grid_w);
      break;
  }
  return {keyword, rows * cols.transpose()};
}

Heatmap apply_spatial_prior(const Heatmap& heatmap, const SpatialPrior& prior) {
  if (heatmap.values.rows() != prior.weights.rows() ||
      heatmap.values.cols() != prior.weights.cols()) {
    throw ShapeMismatch("spatial prior does not match heatmap dims");
  }
  Heatmap out = heatmap;
  out.values = heatmap.values.cwiseProduct(prior.weights);
  return out;
}

GroundingResult ground(const AttentionDump& dump, const GroundingOptions& options) {
  GroundingResult result;
  const auto stack = token_softmax(stack_from_dump(dump), options.threads);
  result.gas = detect_gas(dump, options.gas_factor, options.gas_axis);
  result.kept_tokens = build_filter_set(dump.manifest.tokens, options.policy,
                                        options.policy.drop_gas ? &result.gas : nullptr);

  if (options.blocks.kind == BlockPolicy::Kind::entropy_threshold) {
    result.blocks_used = select_blocks(block_entropy(dump), options.blocks);
  } else {
    EntropyProfile shape_only;
    shape_only.per_block_mean = Eigen::VectorXd::Zero(dump.manifest.n_blocks);
    shape_only.per_block_min = Eigen::VectorXd::Zero(dump.manifest.n_blocks);
    result.blocks_used = select_blocks(shape_only, options.blocks);
  }

  result.heatmap = aggregate_heatmap(stack, result.kept_tokens, result.blocks_used,
                                     options.threads);
  if (options.prior) {
    result.heatmap = apply_spatial_prior(
        result.heatmap, spatial_prior(*options.prior, dump.manifest.grid_h, dump.manifest.grid_w));
    result.prior_applied = std::string(to_string(*options.prior));
  }
  const auto point = argmax_point(result.heatmap);
  result.point_grid = point.grid;
  result.point_pixel = point.pixel;
  result.peak_sharpness = peak_sharpness(result.heatmap);
  return result;
}

}  // namespace gaslens
