// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "gaslens/grounding.hpp"
#include "gaslens/types.hpp"

namespace gaslens {

struct EvalRecord {
  Eigen::Index intersection = 0;
  Eigen::Index union_ = 0;
  double iou = 0.0;
  bool point_hit = false;
};

/// |a & b| and |a | b|; throws ShapeMismatch on differing dims.
EvalRecord overlap(const BinaryMask& pred, const BinaryMask& gt);

/// Both empty -> 1, exactly one empty -> 0.
double iou(const BinaryMask& pred, const BinaryMask& gt);

using MaskPair = std::pair<BinaryMask, BinaryMask>;

/// Sum of intersections over sum of unions. An all-empty list of pairs scores 1.
double oiou(std::span<const MaskPair> pairs);
double miou(std::span<const MaskPair> pairs);

/// Foreground cells with a 4-neighbor that is background or off the grid.
BinaryMask boundary_cells(const BinaryMask& mask);

/// max(1, round(0.008 * diagonal)).
int default_boundary_tolerance(Eigen::Index rows, Eigen::Index cols);

/// Boundary F-measure with Chebyshev-distance matching at `tolerance_px`
/// cells. Both boundaries empty -> 1; P + R == 0 -> 0.
double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int tolerance_px);
double boundary_f(const BinaryMask& pred, const BinaryMask& gt);

/// Throws std::out_of_range when the point lies outside the mask.
bool point_accuracy(GridPoint point, const BinaryMask& gt);

struct SequenceEval {
  std::vector<double> j_per_frame;
  std::vector<double> f_per_frame;
  double j = 0.0;
  double f = 0.0;
  double j_and_f = 0.0;
};

/// Aggregates per-frame J and F values; J&F = (J + F) / 2.
SequenceEval summarize_sequence(std::vector<double> j_per_frame, std::vector<double> f_per_frame);

SequenceEval sequence_eval(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts);

}  // namespace gaslens
