// SPDX-License-Identifier: Apache-2.0

#include "gaslens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gaslens/errors.hpp"
#include "gaslens/reduce.hpp"

namespace gaslens {

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("mask dims differ: " + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
  }
}

// Chessboard distance from every cell to the nearest set cell of `seeds`.
Eigen::ArrayXXi chessboard_distance(const BinaryMask& seeds) {
  const auto rows = seeds.rows();
  const auto cols = seeds.cols();
  const int far = std::numeric_limits<int>::max() / 2;
  Eigen::ArrayXXi d = seeds.select(Eigen::ArrayXXi::Zero(rows, cols), far);
  auto relax = [&](Eigen::Index r, Eigen::Index c, Eigen::Index nr, Eigen::Index nc) {
    if (nr >= 0 && nr < rows && nc >= 0 && nc < cols) d(r, c) = std::min(d(r, c), d(nr, nc) + 1);
  };
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      relax(r, c, r - 1, c - 1);
      relax(r, c, r - 1, c);
      relax(r, c, r - 1, c + 1);
      relax(r, c, r, c - 1);
    }
  }
  for (Eigen::Index r = rows - 1; r >= 0; --r) {
    for (Eigen::Index c = cols - 1; c >= 0; --c) {
      relax(r, c, r + 1, c + 1);
      relax(r, c, r + 1, c);
      relax(r, c, r + 1, c - 1);
      relax(r, c, r, c + 1);
    }
  }
  return d;
}

// Fraction of `from` boundary cells within `tolerance` of a `to` boundary cell.
double matched_fraction(const BinaryMask& from, const Eigen::ArrayXXi& distance_to, int tolerance) {
  const auto total = from.count();
  if (total == 0) return 0.0;
  const auto hits = (from && (distance_to <= tolerance)).count();
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

EvalRecord overlap(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_dims(pred, gt);
  EvalRecord rec;
  rec.intersection = (pred && gt).count();
  rec.union_ = (pred || gt).count();
  rec.iou = rec.union_ == 0 ? 1.0
                            : static_cast<double>(rec.intersection) /
                                  static_cast<double>(rec.union_);
  return rec;
}

double iou(const BinaryMask& pred, const BinaryMask& gt) { return overlap(pred, gt).iou; }

double oiou(std::span<const MaskPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("oiou of an empty list");
  Eigen::Index inter = 0;
  Eigen::Index uni = 0;
  for (const auto& [pred, gt] : pairs) {
    const auto rec = overlap(pred, gt);
    inter += rec.intersection;
    uni += rec.union_;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double miou(std::span<const MaskPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("miou of an empty list");
  std::vector<double> ious;
  ious.reserve(pairs.size());
  for (const auto& [pred, gt] : pairs) ious.push_back(iou(pred, gt));
  return pairwise_mean<double>(ious);
}

BinaryMask boundary_cells(const BinaryMask& mask) {
  const auto rows = mask.rows();
  const auto cols = mask.cols();
  BinaryMask out = BinaryMask::Constant(rows, cols, false);
  auto background = [&](Eigen::Index r, Eigen::Index c) {
    return r < 0 || r >= rows || c < 0 || c >= cols || !mask(r, c);
  };
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      out(r, c) = mask(r, c) && (background(r - 1, c) || background(r + 1, c) ||
                                 background(r, c - 1) || background(r, c + 1));
    }
  }
  return out;
}

int default_boundary_tolerance(Eigen::Index rows, Eigen::Index cols) {
  const double diagonal = std::hypot(static_cast<double>(rows), static_cast<double>(cols));
  return std::max(1, static_cast<int>(std::lround(0.008 * diagonal)));
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, int tolerance_px) {
  require_same_dims(pred, gt);
  if (tolerance_px < 0) throw std::invalid_argument("negative boundary tolerance");
  const auto pred_b = boundary_cells(pred);
  const auto gt_b = boundary_cells(gt);
  const bool pred_empty = pred_b.count() == 0;
  const bool gt_empty = gt_b.count() == 0;
  if (pred_empty && gt_empty) return 1.0;
  if (pred_empty || gt_empty) return 0.0;

  const double precision = matched_fraction(pred_b, chessboard_distance(gt_b), tolerance_px);
  const double recall = matched_fraction(gt_b, chessboard_distance(pred_b), tolerance_px);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt) {
  return boundary_f(pred, gt, default_boundary_tolerance(gt.rows(), gt.cols()));
}

bool point_accuracy(GridPoint point, const BinaryMask& gt) {
  if (point.row < 0 || point.row >= gt.rows() || point.col < 0 || point.col >= gt.cols()) {
    throw std::out_of_range("point (" + std::to_string(point.row) + "," +
                            std::to_string(point.col) + ") outside the mask");
  }
  return gt(point.row, point.col);
}

SequenceEval summarize_sequence(std::vector<double> j_per_frame, std::vector<double> f_per_frame) {
  if (j_per_frame.size() != f_per_frame.size()) {
    throw std::invalid_argument("sequence length mismatch");
  }
  if (j_per_frame.empty()) throw std::invalid_argument("empty sequence");
  SequenceEval out;
  out.j_per_frame = std::move(j_per_frame);
  out.f_per_frame = std::move(f_per_frame);
  out.j = pairwise_mean<double>(out.j_per_frame);
  out.f = pairwise_mean<double>(out.f_per_frame);
  out.j_and_f = (out.j + out.f) / 2.0;
  return out;
}

SequenceEval sequence_eval(std::span<const BinaryMask> preds, std::span<const BinaryMask> gts) {
  if (preds.size() != gts.size()) throw std::invalid_argument("sequence length mismatch");
  std::vector<double> j;
  std::vector<double> f;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    j.push_back(iou(preds[i], gts[i]));
    f.push_back(boundary_f(preds[i], gts[i]));
  }
  return summarize_sequence(std::move(j), std::move(f));
}

}  // namespace gaslens
