// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <vector>

namespace gaslens {

/// Boolean grid, row = y.
using BinaryMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Sorted, duplicate-free block indices.
using BlockSelection = std::vector<int>;

/// Scores over the patch grid plus the pixel size of the source image.
struct Heatmap {
  Eigen::MatrixXd values;
  int image_h = 0;
  int image_w = 0;

  Eigen::Index grid_h() const { return values.rows(); }
  Eigen::Index grid_w() const { return values.cols(); }
};

}  // namespace gaslens
