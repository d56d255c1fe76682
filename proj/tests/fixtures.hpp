// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "gaslens/dump.hpp"

namespace gaslens::testing {

/// Dump with every tensor zero-filled and plain tokens "t0", "t1", ...
inline AttentionDump blank_dump(int blocks, int heads, int tokens, int grid_h, int grid_w,
                                Normalization norm = Normalization::raw_scores) {
  AttentionDump d;
  auto& m = d.manifest;
  m.model_name = "fixture";
  m.timestep = 750;
  m.n_blocks = blocks;
  m.n_heads = heads;
  m.grid_h = grid_h;
  m.grid_w = grid_w;
  m.image_h = grid_h * 32;
  m.image_w = grid_w * 32;
  m.normalization = norm;
  for (int k = 0; k < tokens; ++k) m.tokens.push_back({k, "t" + std::to_string(k)});
  finalize_manifest(m);
  d.blocks.resize(static_cast<std::size_t>(blocks));
  for (auto& b : d.blocks) {
    b.text_text.assign(static_cast<std::size_t>(heads), MatrixRf::Zero(tokens, tokens));
    b.text_image.assign(static_cast<std::size_t>(heads), MatrixRf::Zero(tokens, grid_h * grid_w));
  }
  return d;
}

/// Every row of every tensor set to the uniform distribution.
inline AttentionDump uniform_dump(int blocks, int heads, int tokens, int grid_h, int grid_w) {
  auto d = blank_dump(blocks, heads, tokens, grid_h, grid_w, Normalization::row_softmax);
  for (auto& b : d.blocks) {
    for (auto& m : b.text_text) m.setConstant(1.0f / static_cast<float>(tokens));
    for (auto& m : b.text_image) m.setConstant(1.0f / static_cast<float>(grid_h * grid_w));
  }
  return d;
}

/// Raw-score dump with standard normal entries.
inline AttentionDump random_dump(std::mt19937_64& rng, int blocks, int heads, int tokens,
                                 int grid_h, int grid_w) {
  auto d = blank_dump(blocks, heads, tokens, grid_h, grid_w);
  std::normal_distribution<float> normal;
  for (auto& b : d.blocks) {
    for (auto& m : b.text_text) m = m.unaryExpr([&](float) { return normal(rng); });
    for (auto& m : b.text_image) m = m.unaryExpr([&](float) { return normal(rng); });
  }
  return d;
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("gaslens_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace gaslens::testing
