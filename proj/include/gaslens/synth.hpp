// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gaslens/dump.hpp"
#include "gaslens/types.hpp"

namespace gaslens::synth {

/// SplitMix64. uniform() takes the high 53 bits of next() over 2^53.
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(static_cast<std::uint64_t>(uniform() * static_cast<double>(span)));
  }

  /// Box-Muller on two consecutive uniforms u1, u2:
  /// r = sqrt(-2 ln(1 - u1)); returns (r cos 2 pi u2, r sin 2 pi u2).
  std::pair<double, double> normal_pair();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Standard normals consumed pairwise from a Prng: first() of each pair,
/// then second(), then a fresh pair.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : prng_(seed) {}
  double next();

 private:
  Prng prng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

enum class TensorStream : std::uint64_t { text_text = 0, text_image = 1 };

/// Seed of the noise stream for one (block, head, tensor):
/// seed ^ first SplitMix64 output of state (block << 32 | head << 1 | kind).
std::uint64_t stream_seed(std::uint64_t seed, int block, int head, TensorStream kind);

enum class GasScenario { none, stop_gas, color_gas_with_reassignment };

std::string_view to_string(GasScenario g);

struct Rect {
  int row = 0;
  int col = 0;
  int rows = 1;
  int cols = 1;

  bool contains(int r, int c) const {
    return r >= row && r < row + rows && c >= col && c < col + cols;
  }
  bool intersects(const Rect& o) const {
    return row < o.row + o.rows && o.row < row + rows && col < o.col + o.cols &&
           o.col < col + cols;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// Generator score levels. Synthetic constants, not measured attention values.
inline constexpr double kScoreHigh = 4.0;
inline constexpr double kScoreMid = 2.0;
inline constexpr double kScoreLow = 0.0;
inline constexpr double kSinkMass = 0.8;

struct SceneSpec {
  int grid_h = 16;
  int grid_w = 16;
  int image_h = 512;
  int image_w = 512;
  int n_blocks = 12;
  int n_heads = 2;
  int n_distractors = 1;
  /// Distinct distractor rectangles; distractor token d scores on rectangle
  /// d mod distractor_objects. 0 gives every distractor its own rectangle.
  int distractor_objects = 0;
  int n_stop = 2;
  /// Leading entries of the default magnet list (0..5); 5 includes "pink".
  int n_magnet = 5;
  bool has_color = false;
  Rect target{5, 5, 4, 4};
  int background_clusters = 7;
  /// Leading fraction of blocks that carry pure noise.
  double diffuse_fraction = 0.0;
  GasScenario gas_scenario = GasScenario::none;
  double noise_scale = 0.5;
  std::uint64_t seed = 0;
  int timestep = 750;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const SceneSpec& spec);

struct GroundTruth {
  BinaryMask target;
  BinaryMask background;
  std::set<int> expected_gas;
  Rect target_rect;
};

struct Scene {
  AttentionDump dump;
  GroundTruth truth;
};

Scene generate(const SceneSpec& spec);

/// Token layout of a generated dump: stop words, optional color word, target,
/// distractors, EOS, then the magnets.
TokenTable scene_tokens(const SceneSpec& spec);

struct ScenePair {
  Scene plain;   ///< same spec with no magnets
  Scene magnet;  ///< the spec as given
};

ScenePair generate_pair(const SceneSpec& spec);

struct NamedScenario {
  std::string name;
  SceneSpec spec;
  bool paired = false;
};

/// single-target, multi-distractor, stop-gas, color-gas-reassign,
/// magnet-vs-none, all-diffuse-prefix.
std::vector<NamedScenario> scenario_suite();

/// Suite entry by name with the seed applied; throws std::invalid_argument.
NamedScenario scenario(std::string_view name, std::uint64_t seed);

/// {"target": {row, col, rows, cols}, "expected_gas": [...], ...} as
/// canonical JSON with a trailing LF.
std::string groundtruth_json(const GroundTruth& truth, std::string_view scenario_name,
                             std::uint64_t seed);

}  // namespace gaslens::synth
