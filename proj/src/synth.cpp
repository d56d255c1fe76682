// SPDX-License-Identifier: Apache-2.0

#include "gaslens/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "gaslens/tokens.hpp"

namespace gaslens::synth {

std::pair<double, double> Prng::normal_pair() {
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

double NormalStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const auto [a, b] = prng_.normal_pair();
  spare_ = b;
  has_spare_ = true;
  return a;
}

std::uint64_t stream_seed(std::uint64_t seed, int block, int head, TensorStream kind) {
  const auto key = (static_cast<std::uint64_t>(block) << 32) |
                   (static_cast<std::uint64_t>(head) << 1) | static_cast<std::uint64_t>(kind);
  return seed ^ Prng(key).next();
}

std::string_view to_string(GasScenario g) {
  switch (g) {
    case GasScenario::none:
      return "none";
    case GasScenario::stop_gas:
      return "stop_gas";
    case GasScenario::color_gas_with_reassignment:
      return "color_gas_with_reassignment";
  }
  return "unknown";
}

namespace {

constexpr std::string_view kStopPool[] = {"_a",  "_the", "_of",   "_on",   "_in",  "_at",
                                          "_by", "_is",  "_this", "_that", "_for", "_from",
                                          "_an", "_its", "_over", "_into"};
constexpr std::string_view kDistractorPool[] = {"_tree", "_dog",  "_bench", "_sign",
                                                "_lamp", "_bus",  "_fence", "_cloud"};
constexpr std::string_view kMagnetTexts[] = {"_", "_with", "_to", "_and", "_pink"};
constexpr int kMaxMagnets = 5;

struct Layout {
  int first_stop = 0;
  int color = -1;
  int target = 0;
  int first_distractor = 0;
  int eos = 0;
  int first_magnet = 0;
  int n_tokens = 0;
};

Layout layout_of(const SceneSpec& spec) {
  Layout l;
  int next = spec.n_stop;
  if (spec.has_color) l.color = next++;
  l.target = next++;
  l.first_distractor = next;
  next += spec.n_distractors;
  l.eos = next++;
  l.first_magnet = next;
  l.n_tokens = next + spec.n_magnet;
  return l;
}

int sink_token(const SceneSpec& spec, const Layout& l) {
  switch (spec.gas_scenario) {
    case GasScenario::none:
      return -1;
    case GasScenario::stop_gas:
      return l.first_stop;
    case GasScenario::color_gas_with_reassignment:
      // The color magnet takes over the sink when it is present.
      return spec.n_magnet == kMaxMagnets ? l.first_magnet + kMaxMagnets - 1 : l.color;
  }
  return -1;
}

// Background patches in row-major order, split into contiguous clusters of
// near-equal size.
std::vector<int> background_clusters(const SceneSpec& spec) {
  std::vector<int> cluster(static_cast<std::size_t>(spec.grid_h * spec.grid_w), -1);
  int background = 0;
  for (int r = 0; r < spec.grid_h; ++r) {
    for (int c = 0; c < spec.grid_w; ++c) background += !spec.target.contains(r, c);
  }
  int seen = 0;
  for (int r = 0; r < spec.grid_h; ++r) {
    for (int c = 0; c < spec.grid_w; ++c) {
      if (spec.target.contains(r, c)) continue;
      cluster[r * spec.grid_w + c] =
          static_cast<int>(static_cast<long long>(seen) * spec.background_clusters / background);
      ++seen;
    }
  }
  return cluster;
}

std::vector<Rect> distractor_rects(const SceneSpec& spec) {
  Prng layout(spec.seed);
  std::vector<Rect> rects;
  const int objects = spec.distractor_objects > 0
                          ? std::min(spec.distractor_objects, spec.n_distractors)
                          : spec.n_distractors;
  const int max_rows = std::max(1, spec.grid_h / 3);
  const int max_cols = std::max(1, spec.grid_w / 3);
  for (int d = 0; d < objects; ++d) {
    Rect rect{0, 0, 1, 1};
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      rect.rows = layout.uniform_int(1, max_rows);
      rect.cols = layout.uniform_int(1, max_cols);
      rect.row = layout.uniform_int(0, spec.grid_h - rect.rows);
      rect.col = layout.uniform_int(0, spec.grid_w - rect.cols);
      placed = !rect.intersects(spec.target);
    }
    if (!placed) {
      // Fall back to the first background cell.
      for (int p = 0; p < spec.grid_h * spec.grid_w && !placed; ++p) {
        rect = {p / spec.grid_w, p % spec.grid_w, 1, 1};
        placed = !rect.intersects(spec.target);
      }
    }
    rects.push_back(rect);
  }
  return rects;
}

// Raw text-to-image scores for one (block, head). Noise is drawn for every
// entry in row-major order even where it is not used, so rows of tokens
// shared by two specs see identical draws.
MatrixRf text_image_scores(const SceneSpec& spec, const Layout& l, int block, int head,
                           bool diffuse, const std::vector<int>& cluster,
                           const std::vector<Rect>& distractors) {
  const int patches = spec.grid_h * spec.grid_w;
  const int absorbers = spec.n_stop + spec.n_magnet;
  NormalStream noise(stream_seed(spec.seed, block, head, TensorStream::text_image));
  MatrixRf m(l.n_tokens, patches);
  for (int k = 0; k < l.n_tokens; ++k) {
    const bool is_absorber = k < spec.n_stop || k >= l.first_magnet;
    const int absorber_index = k < spec.n_stop ? k : spec.n_stop + (k - l.first_magnet);
    for (int p = 0; p < patches; ++p) {
      const double z = spec.noise_scale * noise.next();
      if (diffuse) {
        m(k, p) = static_cast<float>(z);
        continue;
      }
      const int r = p / spec.grid_w;
      const int c = p % spec.grid_w;
      double s = kScoreLow;
      if (k == l.eos) {
        m(k, p) = static_cast<float>(kScoreLow);
        continue;
      }
      if (k == l.target || k == l.color) {
        s = spec.target.contains(r, c) ? kScoreHigh : kScoreLow;
      } else if (is_absorber) {
        const int cl = cluster[p];
        s = (cl >= 0 && absorbers > 0 && absorber_index % spec.background_clusters == cl)
                ? kScoreHigh
                : kScoreLow;
      } else if (k >= l.first_distractor && k < l.eos) {
        const auto& rect = distractors[(k - l.first_distractor) % distractors.size()];
        s = rect.contains(r, c) ? kScoreMid : kScoreLow;
      }
      m(k, p) = static_cast<float>(s + z);
    }
  }
  return m;
}

// Row-softmax of noise; in sink blocks every query row sends kSinkMass to the
// sink and spreads the rest by the softmax over the other keys.
MatrixRf text_text_scores(const SceneSpec& spec, const Layout& l, int block, int head, int sink) {
  const int t = l.n_tokens;
  NormalStream noise(stream_seed(spec.seed, block, head, TensorStream::text_text));
  Eigen::MatrixXd z(t, t);
  for (int q = 0; q < t; ++q) {
    for (int k = 0; k < t; ++k) z(q, k) = spec.noise_scale * noise.next();
  }
  const int sink_blocks = (spec.n_blocks + 2) / 3;
  const bool sink_block = sink >= 0 && block >= spec.n_blocks - sink_blocks;
  MatrixRf m(t, t);
  for (int q = 0; q < t; ++q) {
    Eigen::RowVectorXd row = z.row(q);
    if (sink_block) row[sink] = -std::numeric_limits<double>::infinity();
    row = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
    if (sink_block) {
      row *= 1.0 - kSinkMass;
      row[sink] = kSinkMass;
    }
    m.row(q) = row.cast<float>();
  }
  return m;
}

}  // namespace

void validate(const SceneSpec& spec) {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scene spec: " + what); };
  if (spec.grid_h <= 0 || spec.grid_w <= 0) fail("grid dims must be positive");
  if (spec.image_h <= 0 || spec.image_w <= 0) fail("image dims must be positive");
  if (spec.n_blocks <= 0 || spec.n_heads <= 0) fail("n_blocks and n_heads must be positive");
  if (spec.n_stop < 0 || spec.n_distractors < 0 || spec.distractor_objects < 0) {
    fail("token counts must be nonnegative");
  }
  if (spec.n_magnet < 0 || spec.n_magnet > kMaxMagnets) fail("n_magnet must be in [0,5]");
  const auto& t = spec.target;
  if (t.rows <= 0 || t.cols <= 0) fail("target region is empty");
  if (t.row < 0 || t.col < 0 || t.row + t.rows > spec.grid_h || t.col + t.cols > spec.grid_w) {
    fail("target region outside the grid");
  }
  if (t.rows * t.cols == spec.grid_h * spec.grid_w) fail("target covers the whole grid");
  if (spec.background_clusters <= 0) fail("background_clusters must be positive");
  if (!(spec.diffuse_fraction >= 0.0 && spec.diffuse_fraction < 1.0)) {
    fail("diffuse_fraction must be in [0,1)");
  }
  if (!(spec.noise_scale >= 0.0) || !std::isfinite(spec.noise_scale)) {
    fail("noise_scale must be finite and nonnegative");
  }
  if (spec.gas_scenario == GasScenario::stop_gas && spec.n_stop == 0) {
    fail("stop_gas needs at least one stop token");
  }
  if (spec.gas_scenario == GasScenario::color_gas_with_reassignment && !spec.has_color) {
    fail("color_gas_with_reassignment needs a color token");
  }
}

TokenTable scene_tokens(const SceneSpec& spec) {
  const auto l = layout_of(spec);
  TokenTable table(static_cast<std::size_t>(l.n_tokens));
  for (int k = 0; k < l.n_tokens; ++k) {
    auto& tok = table[k];
    tok.index = k;
    if (k < spec.n_stop) {
      tok.text = kStopPool[k % std::size(kStopPool)];
      tok.in_noun_phrase = k == spec.n_stop - 1;  // determiner next to the noun
    } else if (k == l.color) {
      tok.text = "_red";
      tok.is_color = true;
      tok.in_noun_phrase = true;
    } else if (k == l.target) {
      tok.text = "_car";
      tok.in_noun_phrase = true;
    } else if (k < l.eos) {
      tok.text = kDistractorPool[(k - l.first_distractor) % std::size(kDistractorPool)];
    } else if (k == l.eos) {
      tok.text = "</s>";
      tok.is_eos = true;
    } else {
      const int m = k - l.first_magnet;
      tok.text = kMagnetTexts[m];
      tok.is_magnet = true;
      tok.is_color = m == kMaxMagnets - 1;
    }
  }
  return classify_tokens(std::move(table), StopwordLexicon::default_lexicon());
}

Scene generate(const SceneSpec& spec) {
  validate(spec);
  const auto l = layout_of(spec);
  const int sink = sink_token(spec, l);
  const auto cluster = background_clusters(spec);
  const auto distractors = distractor_rects(spec);
  const int diffuse_blocks =
      static_cast<int>(std::ceil(spec.diffuse_fraction * spec.n_blocks - 1e-9));

  Scene scene;
  auto& m = scene.dump.manifest;
  m.model_name = "synthetic";
  m.timestep = spec.timestep;
  m.n_blocks = spec.n_blocks;
  m.n_heads = spec.n_heads;
  m.grid_h = spec.grid_h;
  m.grid_w = spec.grid_w;
  m.image_h = spec.image_h;
  m.image_w = spec.image_w;
  m.normalization = Normalization::raw_scores;
  m.tokens = scene_tokens(spec);
  finalize_manifest(m);

  scene.dump.blocks.resize(static_cast<std::size_t>(spec.n_blocks));
  for (int b = 0; b < spec.n_blocks; ++b) {
    auto& block = scene.dump.blocks[b];
    for (int h = 0; h < spec.n_heads; ++h) {
      block.text_text.push_back(text_text_scores(spec, l, b, h, sink));
      block.text_image.push_back(
          text_image_scores(spec, l, b, h, b < diffuse_blocks, cluster, distractors));
    }
  }

  auto& truth = scene.truth;
  truth.target_rect = spec.target;
  truth.target = BinaryMask::Constant(spec.grid_h, spec.grid_w, false);
  for (int r = 0; r < spec.grid_h; ++r) {
    for (int c = 0; c < spec.grid_w; ++c) truth.target(r, c) = spec.target.contains(r, c);
  }
  truth.background = !truth.target;
  if (sink >= 0) truth.expected_gas.insert(sink);
  return scene;
}

ScenePair generate_pair(const SceneSpec& spec) {
  SceneSpec plain = spec;
  plain.n_magnet = 0;
  return {generate(plain), generate(spec)};
}

std::vector<NamedScenario> scenario_suite() {
  std::vector<NamedScenario> suite;

  SceneSpec single;
  suite.push_back({"single-target", single, false});

  SceneSpec multi = single;
  multi.n_distractors = 4;
  suite.push_back({"multi-distractor", multi, false});

  // Sinks live in the last third of the blocks, so the block-averaged mass
  // of a sink is about 0.8 / 3; T must exceed 10 / (0.8 / 3) ~ 38 for the
  // 10x rule to fire.
  SceneSpec stop_gas = single;
  stop_gas.n_stop = 40;
  stop_gas.gas_scenario = GasScenario::stop_gas;
  suite.push_back({"stop-gas", stop_gas, false});

  SceneSpec color_gas = stop_gas;
  color_gas.has_color = true;
  color_gas.gas_scenario = GasScenario::color_gas_with_reassignment;
  suite.push_back({"color-gas-reassign", color_gas, true});

  // Six content words describe one distractor object, so without magnets its
  // summed score rivals the target; the expression carries no stop words and
  // only the magnets absorb the background.
  SceneSpec magnets = single;
  magnets.n_stop = 0;
  magnets.n_distractors = 6;
  magnets.distractor_objects = 1;
  magnets.background_clusters = 5;
  magnets.noise_scale = 1.0;
  suite.push_back({"magnet-vs-none", magnets, true});

  // Single-patch target: the comparison is on the exact argmax cell.
  SceneSpec diffuse = single;
  diffuse.diffuse_fraction = 0.6;
  diffuse.n_blocks = 20;
  diffuse.noise_scale = 1.0;
  diffuse.target = {6, 6, 1, 1};
  suite.push_back({"all-diffuse-prefix", diffuse, false});

  return suite;
}

NamedScenario scenario(std::string_view name, std::uint64_t seed) {
  for (auto entry : scenario_suite()) {
    if (entry.name == name) {
      entry.spec.seed = seed;
      return entry;
    }
  }
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

std::string groundtruth_json(const GroundTruth& truth, std::string_view scenario_name,
                             std::uint64_t seed) {
  const auto& t = truth.target_rect;
  nlohmann::json j = {
      {"scenario", std::string(scenario_name)},
      {"seed", seed},
      {"target", {{"row", t.row}, {"col", t.col}, {"rows", t.rows}, {"cols", t.cols}}},
      {"expected_gas", std::vector<int>(truth.expected_gas.begin(), truth.expected_gas.end())},
      {"grid_h", truth.target.rows()},
      {"grid_w", truth.target.cols()}};
  return j.dump() + "\n";
}

}  // namespace gaslens::synth
