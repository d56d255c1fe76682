// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <json.hpp>

#include "gaslens/attention.hpp"
#include "gaslens/grounding.hpp"
#include "gaslens/synth.hpp"
#include "gaslens/tokens.hpp"

using namespace gaslens;
using namespace gaslens::synth;

TEST_CASE("SplitMix64 reference outputs") {
  Prng zero(0);
  CHECK(zero.next() == 0xE220A8397B1DCDAFULL);
  CHECK(zero.next() == 0x6E789E6AA1B965F4ULL);
  CHECK(zero.next() == 0x06C45D188009454FULL);

  Prng p(1234567);
  CHECK(p.next() == 0x599ED017FB08FC85ULL);
}

TEST_CASE("uniform takes the high 53 bits") {
  Prng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == static_cast<double>(b.next() >> 11) / 9007199254740992.0);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Prng c(9);
  for (int i = 0; i < 1000; ++i) {
    const int v = c.uniform_int(3, 5);
    CHECK(v >= 3);
    CHECK(v <= 5);
  }
}

TEST_CASE("Box-Muller pairs are consumed first then second") {
  Prng ref(5);
  const double u1 = ref.uniform();
  const double u2 = ref.uniform();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  NormalStream s(5);
  CHECK(s.next() == r * std::cos(2.0 * std::numbers::pi * u2));
  CHECK(s.next() == r * std::sin(2.0 * std::numbers::pi * u2));
  Prng again(5);
  again.uniform();
  again.uniform();
  const double u3 = again.uniform();
  const double u4 = again.uniform();
  const double r2 = std::sqrt(-2.0 * std::log(1.0 - u3));
  CHECK(s.next() == r2 * std::cos(2.0 * std::numbers::pi * u4));
}

TEST_CASE("stream seeds depend on block, head and tensor") {
  CHECK(stream_seed(7, 0, 0, TensorStream::text_text) == (7 ^ Prng(0).next()));
  CHECK(stream_seed(7, 2, 1, TensorStream::text_image) == (7 ^ Prng((2ULL << 32) | 3).next()));
  CHECK(stream_seed(7, 0, 1, TensorStream::text_text) !=
        stream_seed(7, 0, 0, TensorStream::text_image));
}

TEST_CASE("scenario suite") {
  const auto suite = scenario_suite();
  REQUIRE(suite.size() == 6);
  const std::vector<std::string> names{"single-target",      "multi-distractor",
                                       "stop-gas",           "color-gas-reassign",
                                       "magnet-vs-none",     "all-diffuse-prefix"};
  for (std::size_t i = 0; i < suite.size(); ++i) {
    CHECK(suite[i].name == names[i]);
    CHECK_NOTHROW(validate(suite[i].spec));
  }
  CHECK(scenario("all-diffuse-prefix", 0).spec.diffuse_fraction == 0.6);
  CHECK(scenario("magnet-vs-none", 0).paired);
  CHECK(scenario("color-gas-reassign", 0).paired);
  CHECK(scenario("stop-gas", 17).spec.seed == 17);
  CHECK_THROWS_AS(scenario("nope", 0), std::invalid_argument);
}

TEST_CASE("scene validation") {
  SceneSpec s;
  CHECK_NOTHROW(validate(s));
  auto bad = s;
  bad.target = {14, 14, 4, 4};
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = s;
  bad.target.rows = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = s;
  bad.diffuse_fraction = 1.0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = s;
  bad.n_magnet = 6;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = s;
  bad.gas_scenario = GasScenario::color_gas_with_reassignment;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = s;
  bad.target = {0, 0, 16, 16};
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  CHECK_THROWS_AS(generate(bad), std::invalid_argument);
}

TEST_CASE("token layout") {
  SceneSpec s;
  s.has_color = true;
  s.n_distractors = 2;
  const auto t = scene_tokens(s);
  std::vector<std::string> text;
  for (const auto& e : t) text.push_back(e.text);
  CHECK(text == std::vector<std::string>{"_a", "_the", "_red", "_car", "_tree", "_dog", "</s>",
                                         "_", "_with", "_to", "_and", "_pink"});
  CHECK(t[0].is_stop);
  CHECK(t[1].is_stop);
  CHECK_FALSE(t[1].is_magnet);
  CHECK(t[2].is_color);
  CHECK(t[6].is_eos);
  for (std::size_t i = 7; i < 12; ++i) CHECK(t[i].is_magnet);
  CHECK(t[11].is_color);
  CHECK_FALSE(t[11].is_stop);
  CHECK(magnet_suffix_check(t, MagnetSpec::default_spec()));
  CHECK(build_filter_set(t, FilterPolicy::grounding_default()) == KeptIndices{2, 3, 4, 5});
  FilterPolicy np;
  np.restrict_to_noun_phrase = true;
  CHECK(build_filter_set(t, np) == KeptIndices{1, 2, 3});
}

TEST_CASE("generated dumps validate and carry the scene metadata") {
  for (const auto& entry : scenario_suite()) {
    const auto scene = generate(entry.spec);
    CAPTURE(entry.name);
    CHECK(validate_dump(scene.dump).empty());
    CHECK(scene.dump.manifest.timestep == 750);
    CHECK(scene.dump.manifest.normalization == Normalization::raw_scores);
    CHECK((scene.truth.target && scene.truth.background).count() == 0);
    CHECK((scene.truth.target || scene.truth.background).all());
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const auto spec = scenario("single-target", 1).spec;
  CHECK(bit_equal(generate(spec).dump, generate(spec).dump));
  auto other = spec;
  other.seed = 2;
  CHECK_FALSE(bit_equal(generate(spec).dump, generate(other).dump));
}

TEST_CASE("structured blocks follow the score plan") {
  SceneSpec s;
  s.noise_scale = 0.0;
  s.n_blocks = 3;
  const auto scene = generate(s);
  const auto& ti = scene.dump.blocks[0].text_image[0];
  const int target = s.n_stop;
  const int eos = target + 1 + s.n_distractors;
  const int w = s.grid_w;
  CHECK(ti(target, 5 * w + 5) == 4.0f);
  CHECK(ti(target, 0) == 0.0f);
  CHECK(ti.row(eos).isZero());
  // Every background patch belongs to exactly one of the 7 absorbers.
  for (int p = 0; p < s.grid_h * s.grid_w; ++p) {
    if (scene.truth.target(p / w, p % w)) continue;
    int owners = 0;
    for (int k = 0; k < s.n_stop; ++k) owners += ti(k, p) == 4.0f;
    for (int k = eos + 1; k < eos + 1 + s.n_magnet; ++k) owners += ti(k, p) == 4.0f;
    CHECK(owners == 1);
  }
}

TEST_CASE("diffuse prefix blocks are pure noise") {
  auto spec = scenario("all-diffuse-prefix", 3).spec;
  const auto scene = generate(spec);
  const auto& m = scene.dump.manifest;
  const int target = spec.n_stop;
  // 12 of 20 blocks are diffuse: the target row has no offset there.
  double diffuse_gap = 0.0;
  double structured_gap = 0.0;
  const int inside = spec.target.row * m.grid_w + spec.target.col;
  for (int b = 0; b < 12; ++b) {
    diffuse_gap += scene.dump.blocks[b].text_image[0](target, inside) -
                   scene.dump.blocks[b].text_image[0].row(target).mean();
  }
  for (int b = 12; b < 20; ++b) {
    structured_gap += scene.dump.blocks[b].text_image[0](target, inside) -
                      scene.dump.blocks[b].text_image[0].row(target).mean();
  }
  CHECK(structured_gap / 8 > 3.0);
  CHECK(std::abs(diffuse_gap / 12) < 1.5);
}

TEST_CASE("stop-gas and color-gas scenes produce the expected sinks") {
  for (std::uint64_t seed : {0u, 3u, 11u}) {
    const auto stop = generate(scenario("stop-gas", seed).spec);
    CHECK(detect_gas(stop.dump).gas_indices == stop.truth.expected_gas);
    CHECK(stop.truth.expected_gas == std::set<int>{0});

    const auto pair = generate_pair(scenario("color-gas-reassign", seed).spec);
    CHECK(detect_gas(pair.plain.dump).gas_indices == pair.plain.truth.expected_gas);
    CHECK(detect_gas(pair.magnet.dump).gas_indices == pair.magnet.truth.expected_gas);
    const int color = scenario("color-gas-reassign", seed).spec.n_stop;
    CHECK(pair.plain.truth.expected_gas == std::set<int>{color});
  }
}

TEST_CASE("color-gas-reassign seed 3 reassigns the sink") {
  const auto pair = generate_pair(scenario("color-gas-reassign", 3).spec);
  const auto gas = detect_gas(pair.plain.dump);
  const auto stats =
      redistribution_report(pair.plain.dump, pair.magnet.dump, pair.magnet.truth.background, gas);
  REQUIRE(stats.gas_reassigned.size() == 1);
  CHECK(stats.gas_reassigned[0].second);
}

TEST_CASE("paired dumps share the content rows") {
  const auto pair = generate_pair(scenario("magnet-vs-none", 4).spec);
  const int shared = pair.plain.dump.manifest.n_text_tokens;
  CHECK(pair.magnet.dump.manifest.n_text_tokens == shared + 5);
  for (std::size_t b = 0; b < pair.plain.dump.blocks.size(); ++b) {
    const auto& p = pair.plain.dump.blocks[b].text_image[1];
    const auto& m = pair.magnet.dump.blocks[b].text_image[1];
    CHECK(p == m.topRows(shared));
  }
}

TEST_CASE("magnet-vs-none pair separates the background") {
  const auto pair = generate_pair(scenario("magnet-vs-none", 0).spec);
  const auto stats = redistribution_report(pair.plain.dump, pair.magnet.dump,
                                           pair.magnet.truth.background,
                                           detect_gas(pair.plain.dump));
  CHECK(stats.magnet_background_share >= 0.8);
  CHECK(stats.peak_sharpness_magnet > stats.peak_sharpness_plain);
  const auto r = ground(pair.magnet.dump);
  CHECK(pair.magnet.truth.target(r.point_grid.row, r.point_grid.col));
}

TEST_CASE("groundtruth json") {
  const auto scene = generate(scenario("stop-gas", 2).spec);
  const auto text = groundtruth_json(scene.truth, "stop-gas", 2);
  CHECK(text.back() == '\n');
  const auto j = nlohmann::json::parse(text);
  CHECK(j["expected_gas"] == nlohmann::json::array({0}));
  CHECK(j["target"]["row"] == 5);
  CHECK(j["target"]["cols"] == 4);
  CHECK(j["scenario"] == "stop-gas");
  CHECK(j["seed"] == 2);
}
