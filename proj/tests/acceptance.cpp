// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "fixtures.hpp"
#include "gaslens/attention.hpp"
#include "gaslens/dump.hpp"
#include "gaslens/grounding.hpp"
#include "gaslens/image_io.hpp"
#include "gaslens/metrics.hpp"
#include "gaslens/reduce.hpp"
#include "gaslens/rflow.hpp"
#include "gaslens/synth.hpp"
#include "oracles.hpp"

using namespace gaslens;
using namespace gaslens::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double limit_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Format round-trip

float random_finite(std::mt19937& rng) {
  // Clearing bit 30 keeps the exponent below 0xFF.
  return std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0xBFFFFFFFu);
}

AttentionDump random_format_dump(std::mt19937& rng, bool softmax, int min_tokens = 1) {
  std::uniform_int_distribution<int> blocks(1, 3), heads(1, 2), tokens(min_tokens, 6), side(1, 4);
  const int t = tokens(rng);
  auto d = blank_dump(blocks(rng), heads(rng), t, side(rng), side(rng),
                      softmax ? Normalization::row_softmax : Normalization::raw_scores);
  auto& toks = d.manifest.tokens;
  std::bernoulli_distribution coin(0.5);
  for (auto& tok : toks) {
    tok.is_stop = coin(rng);
    tok.in_noun_phrase = coin(rng);
    tok.is_color = coin(rng);
  }
  const int magnets = std::uniform_int_distribution<int>(0, t - 1)(rng);
  for (int k = t - magnets; k < t; ++k) toks[static_cast<std::size_t>(k)].is_magnet = true;
  if (coin(rng) && t - magnets > 0) toks[static_cast<std::size_t>(t - magnets - 1)].is_eos = true;

  std::uniform_real_distribution<float> positive(0.01f, 1.0f);
  auto fill = [&](MatrixRf& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (softmax) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = positive(rng);
        m.row(r) /= m.row(r).sum();
      } else {
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = random_finite(rng);
      }
    }
  };
  for (auto& b : d.blocks) {
    for (auto& m : b.text_text) fill(m);
    for (auto& m : b.text_image) fill(m);
  }
  return d;
}

using Corruption = std::function<void(AttentionDump&, std::mt19937&)>;

std::vector<std::pair<std::string, Corruption>> corruption_classes() {
  auto pick = [](std::mt19937& rng, std::size_t n) {
    return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
  };
  return {
      {"multiple EOS",
       [](AttentionDump& d, std::mt19937&) {
         for (auto& t : d.manifest.tokens) t.is_magnet = false;
         d.manifest.tokens[0].is_eos = true;
         d.manifest.tokens[1].is_eos = true;
       }},
      {"magnet not a suffix",
       [](AttentionDump& d, std::mt19937&) {
         d.manifest.tokens.front().is_magnet = true;
         d.manifest.tokens.back().is_magnet = false;
       }},
      {"non-contiguous token index",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& t = d.manifest.tokens[pick(rng, d.manifest.tokens.size())];
         t.index += 7;
       }},
      {"n_text_tokens mismatch",
       [](AttentionDump& d, std::mt19937&) { d.manifest.n_text_tokens++; }},
      {"missing tensor_index entry",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& idx = d.manifest.tensor_index;
         idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(pick(rng, idx.size())));
       }},
      {"duplicate tensor_index entry",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& idx = d.manifest.tensor_index;
         idx.push_back(idx[pick(rng, idx.size())]);
       }},
      {"declared shape",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& e = d.manifest.tensor_index[pick(rng, d.manifest.tensor_index.size())];
         e.shape.back() += 1;
       }},
      {"head matrix shape or count",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& b = d.blocks[pick(rng, d.blocks.size())];
         if (rng() & 1) {
           b.text_image.pop_back();
         } else {
           auto& m = b.text_text[pick(rng, b.text_text.size())];
           m.conservativeResize(m.rows(), m.cols() + 1);
           m.col(m.cols() - 1).setZero();
         }
       }},
      {"non-finite value",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& b = d.blocks[pick(rng, d.blocks.size())];
         auto& m = b.text_image[pick(rng, b.text_image.size())];
         const auto r = static_cast<Eigen::Index>(pick(rng, static_cast<std::size_t>(m.rows())));
         const auto c = static_cast<Eigen::Index>(pick(rng, static_cast<std::size_t>(m.cols())));
         m(r, c) = (rng() & 1) ? NAN : -INFINITY;
       }},
      {"row sum",
       [pick](AttentionDump& d, std::mt19937& rng) {
         auto& b = d.blocks[pick(rng, d.blocks.size())];
         auto& m = b.text_text[pick(rng, b.text_text.size())];
         m.row(static_cast<Eigen::Index>(pick(rng, static_cast<std::size_t>(m.rows())))) *= 0.9f;
       }},
  };
}

Outcome format_round_trip() {
  std::mt19937 rng(2024);
  const auto root = scratch_dir("acceptance_format");
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto d = random_format_dump(rng, i % 4 == 0);
    const auto dir = root / std::to_string(i);
    write_dump(d, dir);
    const auto back = load_dump(dir);
    exact += bit_equal(d, back) && validate_dump(back).empty();
    fs::remove_all(dir);
  }
  int caught = 0;
  std::string missed;
  const auto classes = corruption_classes();
  for (const auto& [name, corrupt] : classes) {
    bool all = true;
    for (int s = 0; s < 20; ++s) {
      auto d = random_format_dump(rng, name == "row sum" || s % 2 == 0, 2);
      corrupt(d, rng);
      all = all && !validate_dump(d).empty();
    }
    caught += all;
    if (!all) missed += " " + name;
  }
  const bool ok = exact == 1000 && caught == static_cast<int>(classes.size());
  return {ok, std::to_string(exact) + "/1000 bit-exact, " + std::to_string(caught) + "/" +
                  std::to_string(classes.size()) + " corruption classes caught" +
                  (missed.empty() ? "" : " (missed:" + missed + ")")};
}

// ---------------------------------------------------------------------------
// Token softmax

Outcome softmax_oracle() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> blocks(1, 3), heads(1, 2), tokens(1, 4), side(1, 3);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto d = random_dump(rng, blocks(rng), heads(rng), tokens(rng), side(rng), side(rng));
    const auto& m = d.manifest;
    const auto soft = token_softmax(stack_from_dump(d));
    for (int b = 0; b < m.n_blocks; ++b) {
      for (int h = 0; h < m.n_heads; ++h) {
        const auto& x = d.blocks[b].text_image[h];
        for (int p = 0; p < m.n_patches(); ++p) {
          double denom = 0.0;
          for (int k = 0; k < m.n_text_tokens; ++k) denom += std::exp(double(x(k, p)));
          for (int k = 0; k < m.n_text_tokens; ++k) {
            const double ref = std::exp(double(x(k, p))) / denom;
            worst = std::max(worst, std::abs(soft.values[b][h](k, p) - ref));
          }
        }
      }
    }
    std::vector<int> kept;
    for (int k = 0; k < m.n_text_tokens; ++k) {
      if (k == 0 || (rng() & 1)) kept.push_back(k);
    }
    std::vector<int> used;
    for (int b = 0; b < m.n_blocks; ++b) {
      if (b == m.n_blocks - 1 || (rng() & 1)) used.push_back(b);
    }
    const auto heat = aggregate_heatmap(soft, kept, used);
    const auto ref = oracle::softmax_aggregate(d, kept, used);
    worst = std::max(worst, (heat.values - ref).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-6, "max abs deviation " + fmt("%.3g", worst) + " (bound 1e-6)"};
}

// ---------------------------------------------------------------------------
// GAS

Outcome gas_detection() {
  long tp = 0, fp = 0, fn = 0;
  int exact = 0, total = 0;
  auto tally = [&](const std::set<int>& got, const std::set<int>& want) {
    ++total;
    exact += got == want;
    for (int k : got) (want.count(k) ? tp : fp)++;
    for (int k : want) fn += !got.count(k);
  };
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto stop = synth::generate(synth::scenario("stop-gas", seed).spec);
    tally(detect_gas(stop.dump).gas_indices, stop.truth.expected_gas);
    const auto pair = synth::generate_pair(synth::scenario("color-gas-reassign", seed).spec);
    tally(detect_gas(pair.plain.dump).gas_indices, pair.plain.truth.expected_gas);
    tally(detect_gas(pair.magnet.dump).gas_indices, pair.magnet.truth.expected_gas);
  }
  const double precision = tp + fp ? double(tp) / double(tp + fp) : 1.0;
  const double recall = tp + fn ? double(tp) / double(tp + fn) : 1.0;
  return {exact == total && precision == 1.0 && recall == 1.0,
          std::to_string(exact) + "/" + std::to_string(total) + " exact, precision " +
              fmt("%.3f", precision) + ", recall " + fmt("%.3f", recall)};
}

Outcome gas_reassignment() {
  int reassigned = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto pair = synth::generate_pair(synth::scenario("color-gas-reassign", seed).spec);
    const auto gas = detect_gas(pair.plain.dump);
    const auto stats = redistribution_report(pair.plain.dump, pair.magnet.dump,
                                             pair.magnet.truth.background, gas);
    bool all = !stats.gas_reassigned.empty();
    for (const auto& [k, r] : stats.gas_reassigned) all = all && r;
    reassigned += all;
  }
  return {reassigned == 50, std::to_string(reassigned) + "/50 seeds reassigned"};
}

// ---------------------------------------------------------------------------
// Grounding

Outcome magnet_redistribution() {
  int with = 0, without = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto pair = synth::generate_pair(synth::scenario("magnet-vs-none", seed).spec);
    const auto m = ground(pair.magnet.dump);
    const auto p = ground(pair.plain.dump);
    with += pair.magnet.truth.target(m.point_grid.row, m.point_grid.col);
    without += pair.plain.truth.target(p.point_grid.row, p.point_grid.col);
  }
  const double a = with / 50.0, b = without / 50.0;
  return {a >= 0.95 && b <= 0.70, "with magnets " + fmt("%.2f", a) + " (>= 0.95), without " +
                                      fmt("%.2f", b) + " (<= 0.70)"};
}

Outcome block_filtering() {
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto scene = synth::generate(synth::scenario("all-diffuse-prefix", seed).spec);
    GroundingOptions dropped;
    dropped.blocks = BlockPolicy::drop_first(0.6);
    agree += ground(scene.dump).point_grid == ground(scene.dump, dropped).point_grid;
  }
  return {agree >= 95, std::to_string(agree) + "/100 argmax agreement (>= 95)"};
}

// ---------------------------------------------------------------------------
// Metrics

BinaryMask from_bits(int rows, int cols, unsigned bits) {
  BinaryMask m(rows, cols);
  for (int i = 0; i < rows * cols; ++i) m(i / cols, i % cols) = (bits >> i) & 1u;
  return m;
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(31337);
  long checks = 0, mismatches = 0;
  for (int rows = 1; rows <= 3; ++rows) {
    for (int cols = 1; cols <= 3; ++cols) {
      const unsigned n = 1u << (rows * cols);
      std::uniform_int_distribution<unsigned> other(0, n - 1);
      for (unsigned bits = 0; bits < n; ++bits) {
        const auto a = from_bits(rows, cols, bits);
        std::vector<MaskPair> pairs;
        std::vector<double> ious;
        long inter = 0, uni = 0;
        for (int s = 0; s < 16; ++s) {
          const auto b = from_bits(rows, cols, other(rng));
          const auto c = oracle::count_cells(a, b);
          const double ref = oracle::iou(a, b);
          mismatches += iou(a, b) != ref;
          const auto rec = overlap(a, b);
          mismatches += rec.intersection != c.intersection || rec.union_ != c.union_;
          for (int r = 0; r < rows; ++r) {
            for (int q = 0; q < cols; ++q) mismatches += point_accuracy({r, q}, b) != b(r, q);
          }
          pairs.emplace_back(a, b);
          ious.push_back(ref);
          inter += c.intersection;
          uni += c.union_;
          checks += 3 + rows * cols;
        }
        const double oref = uni == 0 ? 1.0 : double(inter) / double(uni);
        mismatches += oiou(pairs) != oref;
        mismatches += miou(pairs) != pairwise_mean<double>(ious);
        checks += 2;
      }
    }
  }
  double worst = 0.0;
  std::uniform_int_distribution<int> side(1, 12), tol(0, 3);
  std::uniform_real_distribution<double> density(0.05, 0.95);
  for (int i = 0; i < 500; ++i) {
    const int h = side(rng), w = side(rng);
    auto random_mask = [&] {
      std::bernoulli_distribution on(density(rng));
      BinaryMask m(h, w);
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) m(r, c) = on(rng);
      }
      return m;
    };
    const auto a = random_mask();
    const auto b = random_mask();
    const int t = tol(rng);
    worst = std::max(worst, std::abs(boundary_f(a, b, t) - oracle::boundary_f(a, b, t)));
  }
  return {mismatches == 0 && worst <= 1e-9,
          std::to_string(mismatches) + " mismatches in " + std::to_string(checks) +
              " exact checks; boundary F max deviation " + fmt("%.3g", worst) + " (bound 1e-9)"};
}

// ---------------------------------------------------------------------------
// Entropy

Outcome entropy_bounds() {
  std::mt19937_64 rng(8);
  std::mt19937 rng32(8);
  std::uniform_int_distribution<int> side(1, 6);
  int violations = 0;
  double low = INFINITY, high_gap = INFINITY;
  for (int i = 0; i < 200; ++i) {
    AttentionDump d = i % 2 == 0 ? random_dump(rng, 2, 2, 4, side(rng), side(rng))
                                 : random_format_dump(rng32, true);
    const auto prof = block_entropy(d);
    const double ln_p = std::log(double(d.manifest.n_patches()));
    for (int b = 0; b < prof.n_blocks(); ++b) {
      for (double e : {prof.per_block_mean[b], prof.per_block_min[b]}) {
        violations += !(e >= 0.0 && e <= ln_p);
        low = std::min(low, e);
        high_gap = std::min(high_gap, ln_p - e);
      }
    }
  }
  double uniform_dev = 0.0;
  for (int gh = 1; gh <= 5; ++gh) {
    for (int gw = 1; gw <= 5; ++gw) {
      for (auto norm : {Normalization::row_softmax, Normalization::raw_scores}) {
        auto d = norm == Normalization::row_softmax ? uniform_dump(3, 2, 3, gh, gw)
                                                    : blank_dump(3, 2, 3, gh, gw);
        const auto prof = block_entropy(d);
        const double ln_p = std::log(double(gh * gw));
        uniform_dev = std::max(uniform_dev, (prof.per_block_mean.array() - ln_p).abs().maxCoeff());
        uniform_dev = std::max(uniform_dev, (prof.per_block_min.array() - ln_p).abs().maxCoeff());
      }
    }
  }
  return {violations == 0 && uniform_dev <= 1e-9,
          std::to_string(violations) + " bound violations over 200 dumps; uniform |H - ln P| " +
              fmt("%.3g", uniform_dev) + " (bound 1e-9)"};
}

// ---------------------------------------------------------------------------
// Inversion

Outcome inversion_fixture() {
  using Vec = rflow::Vector<double>;
  double worst_error = 0.0, ratio_lo = INFINITY, ratio_hi = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    synth::NormalStream normal(seed);
    Vec x0(4), y1(4);
    for (int i = 0; i < 4; ++i) x0[i] = normal.next();
    for (int i = 0; i < 4; ++i) y1[i] = normal.next();
    rflow::InversionConfig<double> cfg;
    cfg.gamma = 1.0;
    cfg.steps = 1000;
    cfg.velocity = rflow::straight_line_velocity<double>(x0, y1);
    cfg.conditional = rflow::straight_line_conditional<double>();
    cfg.anchor = y1;
    const double e1000 = rflow::reconstruction_error(x0, cfg, 1000);
    const double e500 = rflow::reconstruction_error(x0, cfg, 500);
    worst_error = std::max(worst_error, e1000);
    ratio_lo = std::min(ratio_lo, e500 / e1000);
    ratio_hi = std::max(ratio_hi, e500 / e1000);
  }
  return {worst_error < 5e-2 && ratio_lo >= 1.5 && ratio_hi <= 2.5,
          "max error " + fmt("%.3g", worst_error) + " (< 5e-2), ratio in [" +
              fmt("%.4f", ratio_lo) + ", " + fmt("%.4f", ratio_hi) + "] (within [1.5, 2.5])"};
}

// ---------------------------------------------------------------------------
// CLI determinism

Outcome cli_determinism() {
  const auto root = scratch_dir("acceptance_cli");
  std::vector<std::string> failures;
  auto ok = [&](const CliResult& r, const std::string& what) {
    if (r.code != 0) failures.push_back(what + " exited " + std::to_string(r.code));
  };

  for (const char* run : {"a", "b"}) {
    ok(run_cli({"synth", "--scenario", "single-target", "--seed", "1", "--out",
                (root / "synth" / run).string()}),
       "synth");
    ok(run_cli({"synth", "--scenario", "magnet-vs-none", "--seed", "2", "--out",
                (root / "pair" / run).string()}),
       "synth pair");
  }
  if (!same_tree(root / "synth" / "a", root / "synth" / "b")) failures.push_back("synth differs");
  if (!same_tree(root / "pair" / "a", root / "pair" / "b")) failures.push_back("pair differs");

  const auto dump = (root / "synth" / "a").string();
  std::vector<std::string> outs;
  for (const auto& [name, threads] : std::vector<std::pair<std::string, std::string>>{
           {"g1a", "1"}, {"g1b", "1"}, {"g4", "4"}, {"g7", "7"}}) {
    const auto r = run_cli({"ground", "--dump", dump, "--drop-gas", "--blocks", "drop-first=0.25",
                            "--prior", "center", "--threads", threads, "--json", "--out",
                            (root / name).string()});
    ok(r, "ground");
    outs.push_back(r.out);
  }
  for (const char* name : {"g1b", "g4", "g7"}) {
    if (!same_tree(root / "g1a", root / name)) failures.push_back(std::string("ground ") + name);
  }
  for (const auto& o : outs) {
    if (o != outs.front()) failures.push_back("ground stdout differs");
  }

  fs::create_directories(root / "pred");
  fs::create_directories(root / "gt");
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto scene = synth::generate(synth::scenario("multi-distractor", seed).spec);
    const auto heat = ground(scene.dump).heatmap.values;
    const BinaryMask pred = (heat.array() > heat.mean()).eval();
    const auto stem = "sample_" + std::to_string(seed);
    write_mask(root / "pred" / (stem + ".pgm"), pred);
    write_mask(root / "gt" / (stem + ".pgm"), scene.truth.target);
  }
  for (const auto& [name, threads] : std::vector<std::pair<std::string, std::string>>{
           {"e1a", "1"}, {"e1b", "1"}, {"e3", "3"}, {"e8", "8"}}) {
    ok(run_cli({"eval", "--pred", (root / "pred").string(), "--gt", (root / "gt").string(),
                "--threads", threads, "--out", (root / name).string()}),
       "eval");
  }
  for (const char* name : {"e1b", "e3", "e8"}) {
    if (!same_tree(root / "e1a", root / name)) failures.push_back(std::string("eval ") + name);
  }

  std::string detail = failures.empty() ? "ground, synth and eval byte-identical across runs "
                                          "and thread counts 1/3/4/7/8"
                                        : "";
  for (const auto& f : failures) detail += f + "; ";
  return {failures.empty(), detail};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"format round-trip and corruption detection", 30, format_round_trip},
      {"token-softmax oracle", 10, softmax_oracle},
      {"GAS detection on stop-gas and color-gas-reassign", 20, gas_detection},
      {"GAS reassignment", 0, gas_reassignment},
      {"magnet redistribution", 0, magnet_redistribution},
      {"block filtering on a diffuse prefix", 0, block_filtering},
      {"metrics oracle", 60, metrics_oracle},
      {"entropy bounds", 0, entropy_bounds},
      {"inversion fixture", 5, inversion_fixture},
      {"CLI determinism", 0, cli_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2fs", secs);
    if (c.limit_s > 0) {
      timing += " (limit " + fmt("%.0fs", c.limit_s) + ")";
      if (secs >= c.limit_s) o.pass = false;
    }
    failed += !o.pass;
    std::printf("%s  %s: %s [%s]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
