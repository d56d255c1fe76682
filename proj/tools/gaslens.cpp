// SPDX-License-Identifier: Apache-2.0

// gaslens command-line tool.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "gaslens/attention.hpp"
#include "gaslens/dump.hpp"
#include "gaslens/errors.hpp"
#include "gaslens/grounding.hpp"
#include "gaslens/image_io.hpp"
#include "gaslens/metrics.hpp"
#include "gaslens/rflow.hpp"
#include "gaslens/synth.hpp"
#include "gaslens/tokens.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gaslens;

namespace {

enum Exit { kOk = 0, kInternal = 1, kInput = 2, kDegenerate = 3 };

double g9(double v) { return round_g9(v); }

std::string pretty(const json& j) { return j.dump(2) + "\n"; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw InputError("cannot create output directory " + dir.string());
  }
}

/// --lexicon wins over GASLENS_LEXICON; with neither, the manifest flags stand.
std::optional<fs::path> lexicon_path(const std::string& flag) {
  if (!flag.empty()) return fs::path(flag);
  if (const char* env = std::getenv("GASLENS_LEXICON"); env && *env) return fs::path(env);
  return std::nullopt;
}

AttentionDump load_for_analysis(const std::string& dir, const std::string& lexicon) {
  if (dir.empty()) throw InputError("--dump is required");
  AttentionDump dump = load_dump(dir);
  if (auto path = lexicon_path(lexicon)) {
    dump.manifest.tokens =
        classify_tokens(std::move(dump.manifest.tokens), StopwordLexicon::from_file(*path));
  }
  return dump;
}

json indices_json(const std::set<int>& s) { return json(std::vector<int>(s.begin(), s.end())); }

json gas_json(const GasReport& gas) {
  json masses = json::array();
  for (Eigen::Index k = 0; k < gas.per_token_mass.size(); ++k) {
    masses.push_back(g9(gas.per_token_mass[k]));
  }
  json cv = json::array();
  for (Eigen::Index k = 0; k < gas.row_cv.size(); ++k) cv.push_back(g9(gas.row_cv[k]));
  const double mean = gas.per_token_mass.size() ? gas.per_token_mass.mean() : 0.0;
  return {{"indices", indices_json(gas.gas_indices)},
          {"masses", masses},
          {"tau", g9(gas.threshold_factor)},
          {"axis", std::string(to_string(gas.mass_axis))},
          {"mean_mass", g9(mean)},
          {"threshold", g9(gas.threshold_factor * mean)},
          {"row_cv", cv}};
}

// ---------------------------------------------------------------------------

struct Common {
  std::string dump;
  std::string out;
  std::string lexicon;
  bool json = false;
  int threads = 1;
};

struct GroundArgs {
  Common c;
  FilterPolicy policy;
  double tau = kDefaultGasFactor;
  std::string axis = "received";
  std::string blocks = "all";
  std::optional<double> drop_first;
  std::optional<double> entropy_below;
  std::string prior;
};

BlockPolicy block_policy(const GroundArgs& a) {
  if (a.drop_first) return BlockPolicy::drop_first(*a.drop_first);
  if (a.entropy_below) return BlockPolicy::entropy_below(*a.entropy_below);
  return BlockPolicy::parse(a.blocks);
}

int cmd_validate(const Common& c) {
  if (c.dump.empty()) throw InputError("--dump is required");
  const AttentionDump dump = load_dump(c.dump, LoadOptions{false});
  const ValidationReport report = validate_dump(dump);
  if (c.json) {
    json v = json::array();
    for (const auto& e : report) v.push_back({{"path", e.path}, {"message", e.message}});
    std::cout << pretty({{"valid", report.empty()}, {"violations", v}});
  } else if (report.empty()) {
    std::cout << "ok: " << dump.manifest.n_blocks << " blocks, " << dump.manifest.n_heads
              << " heads, " << dump.manifest.n_text_tokens << " tokens, "
              << dump.manifest.grid_h << "x" << dump.manifest.grid_w << " patches\n";
  } else {
    std::cerr << describe(report);
  }
  return report.empty() ? kOk : kInput;
}

int cmd_ground(const GroundArgs& a) {
  const AttentionDump dump = load_for_analysis(a.c.dump, a.c.lexicon);
  GroundingOptions opt;
  opt.policy = a.policy;
  opt.blocks = block_policy(a);
  opt.gas_factor = a.tau;
  opt.gas_axis = parse_mass_axis(a.axis);
  if (!a.prior.empty()) opt.prior = parse_prior_keyword(a.prior);
  opt.threads = a.c.threads;
  const GroundingResult r = ground(dump, opt);

  const json point = {{"row", r.point_grid.row},
                      {"col", r.point_grid.col},
                      {"x", g9(r.point_pixel.x)},
                      {"y", g9(r.point_pixel.y)}};
  json kept = json::array();
  for (int k : r.kept_tokens) {
    const auto& text = dump.manifest.tokens[static_cast<std::size_t>(k)].text;
    kept.push_back({{"index", k}, {"text", text}});
  }
  const json diagnostics = {
      {"kept_tokens", kept},
      {"gas", gas_json(r.gas)},
      {"blocks_used", r.blocks_used},
      {"block_policy", opt.blocks.describe()},
      {"prior", r.prior_applied ? json(*r.prior_applied) : json(nullptr)},
      {"peak_sharpness", g9(r.peak_sharpness)},
      {"policy",
       {{"drop_stop", a.policy.drop_stop_words},
        {"drop_magnets", a.policy.drop_magnets},
        {"drop_eos", a.policy.drop_eos},
        {"drop_gas", a.policy.drop_gas},
        {"noun_phrase", a.policy.restrict_to_noun_phrase}}}};

  if (!a.c.out.empty()) {
    const fs::path out(a.c.out);
    ensure_dir(out);
    write_pgm(out / "heatmap.pgm", heatmap_to_gray(r.heatmap));
    write_text_file(out / "heatmap.csv", heatmap_to_csv(r.heatmap));
    write_text_file(out / "point.json", pretty(point));
    write_text_file(out / "diagnostics.json", pretty(diagnostics));
  }
  if (a.c.json) {
    std::cout << pretty({{"point", point}, {"diagnostics", diagnostics}});
  } else {
    std::cout << "point row " << r.point_grid.row << " col " << r.point_grid.col << " (x "
              << format_g9(r.point_pixel.x) << ", y " << format_g9(r.point_pixel.y) << ")\n";
  }
  return kOk;
}

int cmd_gas(const GroundArgs& a) {
  const AttentionDump dump = load_for_analysis(a.c.dump, a.c.lexicon);
  const GasReport gas = detect_gas(dump, a.tau, parse_mass_axis(a.axis));
  const std::string text = pretty(gas_json(gas));
  if (!a.c.out.empty()) write_text_file(a.c.out, text);
  std::cout << text;
  return kOk;
}

int cmd_entropy(const Common& c) {
  const AttentionDump dump = load_for_analysis(c.dump, c.lexicon);
  const EntropyProfile p = block_entropy(dump);
  std::string text;
  if (c.json) {
    json rows = json::array();
    for (int b = 0; b < p.n_blocks(); ++b) {
      rows.push_back(
          {{"block", b}, {"mean", g9(p.per_block_mean[b])}, {"min", g9(p.per_block_min[b])}});
    }
    text = pretty({{"blocks", rows}, {"max_entropy", g9(p.max_entropy)}});
  } else {
    text = "block,mean,min\n";
    for (int b = 0; b < p.n_blocks(); ++b) {
      text += std::to_string(b) + "," + format_g9(p.per_block_mean[b]) + "," +
              format_g9(p.per_block_min[b]) + "\n";
    }
  }
  if (!c.out.empty()) write_text_file(c.out, text);
  std::cout << text;
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string points;
  std::string out;
  int tolerance = -1;
  int threads = 1;
  bool json = false;
};

std::map<std::string, fs::path> files_by_stem(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw InputError("not a directory: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) {
      out[e.path().stem().string()] = e.path();
    }
  }
  return out;
}

struct Sample {
  std::string id;
  BinaryMask pred;
  BinaryMask gt;
  std::optional<GridPoint> point;
  double iou = 0.0;
  double f = 0.0;
  bool hit = false;
};

std::optional<GridPoint> first_cell(const BinaryMask& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (m(r, c)) return GridPoint{static_cast<int>(r), static_cast<int>(c)};
    }
  }
  return std::nullopt;
}

GridPoint read_point(const fs::path& path) {
  try {
    const json j = json::parse(read_text_file(path));
    return {j.at("row").get<int>(), j.at("col").get<int>()};
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void score(Sample& s, int tolerance) {
  s.iou = iou(s.pred, s.gt);
  s.f = tolerance < 0 ? boundary_f(s.pred, s.gt) : boundary_f(s.pred, s.gt, tolerance);
  if (s.point) {
    const auto& p = *s.point;
    const bool inside = p.row >= 0 && p.col >= 0 && p.row < s.gt.rows() && p.col < s.gt.cols();
    s.hit = inside && point_accuracy(p, s.gt);
  } else {
    s.hit = !s.gt.any();
  }
}

int cmd_eval(const EvalArgs& a) {
  if (a.pred.empty() || a.gt.empty()) throw InputError("--pred and --gt are required");
  const auto preds = files_by_stem(a.pred, ".pgm");
  const auto gts = files_by_stem(a.gt, ".pgm");
  std::vector<std::string> orphans;
  for (const auto& [stem, path] : preds) {
    if (!gts.count(stem)) orphans.push_back(path.string());
  }
  for (const auto& [stem, path] : gts) {
    if (!preds.count(stem)) orphans.push_back(path.string());
  }
  if (!orphans.empty()) {
    std::string msg = "unpaired mask files:";
    for (const auto& o : orphans) msg += "\n  " + o;
    throw InputError(msg);
  }
  if (preds.empty()) throw InputError("no .pgm masks in " + a.pred);

  std::vector<Sample> samples;
  for (const auto& [stem, path] : preds) {
    Sample s;
    s.id = stem;
    s.pred = read_mask(path);
    s.gt = read_mask(gts.at(stem));
    if (s.pred.rows() != s.gt.rows() || s.pred.cols() != s.gt.cols()) {
      throw ShapeMismatch(stem + ": pred and gt masks differ in size");
    }
    if (!a.points.empty()) {
      s.point = read_point(fs::path(a.points) / (stem + ".json"));
    } else {
      s.point = first_cell(s.pred);
    }
    samples.push_back(std::move(s));
  }

  const int n = static_cast<int>(samples.size());
  const int workers = std::clamp(a.threads, 1, n);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int i = w; i < n; i += workers) {
          score(samples[static_cast<std::size_t>(i)], a.tolerance);
        }
      });
    }
  }

  std::vector<MaskPair> pairs;
  std::vector<double> js, fs_;
  int hits = 0;
  std::string csv = "id,iou,f,point_hit\n";
  for (const auto& s : samples) {
    pairs.emplace_back(s.pred, s.gt);
    js.push_back(s.iou);
    fs_.push_back(s.f);
    hits += s.hit;
    csv += s.id + "," + format_g9(s.iou) + "," + format_g9(s.f) + "," + (s.hit ? "1" : "0") + "\n";
  }
  const SequenceEval seq = summarize_sequence(js, fs_);
  const json summary = {{"n", n},
                        {"oIoU", g9(oiou(pairs))},
                        {"mIoU", g9(miou(pairs))},
                        {"J", g9(seq.j)},
                        {"F", g9(seq.f)},
                        {"J&F", g9(seq.j_and_f)},
                        {"PA", g9(static_cast<double>(hits) / n)}};
  if (!a.out.empty()) {
    ensure_dir(a.out);
    write_text_file(fs::path(a.out) / "per_sample.csv", csv);
    write_text_file(fs::path(a.out) / "summary.json", pretty(summary));
  }
  std::cout << (a.json ? pretty(summary) : csv);
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string scenario = "single-target";
  std::uint64_t seed = 0;
  std::string out;
  bool list = false;
  bool json = false;
};

void write_scene(const synth::Scene& scene, const fs::path& dir, const std::string& name,
                 std::uint64_t seed) {
  write_dump(scene.dump, dir);
  write_text_file(dir / "groundtruth.json", synth::groundtruth_json(scene.truth, name, seed));
}

int cmd_synth(const SynthArgs& a) {
  if (a.list) {
    for (const auto& s : synth::scenario_suite()) std::cout << s.name << "\n";
    return kOk;
  }
  if (a.out.empty()) throw InputError("--out is required");
  const synth::NamedScenario sc = synth::scenario(a.scenario, a.seed);
  const fs::path out(a.out);
  ensure_dir(out);
  json written = json::array();
  if (sc.paired) {
    const synth::ScenePair pair = synth::generate_pair(sc.spec);
    write_scene(pair.plain, out / "plain", sc.name, a.seed);
    write_scene(pair.magnet, out / "magnet", sc.name, a.seed);
    written = {(out / "plain").string(), (out / "magnet").string()};
  } else {
    write_scene(synth::generate(sc.spec), out, sc.name, a.seed);
    written = {out.string()};
  }
  if (a.json) {
    std::cout << pretty({{"scenario", sc.name}, {"seed", a.seed}, {"dumps", written}});
  } else {
    for (const auto& d : written) std::cout << d.get<std::string>() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// invert

struct InvertArgs {
  std::string fixture = "straight-line";
  int steps = 1000;
  double gamma = 1.0;
  double rate = 1.0;
  int dim = 4;
  std::uint64_t seed = 0;
  bool no_clip = false;
  std::string out;
  bool json = false;
};

int cmd_invert(const InvertArgs& a) {
  using Vec = rflow::Vector<double>;
  if (a.dim < 1) throw InputError("--dim must be >= 1");
  synth::NormalStream normal(a.seed);
  Vec x0(a.dim), y1(a.dim);
  for (int i = 0; i < a.dim; ++i) x0[i] = normal.next();
  for (int i = 0; i < a.dim; ++i) y1[i] = normal.next();

  rflow::InversionConfig<double> cfg;
  cfg.gamma = a.gamma;
  cfg.steps = a.steps;
  cfg.clip_endpoint = !a.no_clip;
  std::function<Vec(double)> analytic;
  if (a.fixture == "straight-line") {
    cfg.velocity = rflow::straight_line_velocity<double>(x0, y1);
    cfg.conditional = rflow::straight_line_conditional<double>();
    cfg.anchor = y1;
    analytic = [&](double t) -> Vec { return (1.0 - t) * x0 + t * y1; };
  } else if (a.fixture == "linear") {
    cfg.velocity = rflow::linear_velocity<double>(a.rate);
    cfg.conditional = rflow::zero_conditional<double>();
    cfg.anchor = Vec::Zero(a.dim);
    const double k = (1.0 - a.gamma) * a.rate;
    analytic = [&, k](double t) -> Vec { return x0 * std::exp(-k * t); };
  } else {
    throw InputError("unknown fixture '" + a.fixture + "' (straight-line, linear)");
  }
  try {
    rflow::validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const auto traj = rflow::invert(x0, cfg);
  std::string csv = "t";
  for (int i = 0; i < a.dim; ++i) csv += ",x" + std::to_string(i);
  csv += ",error\n";
  double endpoint_error = 0.0;
  for (const auto& s : traj) {
    csv += format_g9(s.t);
    for (int i = 0; i < a.dim; ++i) csv += "," + format_g9(s.x[i]);
    endpoint_error = (s.x - analytic(s.t)).norm();
    csv += "," + format_g9(endpoint_error) + "\n";
  }
  const double rec = rflow::reconstruction_error(x0, cfg, a.steps);
  const json report = {{"fixture", a.fixture},
                       {"steps", a.steps},
                       {"gamma", g9(a.gamma)},
                       {"t_end", g9(traj.back().t)},
                       {"endpoint_error", g9(endpoint_error)},
                       {"reconstruction_error", g9(rec)}};
  if (!a.out.empty()) write_text_file(a.out, csv);
  if (a.json) {
    std::cout << pretty(report);
  } else {
    std::cout << "reconstruction error " << format_g9(rec) << "\n";
  }
  return kOk;
}

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
  cmd->add_option("--dump", c.dump, "Dump directory")->required();
  if (with_out) cmd->add_option("--out", c.out, "Output path");
  cmd->add_option("--lexicon", c.lexicon, "Stop-word list, one entry per line");
  cmd->add_flag("--json", c.json, "JSON on stdout");
}

void add_gas_options(CLI::App* cmd, GroundArgs& a) {
  cmd->add_option("--tau", a.tau, "GAS threshold factor")->check(CLI::PositiveNumber);
  cmd->add_option("--axis", a.axis, "received or allocated")
      ->check(CLI::IsMember({"received", "allocated"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-free attention-map analysis and grounding"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common validate_args;
  auto* validate = app.add_subcommand("validate", "Check a dump directory");
  validate->add_option("--dump", validate_args.dump, "Dump directory")->required();
  validate->add_flag("--json", validate_args.json, "JSON on stdout");

  GroundArgs ground_args;
  auto* ground_cmd = app.add_subcommand("ground", "Heatmap and grounding point from a dump");
  add_common(ground_cmd, ground_args.c);
  ground_cmd->add_flag("--drop-stop", ground_args.policy.drop_stop_words);
  ground_cmd->add_flag("--drop-magnets", ground_args.policy.drop_magnets);
  ground_cmd->add_flag("--drop-eos", ground_args.policy.drop_eos);
  ground_cmd->add_flag("--drop-gas", ground_args.policy.drop_gas);
  ground_cmd->add_flag("--noun-phrase", ground_args.policy.restrict_to_noun_phrase);
  add_gas_options(ground_cmd, ground_args);
  auto* blocks = ground_cmd->add_option("--blocks", ground_args.blocks,
                                        "all, drop-first=F or entropy=THETA");
  auto* drop_first = ground_cmd->add_option("--drop-first", ground_args.drop_first);
  auto* entropy = ground_cmd->add_option("--entropy-below", ground_args.entropy_below);
  blocks->excludes(drop_first)->excludes(entropy);
  drop_first->excludes(entropy);
  ground_cmd->add_option("--prior", ground_args.prior, "Spatial prior keyword");
  ground_cmd->add_option("--threads", ground_args.c.threads)->check(CLI::PositiveNumber);

  GroundArgs gas_args;
  auto* gas = app.add_subcommand("gas", "Detect global attention sinks");
  add_common(gas, gas_args.c);
  add_gas_options(gas, gas_args);

  Common entropy_args;
  auto* entropy_cmd = app.add_subcommand("entropy", "Per-block attention entropy");
  add_common(entropy_cmd, entropy_args);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
  eval->add_option("--pred", eval_args.pred, "Predicted mask directory (.pgm)")->required();
  eval->add_option("--gt", eval_args.gt, "Ground-truth mask directory (.pgm)")->required();
  eval->add_option("--points", eval_args.points, "Directory of <stem>.json points");
  eval->add_option("--out", eval_args.out, "Output directory");
  eval->add_option("--tolerance", eval_args.tolerance, "Boundary tolerance in cells")
      ->check(CLI::NonNegativeNumber);
  eval->add_option("--threads", eval_args.threads)->check(CLI::PositiveNumber);
  eval->add_flag("--json", eval_args.json, "JSON summary on stdout");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic scenario dump");
  synth_cmd->add_option("--scenario", synth_args.scenario, "Scenario name");
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--out", synth_args.out, "Output directory");
  synth_cmd->add_flag("--list", synth_args.list, "List scenarios");
  synth_cmd->add_flag("--json", synth_args.json);

  InvertArgs invert_args;
  auto* invert = app.add_subcommand("invert", "Controlled inversion on a toy flow");
  invert->add_option("--fixture", invert_args.fixture, "straight-line or linear");
  invert->add_option("--steps", invert_args.steps);
  invert->add_option("--gamma", invert_args.gamma);
  invert->add_option("--rate", invert_args.rate, "Decay rate of the linear fixture");
  invert->add_option("--dim", invert_args.dim);
  invert->add_option("--seed", invert_args.seed);
  invert->add_flag("--no-clip", invert_args.no_clip, "Integrate up to t = 1");
  invert->add_option("--out", invert_args.out, "Trajectory CSV");
  invert->add_flag("--json", invert_args.json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInput;
  }

  try {
    if (*validate) return cmd_validate(validate_args);
    if (*ground_cmd) return cmd_ground(ground_args);
    if (*gas) return cmd_gas(gas_args);
    if (*entropy_cmd) return cmd_entropy(entropy_args);
    if (*eval) return cmd_eval(eval_args);
    if (*synth_cmd) return cmd_synth(synth_args);
    if (*invert) return cmd_invert(invert_args);
  } catch (const InputError& e) {
    std::cerr << "gaslens: " << e.what() << "\n";
    return kInput;
  } catch (const DegeneratePolicy& e) {
    std::cerr << "gaslens: " << e.what() << "\n";
    return kDegenerate;
  } catch (const DegenerateRow& e) {
    std::cerr << "gaslens: " << e.what() << "\n";
    return kInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "gaslens: " << e.what() << "\n";
    return kInput;
  } catch (const std::out_of_range& e) {
    std::cerr << "gaslens: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "gaslens: internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
