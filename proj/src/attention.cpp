// SPDX-License-Identifier: Apache-2.0

#include "gaslens/attention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "gaslens/errors.hpp"
#include "gaslens/reduce.hpp"

namespace gaslens {

std::string_view to_string(MassAxis axis) {
  return axis == MassAxis::received ? "received" : "allocated";
}

MassAxis parse_mass_axis(std::string_view s) {
  if (s == "received") return MassAxis::received;
  if (s == "allocated") return MassAxis::allocated;
  throw std::invalid_argument("unknown mass axis '" + std::string(s) + "'");
}

TokenHeatmapStack stack_from_dump(const AttentionDump& dump) {
  const auto& m = dump.manifest;
  TokenHeatmapStack stack;
  stack.provenance = m.normalization == Normalization::row_softmax ? Provenance::row_softmax
                                                                    : Provenance::raw_scores;
  stack.grid_h = m.grid_h;
  stack.grid_w = m.grid_w;
  stack.image_h = m.image_h;
  stack.image_w = m.image_w;
  stack.suppressed.assign(static_cast<std::size_t>(m.n_text_tokens), false);
  stack.values.reserve(dump.blocks.size());
  for (const auto& block : dump.blocks) {
    std::vector<Eigen::MatrixXd> heads;
    heads.reserve(block.text_image.size());
    for (const auto& h : block.text_image) heads.emplace_back(h.cast<double>());
    stack.values.push_back(std::move(heads));
  }
  return stack;
}

namespace {

// Softmax down each column over the active rows; inactive rows become 0.
void softmax_columns(Eigen::MatrixXd& m, const std::vector<bool>& suppressed) {
  for (Eigen::Index p = 0; p < m.cols(); ++p) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      if (!suppressed[k]) peak = std::max(peak, m(k, p));
    }
    double total = 0.0;
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      m(k, p) = suppressed[k] ? 0.0 : std::exp(m(k, p) - peak);
      total += m(k, p);
    }
    m.col(p) /= total;
  }
}

}  // namespace

TokenHeatmapStack token_softmax(const TokenHeatmapStack& stack, int threads) {
  if (stack.provenance == Provenance::token_softmax) {
    throw std::invalid_argument("stack is already token-softmax normalized");
  }
  if (std::all_of(stack.suppressed.begin(), stack.suppressed.end(), [](bool s) { return s; })) {
    throw AllTokensSuppressed();
  }
  TokenHeatmapStack out = stack;
  out.provenance = Provenance::token_softmax;
  const auto heads = static_cast<std::size_t>(stack.n_heads());
  parallel_for(static_cast<std::size_t>(stack.n_blocks()) * heads, threads, [&](std::size_t i) {
    softmax_columns(out.values[i / heads][i % heads], out.suppressed);
  });
  return out;
}

GasReport detect_gas(const AttentionDump& dump, double threshold_factor, MassAxis axis) {
  if (!(threshold_factor > 0.0)) throw std::invalid_argument("GAS threshold factor must be > 0");
  const int t = dump.manifest.n_text_tokens;
  GasReport report;
  report.threshold_factor = threshold_factor;
  report.mass_axis = axis;
  report.per_token_mass = Eigen::VectorXd::Zero(t);
  report.row_cv = Eigen::VectorXd::Zero(t);
  if (t == 0 || dump.blocks.empty()) return report;

  std::vector<double> gathered;
  for (int k = 0; k < t; ++k) {
    gathered.clear();
    for (const auto& block : dump.blocks) {
      for (const auto& h : block.text_text) {
        if (axis == MassAxis::received) {
          for (Eigen::Index q = 0; q < h.rows(); ++q) gathered.push_back(h(q, k));
        } else {
          for (Eigen::Index c = 0; c < h.cols(); ++c) gathered.push_back(h(k, c));
        }
      }
    }
    report.per_token_mass[k] = pairwise_mean<double>(gathered);
  }

  std::vector<double> masses(report.per_token_mass.data(), report.per_token_mass.data() + t);
  const double mean_mass = pairwise_mean<double>(masses);
  for (int k = 0; k < t; ++k) {
    if (report.per_token_mass[k] > threshold_factor * mean_mass) report.gas_indices.insert(k);
  }

  // Uniformity diagnostic on the averaged outgoing row.
  Eigen::MatrixXd mean_tt = Eigen::MatrixXd::Zero(t, t);
  int count = 0;
  for (const auto& block : dump.blocks) {
    for (const auto& h : block.text_text) {
      mean_tt += h.cast<double>();
      ++count;
    }
  }
  mean_tt /= std::max(count, 1);
  for (int k = 0; k < t; ++k) {
    const double mu = mean_tt.row(k).mean();
    const double var = (mean_tt.row(k).array() - mu).square().mean();
    report.row_cv[k] = mu != 0.0 ? std::sqrt(var) / std::abs(mu) : 0.0;
  }
  return report;
}

TokenHeatmapStack suppress_tokens(const TokenHeatmapStack& stack, const std::set<int>& indices,
                                  bool renormalize) {
  TokenHeatmapStack out = stack;
  for (int k : indices) {
    if (k < 0 || k >= stack.n_tokens()) {
      throw std::out_of_range("suppressed token " + std::to_string(k) + " out of range");
    }
    out.suppressed[k] = true;
  }
  if (std::all_of(out.suppressed.begin(), out.suppressed.end(), [](bool s) { return s; })) {
    throw AllTokensSuppressed();
  }
  if (renormalize && stack.provenance == Provenance::token_softmax) {
    for (auto& block : out.values) {
      for (auto& m : block) {
        for (Eigen::Index k = 0; k < m.rows(); ++k) {
          if (out.suppressed[k]) m.row(k).setZero();
        }
        const Eigen::RowVectorXd sums = m.colwise().sum();
        for (Eigen::Index p = 0; p < m.cols(); ++p) {
          if (sums[p] > 0.0) m.col(p) /= sums[p];
        }
      }
    }
  }
  return out;
}

Heatmap aggregate_heatmap(const TokenHeatmapStack& stack, const KeptIndices& kept,
                          const BlockSelection& blocks, int threads) {
  if (blocks.empty()) throw EmptyBlockSelection("explicit");
  std::vector<int> tokens;
  for (int k : kept) {
    if (k < 0 || k >= stack.n_tokens()) {
      throw std::out_of_range("kept token " + std::to_string(k) + " out of range");
    }
    if (!stack.suppressed[k]) tokens.push_back(k);
  }
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  if (tokens.empty()) throw EmptyKeptSet();

  BlockSelection order = blocks;
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  for (int b : order) {
    if (b < 0 || b >= stack.n_blocks()) {
      throw std::out_of_range("block " + std::to_string(b) + " out of range");
    }
  }

  Heatmap out;
  out.image_h = stack.image_h;
  out.image_w = stack.image_w;
  out.values = Eigen::MatrixXd::Zero(stack.grid_h, stack.grid_w);
  const auto terms = order.size() * static_cast<std::size_t>(stack.n_heads()) * tokens.size();
  const auto rows = static_cast<std::size_t>(stack.grid_h);

  // One task per grid row; each task owns its row of the output.
  parallel_for(rows, threads, [&](std::size_t r) {
    std::vector<double> gathered;
    gathered.reserve(terms);
    for (int c = 0; c < stack.grid_w; ++c) {
      const auto p = static_cast<Eigen::Index>(r) * stack.grid_w + c;
      gathered.clear();
      for (int b : order) {
        for (const auto& head : stack.values[b]) {
          for (int k : tokens) gathered.push_back(head(k, p));
        }
      }
      out.values(static_cast<Eigen::Index>(r), c) = pairwise_mean<double>(gathered);
    }
  });
  return out;
}

double row_entropy(const Eigen::Ref<const Eigen::VectorXd>& row, bool shift_by_min) {
  const auto n = row.size();
  if (n <= 1) return 0.0;
  Eigen::VectorXd p = row;
  if (shift_by_min) {
    p.array() -= p.minCoeff();
  } else if (p.minCoeff() < 0.0) {
    throw DegenerateRow("negative attention value in a normalized row");
  }
  const double total = p.sum();
  const double max_entropy = std::log(static_cast<double>(n));
  if (!(total > 0.0)) return max_entropy;
  p /= total;
  if ((p.array() == p[0]).all()) return max_entropy;
  double h = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return std::clamp(h, 0.0, max_entropy);
}

EntropyProfile block_entropy(const AttentionDump& dump) {
  const auto& m = dump.manifest;
  const int blocks = static_cast<int>(dump.blocks.size());
  const bool raw = m.normalization == Normalization::raw_scores;
  EntropyProfile profile;
  profile.per_block_mean = Eigen::VectorXd::Zero(blocks);
  profile.per_block_min = Eigen::VectorXd::Zero(blocks);
  profile.max_entropy = std::log(static_cast<double>(std::max(m.n_patches(), 1)));

  for (int b = 0; b < blocks; ++b) {
    const auto& heads = dump.blocks[b].text_image;
    if (heads.empty()) throw std::invalid_argument("block without text_image tensors");
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(heads.front().rows(), heads.front().cols());
    for (const auto& h : heads) mean += h.cast<double>();
    mean /= static_cast<double>(heads.size());

    std::vector<double> entropies(static_cast<std::size_t>(mean.rows()));
    for (Eigen::Index k = 0; k < mean.rows(); ++k) {
      entropies[k] = row_entropy(mean.row(k).transpose(), raw);
    }
    profile.per_block_mean[b] = pairwise_mean<double>(entropies);
    profile.per_block_min[b] = *std::min_element(entropies.begin(), entropies.end());
    // Rounding in the mean can push it a hair below the min.
    profile.per_block_mean[b] = std::max(profile.per_block_mean[b], profile.per_block_min[b]);
  }
  return profile;
}

BlockPolicy BlockPolicy::parse(std::string_view text) {
  auto number = [&](std::string_view prefix) {
    const std::string rest(text.substr(prefix.size()));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(rest, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != rest.size() || rest.empty()) {
      throw std::invalid_argument("bad block policy '" + std::string(text) + "'");
    }
    return v;
  };
  if (text == "all") return all();
  if (text.starts_with("drop-first=")) {
    const double f = number("drop-first=");
    if (!(f >= 0.0 && f < 1.0)) throw std::invalid_argument("drop-first fraction must be in [0,1)");
    return drop_first(f);
  }
  if (text.starts_with("entropy=")) {
    const double theta = number("entropy=");
    if (!(theta > 0.0)) throw std::invalid_argument("entropy threshold must be > 0");
    return entropy_below(theta);
  }
  throw std::invalid_argument("bad block policy '" + std::string(text) + "'");
}

std::string BlockPolicy::describe() const {
  char buf[64];
  switch (kind) {
    case Kind::all:
      return "all";
    case Kind::drop_first_fraction:
      std::snprintf(buf, sizeof(buf), "drop-first=%.9g", value);
      return buf;
    case Kind::entropy_threshold:
      std::snprintf(buf, sizeof(buf), "entropy=%.9g", value);
      return buf;
  }
  return "unknown";
}

BlockSelection all_blocks(int n_blocks) {
  BlockSelection s(static_cast<std::size_t>(std::max(n_blocks, 0)));
  for (int b = 0; b < n_blocks; ++b) s[b] = b;
  return s;
}

BlockSelection select_blocks(const EntropyProfile& profile, const BlockPolicy& policy) {
  const int n = profile.n_blocks();
  BlockSelection out;
  switch (policy.kind) {
    case BlockPolicy::Kind::all:
      out = all_blocks(n);
      break;
    case BlockPolicy::Kind::drop_first_fraction: {
      if (!(policy.value >= 0.0 && policy.value < 1.0)) {
        throw std::invalid_argument("drop-first fraction must be in [0,1)");
      }
      // The epsilon keeps decimal fractions like 0.3 * 10 from rounding up to 4.
      const int first = static_cast<int>(std::ceil(policy.value * n - 1e-9));
      for (int b = std::max(first, 0); b < n; ++b) out.push_back(b);
      break;
    }
    case BlockPolicy::Kind::entropy_threshold:
      if (!(policy.value > 0.0)) throw std::invalid_argument("entropy threshold must be > 0");
      for (int b = 0; b < n; ++b) {
        if (profile.per_block_min[b] < policy.value) out.push_back(b);
      }
      break;
  }
  if (out.empty()) throw EmptyBlockSelection(policy.describe());
  return out;
}

double peak_sharpness(const Heatmap& heatmap) {
  if (heatmap.values.size() == 0) return 0.0;
  const double mean = heatmap.values.mean();
  return mean != 0.0 ? heatmap.values.maxCoeff() / mean : 0.0;
}

namespace {

double kept_token_sharpness(const AttentionDump& dump, const TokenHeatmapStack& softmaxed) {
  const auto kept = build_filter_set(dump.manifest.tokens, FilterPolicy::grounding_default());
  return peak_sharpness(aggregate_heatmap(softmaxed, kept, all_blocks(softmaxed.n_blocks())));
}

}  // namespace

RedistributionStats redistribution_report(const AttentionDump& dump_plain,
                                          const AttentionDump& dump_magnet,
                                          const BinaryMask& background_mask,
                                          const GasReport& gas_plain) {
  const auto& pm = dump_plain.manifest;
  const auto& mm = dump_magnet.manifest;
  if (pm.grid_h != mm.grid_h || pm.grid_w != mm.grid_w) {
    throw ShapeMismatch("plain and magnet dumps have different patch grids");
  }
  if (background_mask.rows() != mm.grid_h || background_mask.cols() != mm.grid_w) {
    throw ShapeMismatch("background mask does not match the patch grid");
  }
  const auto background = background_mask.count();
  if (background == 0) throw std::invalid_argument("background mask is empty");

  const auto plain = token_softmax(stack_from_dump(dump_plain));
  const auto magnet = token_softmax(stack_from_dump(dump_magnet));

  // Token distribution per patch, averaged over blocks and heads.
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(mm.n_text_tokens, mm.n_patches());
  int count = 0;
  for (const auto& block : magnet.values) {
    for (const auto& h : block) {
      mean += h;
      ++count;
    }
  }
  mean /= std::max(count, 1);

  RedistributionStats stats;
  Eigen::Index magnet_wins = 0;
  for (int r = 0; r < mm.grid_h; ++r) {
    for (int c = 0; c < mm.grid_w; ++c) {
      if (!background_mask(r, c)) continue;
      Eigen::Index best = 0;
      mean.col(r * mm.grid_w + c).maxCoeff(&best);
      if (mm.tokens[best].is_magnet) ++magnet_wins;
    }
  }
  stats.magnet_background_share =
      static_cast<double>(magnet_wins) / static_cast<double>(background);

  const auto gas_magnet = detect_gas(dump_magnet, gas_plain.threshold_factor, gas_plain.mass_axis);
  for (int g : gas_plain.gas_indices) {
    stats.gas_reassigned.emplace_back(g, !gas_magnet.gas_indices.contains(g));
  }
  stats.peak_sharpness_plain = kept_token_sharpness(dump_plain, plain);
  stats.peak_sharpness_magnet = kept_token_sharpness(dump_magnet, magnet);
  return stats;
}

}  // namespace gaslens
