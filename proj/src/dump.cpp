// SPDX-License-Identifier: Apache-2.0

#include "gaslens/dump.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gaslens/errors.hpp"
#include "gaslens/tensor_blob.hpp"

namespace gaslens {

using nlohmann::json;

std::string_view to_string(Normalization n) {
  return n == Normalization::raw_scores ? "raw_scores" : "row_softmax";
}

std::string_view to_string(TensorKind k) {
  return k == TensorKind::text_text ? "text_text" : "text_image";
}

Normalization parse_normalization(std::string_view s) {
  if (s == "raw_scores") return Normalization::raw_scores;
  if (s == "row_softmax") return Normalization::row_softmax;
  throw InputError("unknown normalization '" + std::string(s) + "'");
}

TensorKind parse_tensor_kind(std::string_view s) {
  if (s == "text_text") return TensorKind::text_text;
  if (s == "text_image") return TensorKind::text_image;
  throw InputError("unknown tensor kind '" + std::string(s) + "'");
}

std::string tensor_relative_path(int block, TensorKind kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "tensors/block_%04d_%s.atnd", block,
                std::string(to_string(kind)).c_str());
  return buf;
}

namespace {

std::vector<std::uint64_t> expected_shape(const Manifest& m, TensorKind kind) {
  const auto heads = static_cast<std::uint64_t>(m.n_heads);
  const auto t = static_cast<std::uint64_t>(m.n_text_tokens);
  const auto cols = kind == TensorKind::text_text ? t : static_cast<std::uint64_t>(m.n_patches());
  return {heads, t, cols};
}

std::string shape_string(const std::vector<std::uint64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

std::vector<TensorIndexEntry> standard_tensor_index(const Manifest& m) {
  std::vector<TensorIndexEntry> index;
  for (int b = 0; b < m.n_blocks; ++b) {
    for (auto kind : {TensorKind::text_text, TensorKind::text_image}) {
      index.push_back({b, kind, tensor_relative_path(b, kind), expected_shape(m, kind)});
    }
  }
  return index;
}

void finalize_manifest(Manifest& m) {
  m.n_text_tokens = static_cast<int>(m.tokens.size());
  m.tensor_index = standard_tensor_index(m);
}

// ---------------------------------------------------------------------------
// Manifest JSON

std::string manifest_to_json(const Manifest& m) {
  json tokens = json::array();
  for (const auto& t : m.tokens) {
    tokens.push_back({{"index", t.index},
                      {"text", t.text},
                      {"is_stop", t.is_stop},
                      {"is_magnet", t.is_magnet},
                      {"is_eos", t.is_eos},
                      {"in_noun_phrase", t.in_noun_phrase},
                      {"is_color", t.is_color}});
  }
  json index = json::array();
  for (const auto& e : m.tensor_index) {
    index.push_back({{"block", e.block},
                     {"kind", std::string(to_string(e.kind))},
                     {"relative_path", e.relative_path},
                     {"shape", e.shape}});
  }
  json j = {{"format_version", m.format_version},
            {"model_name", m.model_name},
            {"timestep", m.timestep},
            {"n_blocks", m.n_blocks},
            {"n_heads", m.n_heads},
            {"n_text_tokens", m.n_text_tokens},
            {"grid_h", m.grid_h},
            {"grid_w", m.grid_w},
            {"image_h", m.image_h},
            {"image_w", m.image_w},
            {"normalization", std::string(to_string(m.normalization))},
            {"tokens", tokens},
            {"tensor_index", index}};
  // nlohmann::json objects are std::map backed, so keys come out sorted.
  return j.dump(-1, ' ', false, json::error_handler_t::strict) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("manifest is not valid JSON: ") + e.what());
  }
  Manifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.model_name = j.at("model_name").get<std::string>();
    m.timestep = j.at("timestep").get<int>();
    m.n_blocks = j.at("n_blocks").get<int>();
    m.n_heads = j.at("n_heads").get<int>();
    m.n_text_tokens = j.at("n_text_tokens").get<int>();
    m.grid_h = j.at("grid_h").get<int>();
    m.grid_w = j.at("grid_w").get<int>();
    m.image_h = j.at("image_h").get<int>();
    m.image_w = j.at("image_w").get<int>();
    m.normalization = parse_normalization(j.at("normalization").get<std::string>());
    for (const auto& t : j.at("tokens")) {
      TokenEntry e;
      e.index = t.at("index").get<int>();
      e.text = t.at("text").get<std::string>();
      e.is_stop = t.at("is_stop").get<bool>();
      e.is_magnet = t.at("is_magnet").get<bool>();
      e.is_eos = t.at("is_eos").get<bool>();
      e.in_noun_phrase = t.at("in_noun_phrase").get<bool>();
      e.is_color = t.at("is_color").get<bool>();
      m.tokens.push_back(std::move(e));
    }
    for (const auto& t : j.at("tensor_index")) {
      TensorIndexEntry e;
      e.block = t.at("block").get<int>();
      e.kind = parse_tensor_kind(t.at("kind").get<std::string>());
      e.relative_path = t.at("relative_path").get<std::string>();
      e.shape = t.at("shape").get<std::vector<std::uint64_t>>();
      m.tensor_index.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("manifest field error: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_tensor(const std::vector<MatrixRf>& heads, const std::string& path, int n_heads,
                  Eigen::Index rows, Eigen::Index cols, bool row_softmax,
                  ValidationReport& report) {
  if (static_cast<int>(heads.size()) != n_heads) {
    report.push_back({path, "expected " + std::to_string(n_heads) + " heads, found " +
                                std::to_string(heads.size())});
    return;
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const auto& m = heads[h];
    const auto hpath = path + "[" + std::to_string(h) + "]";
    if (m.rows() != rows || m.cols() != cols) {
      report.push_back({hpath, "expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                                   ", found " + std::to_string(m.rows()) + "x" +
                                   std::to_string(m.cols())});
      continue;
    }
    bool reported_nonfinite = false;
    bool reported_range = false;
    bool reported_sum = false;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      double sum = 0.0;
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const float v = m(r, c);
        if (!std::isfinite(v)) {
          if (!reported_nonfinite) {
            report.push_back({hpath + "(" + std::to_string(r) + "," + std::to_string(c) + ")",
                              "non-finite value"});
            reported_nonfinite = true;
          }
          continue;
        }
        if (row_softmax && (v < 0.0f || v > 1.0f) && !reported_range) {
          report.push_back({hpath + "(" + std::to_string(r) + "," + std::to_string(c) + ")",
                            "normalization invariant violated: entry outside [0,1]"});
          reported_range = true;
        }
        sum += v;
      }
      if (row_softmax && !reported_nonfinite && !reported_sum &&
          std::abs(sum - 1.0) > kRowSumTolerance) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "normalization invariant violated: row sums to %.9g",
                      sum);
        report.push_back({hpath + "(" + std::to_string(r) + ",:)", buf});
        reported_sum = true;
      }
    }
  }
}

}  // namespace

ValidationReport validate_dump(const AttentionDump& dump) {
  ValidationReport report;
  const auto& m = dump.manifest;

  for (auto [name, value] : {std::pair<const char*, int>{"n_blocks", m.n_blocks},
                             {"n_heads", m.n_heads},
                             {"grid_h", m.grid_h},
                             {"grid_w", m.grid_w},
                             {"image_h", m.image_h},
                             {"image_w", m.image_w}}) {
    if (value <= 0) report.push_back({name, "must be positive"});
  }
  if (m.n_text_tokens <= 0) report.push_back({"n_text_tokens", "must be positive"});
  if (static_cast<int>(m.tokens.size()) != m.n_text_tokens) {
    report.push_back({"n_text_tokens", "is " + std::to_string(m.n_text_tokens) +
                                           " but tokens lists " +
                                           std::to_string(m.tokens.size())});
  }

  int eos_count = 0;
  bool seen_magnet = false;
  bool suffix_broken = false;
  for (std::size_t i = 0; i < m.tokens.size(); ++i) {
    const auto& t = m.tokens[i];
    if (t.index != static_cast<int>(i)) {
      report.push_back({"tokens[" + std::to_string(i) + "].index",
                        "token indices must be contiguous from 0"});
    }
    eos_count += t.is_eos;
    if (t.is_magnet) {
      seen_magnet = true;
    } else if (seen_magnet) {
      suffix_broken = true;
    }
  }
  if (eos_count > 1) report.push_back({"tokens", "multiple EOS tokens"});
  if (suffix_broken) report.push_back({"tokens", "magnets must form a suffix"});

  std::map<std::pair<int, TensorKind>, int> seen;
  for (std::size_t i = 0; i < m.tensor_index.size(); ++i) {
    const auto& e = m.tensor_index[i];
    const auto path = "tensor_index[" + std::to_string(i) + "]";
    if (e.block < 0 || e.block >= m.n_blocks) {
      report.push_back({path + ".block", "block " + std::to_string(e.block) + " out of range"});
      continue;
    }
    if (++seen[{e.block, e.kind}] == 2) {
      report.push_back({path, "duplicate entry for block " + std::to_string(e.block) + " " +
                                  std::string(to_string(e.kind))});
    }
    if (e.relative_path.empty()) report.push_back({path + ".relative_path", "empty path"});
    const auto want = expected_shape(m, e.kind);
    if (e.shape != want) {
      report.push_back({path + ".shape", "declared " + shape_string(e.shape) + ", expected " +
                                             shape_string(want)});
    }
  }
  for (int b = 0; b < m.n_blocks; ++b) {
    for (auto kind : {TensorKind::text_text, TensorKind::text_image}) {
      if (!seen.contains({b, kind})) {
        report.push_back({"tensor_index", "missing block " + std::to_string(b) + " " +
                                              std::string(to_string(kind))});
      }
    }
  }

  if (static_cast<int>(dump.blocks.size()) != m.n_blocks) {
    report.push_back({"blocks", "expected " + std::to_string(m.n_blocks) + " blocks, found " +
                                    std::to_string(dump.blocks.size())});
  }
  const bool row_softmax = m.normalization == Normalization::row_softmax;
  for (std::size_t b = 0; b < dump.blocks.size(); ++b) {
    const auto prefix = "blocks[" + std::to_string(b) + "]";
    check_tensor(dump.blocks[b].text_text, prefix + ".text_text", m.n_heads, m.n_text_tokens,
                 m.n_text_tokens, row_softmax, report);
    check_tensor(dump.blocks[b].text_image, prefix + ".text_image", m.n_heads, m.n_text_tokens,
                 m.n_patches(), row_softmax, report);
  }
  return report;
}

std::string describe(const ValidationReport& report) {
  std::ostringstream os;
  for (const auto& v : report) os << v.path << ": " << v.message << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Directory I/O

namespace {

std::vector<float> flatten(const std::vector<MatrixRf>& heads) {
  std::vector<float> flat;
  for (const auto& m : heads) flat.insert(flat.end(), m.data(), m.data() + m.size());
  return flat;
}

const std::vector<MatrixRf>& tensor_of(const BlockAttention& block, TensorKind kind) {
  return kind == TensorKind::text_text ? block.text_text : block.text_image;
}

std::vector<MatrixRf>& tensor_of(BlockAttention& block, TensorKind kind) {
  return kind == TensorKind::text_text ? block.text_text : block.text_image;
}

}  // namespace

void write_dump(const AttentionDump& dump, const std::filesystem::path& directory) {
  const auto report = validate_dump(dump);
  if (!report.empty()) {
    throw InputError("invariant violation at " + report.front().path + ": " +
                     report.front().message);
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory / "tensors", ec);
  if (ec) throw InputError("cannot create " + directory.string() + ": " + ec.message());

  for (const auto& e : dump.manifest.tensor_index) {
    const auto values = flatten(tensor_of(dump.blocks[e.block], e.kind));
    write_blob(directory / e.relative_path, e.shape, values);
  }
  std::ofstream out(directory / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write manifest in " + directory.string());
  out << manifest_to_json(dump.manifest);
  if (!out) throw InputError("manifest write failed in " + directory.string());
}

AttentionDump load_dump(const std::filesystem::path& directory, LoadOptions options) {
  std::ifstream in(directory / "manifest.json", std::ios::binary);
  if (!in) throw InputError("missing manifest.json in " + directory.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  AttentionDump dump;
  dump.manifest = manifest_from_json(text);
  const auto& m = dump.manifest;
  if (m.n_blocks < 0 || m.n_blocks > 1 << 16) throw InputError("implausible n_blocks");
  dump.blocks.resize(static_cast<std::size_t>(m.n_blocks));

  for (const auto& e : m.tensor_index) {
    const auto name = "block " + std::to_string(e.block) + " " + std::string(to_string(e.kind));
    if (e.block < 0 || e.block >= m.n_blocks) throw InputError(name + ": block out of range");
    if (e.shape.size() != 3) throw ShapeMismatch(name + ": declared shape must be 3-D");
    auto blob = read_blob(directory / e.relative_path);
    if (blob.dims != e.shape) {
      throw ShapeMismatch(name + ": manifest declares " + shape_string(e.shape) +
                          " but blob header says " + shape_string(blob.dims));
    }
    const auto heads = static_cast<Eigen::Index>(blob.dims[0]);
    const auto rows = static_cast<Eigen::Index>(blob.dims[1]);
    const auto cols = static_cast<Eigen::Index>(blob.dims[2]);
    auto& target = tensor_of(dump.blocks[e.block], e.kind);
    target.clear();
    for (Eigen::Index h = 0; h < heads; ++h) {
      const float* base = blob.values.data() + h * rows * cols;
      MatrixRf mat = Eigen::Map<const MatrixRf>(base, rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          if (!std::isfinite(mat(r, c))) {
            throw NonFiniteValue(name + ": non-finite value at head " + std::to_string(h) +
                                 ", row " + std::to_string(r) + ", col " + std::to_string(c));
          }
        }
      }
      target.push_back(std::move(mat));
    }
  }

  if (options.validate) {
    const auto report = validate_dump(dump);
    if (!report.empty()) {
      throw InputError("invalid dump " + directory.string() + ":\n" + describe(report));
    }
  }
  return dump;
}

bool bit_equal(const AttentionDump& a, const AttentionDump& b) {
  if (!(a.manifest == b.manifest) || a.blocks.size() != b.blocks.size()) return false;
  auto same = [](const std::vector<MatrixRf>& x, const std::vector<MatrixRf>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].rows() != y[i].rows() || x[i].cols() != y[i].cols()) return false;
      if (!bit_equal(std::span<const float>(x[i].data(), x[i].size()),
                     std::span<const float>(y[i].data(), y[i].size()))) {
        return false;
      }
    }
    return true;
  };
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (!same(a.blocks[i].text_text, b.blocks[i].text_text) ||
        !same(a.blocks[i].text_image, b.blocks[i].text_image)) {
      return false;
    }
  }
  return true;
}

}  // namespace gaslens
