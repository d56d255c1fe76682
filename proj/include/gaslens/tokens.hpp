// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gaslens/dump.hpp"

namespace gaslens {

struct GasReport;

/// Sorted token indices that survive a filter policy.
using KeptIndices = std::vector<int>;

class StopwordLexicon {
 public:
  /// The NLTK English list plus the tokenizer symbols "_", "," and ".".
  static StopwordLexicon default_lexicon();

  /// One entry per line; blank lines are skipped. Symbol entries ("_", ",", ".")
  /// go to the symbol set, everything else is lowercased into the word set.
  static StopwordLexicon from_file(const std::filesystem::path& path);

  StopwordLexicon(std::set<std::string> words, std::set<std::string> symbols);

  /// Case-insensitive. A single leading tokenizer marker ("_" or the
  /// sentencepiece "▁") is stripped when the raw token is not itself
  /// an entry.
  bool contains(std::string_view token) const;

  const std::set<std::string>& words() const { return words_; }
  const std::set<std::string>& symbols() const { return symbols_; }

 private:
  std::set<std::string> words_;
  std::set<std::string> symbols_;
};

/// Lowercased token with one leading tokenizer marker removed ("_a" -> "a").
/// A bare marker is returned unchanged.
std::string normalize_token(std::string_view token);

struct MagnetSpec {
  std::vector<std::string> magnet_tokens;
  /// When set, the last entry of magnet_tokens is an auxiliary color word.
  bool includes_color = false;

  static MagnetSpec default_spec();
  /// True when every non-color entry is a stop word of `lexicon`.
  bool consistent_with(const StopwordLexicon& lexicon) const;
};

struct FilterPolicy {
  bool drop_stop_words = false;
  bool drop_magnets = false;
  bool drop_eos = false;
  bool drop_gas = false;
  bool restrict_to_noun_phrase = false;

  /// Stop words, magnets and EOS dropped.
  static FilterPolicy grounding_default() { return {true, true, true, false, false}; }
};

/// Sets is_stop from the lexicon; every other flag is left untouched.
TokenTable classify_tokens(TokenTable table, const StopwordLexicon& lexicon);

/// Throws EmptyKeptSet when nothing survives. `gas` must be non-null iff
/// policy.drop_gas.
KeptIndices build_filter_set(const TokenTable& table, const FilterPolicy& policy,
                             const GasReport* gas = nullptr);

bool magnet_suffix_check(const TokenTable& table, const MagnetSpec& spec);

}  // namespace gaslens
