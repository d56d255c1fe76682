// SPDX-License-Identifier: Apache-2.0

#include "gaslens/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <stdexcept>

#include "gaslens/attention.hpp"
#include "gaslens/errors.hpp"

namespace gaslens {

namespace {

// NLTK English stop words, in NLTK order.
constexpr std::string_view kDefaultWords[] = {
    "i",         "me",       "my",      "myself",  "we",         "our",     "ours",
    "ourselves", "you",      "your",    "yours",   "yourself",   "yourselves", "he",
    "him",       "his",      "himself", "she",     "her",        "hers",    "herself",
    "it",        "its",      "itself",  "they",    "them",       "their",   "theirs",
    "themselves", "what",    "which",   "who",     "whom",       "this",    "that",
    "these",     "those",    "am",      "is",      "are",        "was",     "were",
    "be",        "been",     "being",   "have",    "has",        "had",     "having",
    "do",        "does",     "did",     "doing",   "a",          "an",      "the",
    "and",       "but",      "if",      "or",      "because",    "as",      "until",
    "while",     "of",       "at",      "by",      "for",        "with",    "about",
    "against",   "between",  "into",    "through", "during",     "before",  "after",
    "above",     "below",    "to",      "from",    "up",         "down",    "in",
    "out",       "on",       "off",     "over",    "under",      "again",   "further",
    "then",      "once",     "here",    "there",   "when",       "where",   "why",
    "how",       "all",      "any",     "both",    "each",       "few",     "more",
    "most",      "other",    "some",    "such",    "no",         "nor",     "not",
    "only",      "own",      "same",    "so",      "than",       "too",     "very",
    "s",         "t",        "can",     "will",    "just",       "don",     "should",
    "now"};

constexpr std::string_view kDefaultSymbols[] = {"_", ",", "."};

constexpr std::string_view kSentencePieceMarker = "\xE2\x96\x81";  // U+2581

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool is_symbol_entry(std::string_view s) {
  return std::find(std::begin(kDefaultSymbols), std::end(kDefaultSymbols), s) !=
         std::end(kDefaultSymbols);
}

}  // namespace

std::string normalize_token(std::string_view token) {
  if (token.size() > 1 && token.front() == '_') {
    token.remove_prefix(1);
  } else if (token.size() > kSentencePieceMarker.size() &&
             token.substr(0, kSentencePieceMarker.size()) == kSentencePieceMarker) {
    token.remove_prefix(kSentencePieceMarker.size());
  } else if (token == kSentencePieceMarker) {
    return "_";
  }
  return lowercase(token);
}

StopwordLexicon::StopwordLexicon(std::set<std::string> words, std::set<std::string> symbols)
    : words_(std::move(words)), symbols_(std::move(symbols)) {}

StopwordLexicon StopwordLexicon::default_lexicon() {
  std::set<std::string> words(std::begin(kDefaultWords), std::end(kDefaultWords));
  std::set<std::string> symbols(std::begin(kDefaultSymbols), std::end(kDefaultSymbols));
  return {std::move(words), std::move(symbols)};
}

StopwordLexicon StopwordLexicon::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read lexicon " + path.string());
  std::set<std::string> words;
  std::set<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    const auto entry = trim(line);
    if (entry.empty()) continue;
    if (is_symbol_entry(entry)) {
      symbols.emplace(entry);
    } else {
      words.insert(lowercase(entry));
    }
  }
  return {std::move(words), std::move(symbols)};
}

bool StopwordLexicon::contains(std::string_view token) const {
  const auto raw = lowercase(token);
  if (symbols_.contains(raw) || words_.contains(raw)) return true;
  const auto stripped = normalize_token(token);
  return symbols_.contains(stripped) || words_.contains(stripped);
}

MagnetSpec MagnetSpec::default_spec() { return {{"_", "with", "to", "and", "pink"}, true}; }

bool MagnetSpec::consistent_with(const StopwordLexicon& lexicon) const {
  const auto n = magnet_tokens.size() - (includes_color && !magnet_tokens.empty() ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!lexicon.contains(magnet_tokens[i])) return false;
  }
  return true;
}

TokenTable classify_tokens(TokenTable table, const StopwordLexicon& lexicon) {
  for (auto& t : table) t.is_stop = lexicon.contains(t.text);
  return table;
}

KeptIndices build_filter_set(const TokenTable& table, const FilterPolicy& policy,
                             const GasReport* gas) {
  if (policy.drop_gas && gas == nullptr) {
    throw std::invalid_argument("drop_gas requires a GAS report");
  }
  KeptIndices kept;
  for (const auto& t : table) {
    if (policy.restrict_to_noun_phrase && !t.in_noun_phrase) continue;
    if (policy.drop_stop_words && t.is_stop) continue;
    if (policy.drop_magnets && t.is_magnet) continue;
    if (policy.drop_eos && t.is_eos) continue;
    if (policy.drop_gas && gas->gas_indices.contains(t.index)) continue;
    kept.push_back(t.index);
  }
  if (kept.empty()) throw EmptyKeptSet();
  std::sort(kept.begin(), kept.end());
  return kept;
}

bool magnet_suffix_check(const TokenTable& table, const MagnetSpec& spec) {
  const auto n = spec.magnet_tokens.size();
  if (n > table.size()) return false;
  const auto offset = table.size() - n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = table[offset + i];
    if (!t.is_magnet) return false;
    if (normalize_token(t.text) != normalize_token(spec.magnet_tokens[i])) return false;
  }
  return true;
}

}  // namespace gaslens
