#pragma once

// Sentence preprocessing: tokenization, coarse POS tagging and extraction of
// proper-noun/noun entity candidates (single tokens and maximal compounds).

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mmner/core.hpp"

namespace mmner {

enum class PosTag : int {
  PROPN = 0, NOUN, VERB, ADJ, ADV, PRON, DET, ADP, NUM, PUNCT, OTHER
};

inline constexpr std::size_t kNumPosTags = 11;

inline constexpr std::array<std::string_view, kNumPosTags> kPosTagNames{
    "PROPN", "NOUN", "VERB", "ADJ", "ADV", "PRON", "DET", "ADP", "NUM", "PUNCT", "OTHER"};

inline std::string_view to_string(PosTag t) { return kPosTagNames[static_cast<std::size_t>(t)]; }

inline std::optional<PosTag> parse_pos_tag(std::string_view s) {
  for (std::size_t i = 0; i < kNumPosTags; ++i)
    if (kPosTagNames[i] == s) return static_cast<PosTag>(i);
  return std::nullopt;
}

inline bool is_nominal(PosTag t) { return t == PosTag::PROPN || t == PosTag::NOUN; }

struct Token {
  std::string surface;
  PosTag pos = PosTag::OTHER;
  std::size_t index = 0;
};

struct Sentence {
  std::string id;
  std::vector<Token> tokens;
  std::string raw;
};

// (preceding tag, first span tag) pairs. The preceding slot has one extra
// value, BEGIN, for sentence-initial spans.
inline constexpr int kNgPosBegin = 0;
inline constexpr int kNumNgPosCodes = static_cast<int>((kNumPosTags + 1) * kNumPosTags);

inline int ng_pos_code(std::optional<PosTag> preceding, PosTag first) {
  int prev = preceding ? static_cast<int>(*preceding) + 1 : kNgPosBegin;
  return prev * static_cast<int>(kNumPosTags) + static_cast<int>(first);
}

inline std::string ng_pos_name(int code) {
  int prev = code / static_cast<int>(kNumPosTags);
  int first = code % static_cast<int>(kNumPosTags);
  std::string p = prev == kNgPosBegin ? "BEGIN" : std::string(kPosTagNames[prev - 1]);
  return p + "_" + std::string(kPosTagNames[first]);
}

struct EntityCandidate {
  std::string term;
  std::string sentence_id;
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  int ng_pos = 0;

  std::size_t length() const { return end - start + 1; }
  bool is_compound() const { return end > start; }
  bool operator==(const EntityCandidate&) const = default;
};

// ---------------------------------------------------------------------------
// Tokenization

namespace detail {

inline bool is_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }
inline bool is_word_char(unsigned char c) { return !std::isspace(c) && !is_punct(c); }

}  // namespace detail

/// Whitespace-and-punctuation tokenizer. A punctuation run becomes one token.
/// '#'/'@' directly before a word stay attached to it; apostrophes and hyphens
/// between word characters stay inside the word, as do '.' and ',' between digits.
inline Sentence tokenize(std::string_view raw, std::string id = {}) {
  Sentence s;
  s.id = std::move(id);
  s.raw = std::string(raw);
  auto push = [&](std::string_view piece) {
    s.tokens.push_back(Token{std::string(piece), PosTag::OTHER, s.tokens.size()});
  };
  for (const auto& chunk : split_ws(raw)) {
    const auto n = chunk.size();
    std::size_t i = 0;
    while (i < n) {
      auto c = static_cast<unsigned char>(chunk[i]);
      bool sigil = (c == '#' || c == '@') && i + 1 < n &&
                   detail::is_word_char(static_cast<unsigned char>(chunk[i + 1]));
      if (detail::is_word_char(c) || sigil) {
        std::size_t j = i + 1;
        while (j < n) {
          auto d = static_cast<unsigned char>(chunk[j]);
          if (detail::is_word_char(d)) {
            ++j;
            continue;
          }
          bool inner = j + 1 < n && detail::is_word_char(static_cast<unsigned char>(chunk[j + 1]));
          bool digits = std::isdigit(static_cast<unsigned char>(chunk[j - 1])) && inner &&
                        std::isdigit(static_cast<unsigned char>(chunk[j + 1]));
          if (inner && (d == '\'' || d == '-')) {
            ++j;
          } else if (digits && (d == '.' || d == ',')) {
            ++j;
          } else {
            break;
          }
        }
        push(std::string_view(chunk).substr(i, j - i));
        i = j;
      } else {
        std::size_t j = i + 1;
        while (j < n && detail::is_punct(static_cast<unsigned char>(chunk[j]))) {
          auto d = static_cast<unsigned char>(chunk[j]);
          if ((d == '#' || d == '@') && j + 1 < n &&
              detail::is_word_char(static_cast<unsigned char>(chunk[j + 1])))
            break;
          ++j;
        }
        push(std::string_view(chunk).substr(i, j - i));
        i = j;
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Tagging

/// Source-tagset → coarse-tag table, loaded from `source<TAB>coarse` lines.
class TagMapping {
 public:
  TagMapping() = default;

  void add(std::string source, PosTag coarse) { table_[std::move(source)] = coarse; }

  PosTag map(std::string_view source) const {
    auto it = table_.find(std::string(source));
    return it == table_.end() ? PosTag::OTHER : it->second;
  }

  std::size_t size() const { return table_.size(); }

  static TagMapping parse(std::istream& in) {
    TagMapping m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty() || line[0] == '#') continue;
      auto cols = split(line, '\t');
      std::optional<PosTag> coarse;
      if (cols.size() == 2) coarse = parse_pos_tag(trim(cols[1]));
      if (!coarse)
        throw ConfigError("tag mapping line " + std::to_string(lineno) +
                          ": expected source_tag<TAB>coarse_tag");
      m.add(trim(cols[0]), *coarse);
    }
    return m;
  }

  static TagMapping load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot read tag mapping " + path);
    return parse(in);
  }

  /// Penn Treebank → coarse tags. Mirrors data/penn_to_coarse.tsv.
  static TagMapping penn() {
    static constexpr std::pair<std::string_view, PosTag> rows[] = {
        {"NNP", PosTag::PROPN}, {"NNPS", PosTag::PROPN}, {"NN", PosTag::NOUN},
        {"NNS", PosTag::NOUN},  {"VB", PosTag::VERB},    {"VBD", PosTag::VERB},
        {"VBG", PosTag::VERB},  {"VBN", PosTag::VERB},   {"VBP", PosTag::VERB},
        {"VBZ", PosTag::VERB},  {"MD", PosTag::VERB},    {"JJ", PosTag::ADJ},
        {"JJR", PosTag::ADJ},   {"JJS", PosTag::ADJ},    {"RB", PosTag::ADV},
        {"RBR", PosTag::ADV},   {"RBS", PosTag::ADV},    {"WRB", PosTag::ADV},
        {"PRP", PosTag::PRON},  {"PRP$", PosTag::PRON},  {"WP", PosTag::PRON},
        {"WP$", PosTag::PRON},  {"DT", PosTag::DET},     {"PDT", PosTag::DET},
        {"WDT", PosTag::DET},   {"IN", PosTag::ADP},     {"TO", PosTag::ADP},
        {"CD", PosTag::NUM},    {".", PosTag::PUNCT},    {",", PosTag::PUNCT},
        {":", PosTag::PUNCT},   {"``", PosTag::PUNCT},   {"''", PosTag::PUNCT},
        {"-LRB-", PosTag::PUNCT}, {"-RRB-", PosTag::PUNCT}, {"CC", PosTag::OTHER},
        {"UH", PosTag::OTHER},  {"FW", PosTag::OTHER},   {"SYM", PosTag::OTHER},
        {"POS", PosTag::OTHER}, {"RP", PosTag::OTHER},   {"EX", PosTag::OTHER},
        {"LS", PosTag::OTHER},
    };
    TagMapping m;
    for (const auto& [src, tag] : rows) m.add(std::string(src), tag);
    return m;
  }

  /// Identity over the coarse tag names.
  static TagMapping coarse() {
    TagMapping m;
    for (std::size_t i = 0; i < kNumPosTags; ++i)
      m.add(std::string(kPosTagNames[i]), static_cast<PosTag>(i));
    return m;
  }

 private:
  std::map<std::string, PosTag, std::less<>> table_;
};

/// Anything that assigns one source tag per token. Tags are mapped onto the
/// coarse enumeration through mapping().
class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> tag_tokens(std::span<const std::string> tokens) const = 0;
  virtual const TagMapping& mapping() const = 0;
};

/// Deterministic lexicon + rule tagger emitting coarse tags directly.
///
/// Rule order: punctuation, numbers, closed-class lexicon, known proper-noun
/// phrases (longest match), capitalization/sigil/mixed-case cues, suffix rules,
/// and NOUN as the default.
class LexiconTagger final : public PosTagger {
 public:
  LexiconTagger() : mapping_(TagMapping::coarse()) {
    static constexpr std::pair<PosTag, std::string_view> closed[] = {
        {PosTag::DET, "the a an this that these those each every some any no all both"
                      " another either neither my your his her its our their"},
        {PosTag::ADP, "of in on at by for with from to into onto about over under"
                      " after before between through during without within near via"
                      " across against along around behind beyond toward towards upon"},
        {PosTag::PRON, "i me you he him she it we us they them myself yourself himself"
                       " herself itself ourselves themselves who whom whose what which"
                       " someone something everyone everything nobody nothing mine yours"
                       " hers ours theirs u ya"},
        {PosTag::VERB, "is am are was were be been being do does did done have has had"
                       " having will would shall should can could may might must go goes"
                       " went gone get gets got make makes made see saw seen say says said"
                       " know knew known think thought take took taken come came give gave"
                       " met meet meets visit visits visited love loves loved like likes"
                       " liked want wants wanted need needs needed work works worked live"
                       " lives lived buy buys bought watch watches watched play plays played"
                       " call calls called tell tells told feel feels felt find finds found"
                       " leave leaves left join joins joined sign signs signed flew fly"
                       " fly flies ate eat eats drove drive drives heard hear hears"
                       " spoke speak speaks wrote write writes read reads"},
        {PosTag::ADV, "not never always often once also just very too so then now here"
                      " there still already soon again ever yet really quite almost"
                      " today tonight tomorrow yesterday away back up down out off"},
        {PosTag::ADJ, "good bad great big small little old young long short high low"
                      " happy sad best better worse worst nice cool awesome first last"
                      " next other same own few many much more most less least"},
        {PosTag::OTHER, "and or but nor if because while although though than as whether"
                        " yes oh ah lol omg rt haha wow please"},
    };
    for (const auto& [tag, words] : closed)
      for (auto& w : split_ws(words)) closed_.emplace(std::move(w), tag);

    static constexpr std::string_view propn[] = {
        "paris", "hilton", "einstein", "new york", "london", "berlin", "microsoft",
        "google", "apple", "obama", "madonna", "twitter", "facebook", "amazon", "bonn",
        "germany", "france", "europe", "america", "rio de janeiro", "los angeles",
        "san francisco", "justin bieber", "lady gaga"};
    for (auto p : propn) add_proper_noun(p);
  }

  std::string name() const override { return "lexicon"; }
  const TagMapping& mapping() const override { return mapping_; }

  void add_word(std::string word, PosTag tag) { closed_[to_lower_ascii(word)] = tag; }

  void add_proper_noun(std::string_view phrase) {
    auto words = split_ws(to_lower_ascii(phrase));
    if (words.empty()) return;
    max_phrase_ = std::max(max_phrase_, words.size());
    std::string key;
    for (const auto& w : words) key += (key.empty() ? "" : " ") + w;
    propn_.insert(std::move(key));
  }

  /// Extends the lexicon from `word<TAB>COARSE_TAG` lines; PROPN entries may be
  /// multi-word phrases.
  void load_lexicon(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty() || line[0] == '#') continue;
      auto cols = split(line, '\t');
      std::optional<PosTag> tag;
      if (cols.size() == 2) tag = parse_pos_tag(trim(cols[1]));
      if (!tag) throw ConfigError("lexicon line " + std::to_string(lineno) + ": bad entry");
      if (*tag == PosTag::PROPN)
        add_proper_noun(cols[0]);
      else
        add_word(trim(cols[0]), *tag);
    }
  }

  std::vector<std::string> tag_tokens(std::span<const std::string> tokens) const override {
    std::vector<std::string> out(tokens.size());
    std::vector<std::string> lower(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) lower[i] = to_lower_ascii(tokens[i]);

    std::vector<bool> in_phrase(tokens.size(), false);
    for (std::size_t i = 0; i < tokens.size();) {
      std::size_t matched = 0;
      for (std::size_t len = std::min(max_phrase_, tokens.size() - i); len >= 1; --len) {
        std::string key;
        for (std::size_t k = i; k < i + len; ++k) key += (k == i ? "" : " ") + lower[k];
        if (propn_.count(key)) {
          matched = len;
          break;
        }
      }
      for (std::size_t k = i; k < i + matched; ++k) in_phrase[k] = true;
      i += matched ? matched : 1;
    }

    for (std::size_t i = 0; i < tokens.size(); ++i)
      out[i] = std::string(to_string(tag_one(tokens[i], lower[i], i, in_phrase[i])));
    return out;
  }

 private:
  PosTag tag_one(const std::string& tok, const std::string& low, std::size_t pos,
                 bool in_phrase) const {
    auto all_of = [&](auto pred) {
      return std::all_of(tok.begin(), tok.end(),
                         [&](char c) { return pred(static_cast<unsigned char>(c)); });
    };
    if (all_of([](unsigned char c) { return detail::is_punct(c); })) return PosTag::PUNCT;
    if (all_of([](unsigned char c) { return std::isdigit(c) || c == '.' || c == ','; }))
      return PosTag::NUM;
    if (in_phrase) return PosTag::PROPN;
    if (auto it = closed_.find(low); it != closed_.end()) return it->second;

    auto first = static_cast<unsigned char>(tok[0]);
    if (first == '#' || first == '@') return PosTag::PROPN;
    bool has_upper_inside = std::any_of(tok.begin() + 1, tok.end(), [](char c) {
      return std::isupper(static_cast<unsigned char>(c));
    });
    bool has_lower = std::any_of(tok.begin(), tok.end(), [](char c) {
      return std::islower(static_cast<unsigned char>(c));
    });
    if (std::isupper(first) && pos > 0) return PosTag::PROPN;
    if (has_upper_inside && has_lower) return PosTag::PROPN;

    auto ends = [&](std::string_view suf) {
      return low.size() > suf.size() + 2 && low.compare(low.size() - suf.size(), suf.size(), suf) == 0;
    };
    if (ends("ly")) return PosTag::ADV;
    if (ends("ing") || ends("ed")) return PosTag::VERB;
    for (auto suf : {"ous", "ful", "ive", "less", "able"})
      if (ends(suf)) return PosTag::ADJ;
    return PosTag::NOUN;
  }

  TagMapping mapping_;
  std::unordered_map<std::string, PosTag> closed_;
  std::unordered_set<std::string> propn_;
  std::size_t max_phrase_ = 1;
};

/// Runs the tagger and maps its output onto the coarse tagset.
inline Sentence tag_pos(Sentence sentence, const PosTagger& tagger) {
  std::vector<std::string> surfaces;
  surfaces.reserve(sentence.tokens.size());
  for (const auto& t : sentence.tokens) surfaces.push_back(t.surface);
  auto tags = tagger.tag_tokens(surfaces);
  if (tags.size() != surfaces.size())
    throw TaggerError("tagger '" + tagger.name() + "' returned " + std::to_string(tags.size()) +
                      " tags for " + std::to_string(surfaces.size()) + " tokens");
  for (std::size_t i = 0; i < tags.size(); ++i)
    sentence.tokens[i].pos = tagger.mapping().map(tags[i]);
  return sentence;
}

/// Singles for every PROPN/NOUN token, plus one compound per maximal run of
/// length >= 2, emitted right after that run's singles.
inline std::vector<EntityCandidate> extract_candidates(const Sentence& sentence) {
  std::vector<EntityCandidate> out;
  const auto& toks = sentence.tokens;
  auto preceding = [&](std::size_t i) -> std::optional<PosTag> {
    if (i == 0) return std::nullopt;
    return toks[i - 1].pos;
  };
  std::size_t i = 0;
  while (i < toks.size()) {
    if (!is_nominal(toks[i].pos)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < toks.size() && is_nominal(toks[j + 1].pos)) ++j;
    for (std::size_t k = i; k <= j; ++k)
      out.push_back({toks[k].surface, sentence.id, k, k, ng_pos_code(preceding(k), toks[k].pos)});
    if (j > i) {
      std::string term;
      for (std::size_t k = i; k <= j; ++k) term += (k == i ? "" : " ") + toks[k].surface;
      out.push_back({std::move(term), sentence.id, i, j, ng_pos_code(preceding(i), toks[i].pos)});
    }
    i = j + 1;
  }
  return out;
}

}  // namespace mmner
