#pragma once

// CoNLL gold corpora, token- and entity-level scoring, and k-fold
// cross-validation of the fusion tree over precomputed indicator vectors.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmner/core.hpp"
#include "mmner/indicators.hpp"
#include "mmner/preprocess.hpp"
#include "mmner/tree.hpp"

namespace mmner {

/// Fine-grained gold tag (BIO prefix already stripped) → NER class.
class GoldTagMapping {
 public:
  GoldTagMapping() = default;

  void add(std::string fine, NERClass c) { table_[to_lower_ascii(fine)] = c; }

  NERClass map(std::string_view fine) const {
    auto it = table_.find(to_lower_ascii(fine));
    return it == table_.end() ? NERClass::NONE : it->second;
  }

  const std::string& id() const { return id_; }

  /// Twitter NER fine types. Mirrors data/ritter_mapping.tsv.
  static GoldTagMapping ritter_default() {
    GoldTagMapping m;
    m.id_ = "ritter-default";
    m.add("person", NERClass::PER);
    m.add("musicartist", NERClass::PER);
    m.add("geo-loc", NERClass::LOC);
    m.add("facility", NERClass::LOC);
    m.add("company", NERClass::ORG);
    m.add("sportsteam", NERClass::ORG);
    m.add("product", NERClass::NONE);
    m.add("movie", NERClass::NONE);
    m.add("tvshow", NERClass::NONE);
    m.add("other", NERClass::NONE);
    m.add("per", NERClass::PER);
    m.add("loc", NERClass::LOC);
    m.add("org", NERClass::ORG);
    return m;
  }

  /// `fine_tag<TAB>CLASS` lines.
  static GoldTagMapping load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot read tag mapping " + path);
    GoldTagMapping m;
    m.id_ = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty() || line[0] == '#') continue;
      auto cols = split(line, '\t');
      std::optional<NERClass> c;
      if (cols.size() == 2) c = parse_ner_class(trim(cols[1]));
      if (!c) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected fine_tag<TAB>PER|LOC|ORG|NONE");
      m.add(trim(cols[0]), *c);
    }
    return m;
  }

 private:
  std::string id_ = "custom";
  std::map<std::string, NERClass> table_;
};

struct GoldSentence {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<NERClass> gold;
};

struct GoldCorpus {
  std::vector<GoldSentence> sentences;
  std::string path;
  std::string mapping_id;
  std::size_t malformed_lines = 0;
};

inline std::string strip_bio(std::string_view tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return std::string(tag.substr(2));
  return std::string(tag);
}

inline GoldCorpus parse_conll(std::istream& in, const GoldTagMapping& mapping, std::string path = {}) {
  GoldCorpus corpus;
  corpus.path = std::move(path);
  corpus.mapping_id = mapping.id();
  GoldSentence cur;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    cur.id = "s" + std::to_string(corpus.sentences.size());
    corpus.sentences.push_back(std::move(cur));
    cur = {};
  };
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto cols = split_ws(line);
    if (cols.empty()) {
      flush();
      continue;
    }
    if (cols.size() != 2) {
      ++corpus.malformed_lines;
      continue;
    }
    cur.tokens.push_back(cols[0]);
    cur.gold.push_back(cols[1] == "O" ? NERClass::NONE : mapping.map(strip_bio(cols[1])));
  }
  flush();
  return corpus;
}

inline GoldCorpus read_conll(const std::string& path, const GoldTagMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw IOError("cannot read gold file " + path);
  return parse_conll(in, mapping, path);
}

// ---------------------------------------------------------------------------
// Scoring

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct EvaluationReport {
  std::array<ClassMetrics, kNumClasses> per_class;  // indexed by NERClass
  ClassMetrics plo;                                 // unweighted mean over PER, LOC, ORG (P, R, F1)
  std::size_t folds = 1;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  bool entity_level = false;

  const ClassMetrics& operator[](NERClass c) const { return per_class[index_of(c)]; }
};

enum class ScoringMode { Token, Entity };

struct ConfusionCounts {
  std::array<std::size_t, kNumClasses> tp{}, fp{}, fn{};
  std::size_t sentences = 0, tokens = 0;

  void merge(const ConfusionCounts& o) {
    for (std::size_t k = 0; k < kNumClasses; ++k) tp[k] += o.tp[k], fp[k] += o.fp[k], fn[k] += o.fn[k];
    sentences += o.sentences;
    tokens += o.tokens;
  }
};

namespace detail {

struct Span {
  std::size_t start, end;
  NERClass cls;
  auto operator<=>(const Span&) const = default;
};

/// Maximal runs of one non-NONE class.
inline std::vector<Span> entity_spans(std::span<const NERClass> labels) {
  std::vector<Span> out;
  for (std::size_t i = 0; i < labels.size();) {
    if (labels[i] == NERClass::NONE) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < labels.size() && labels[j + 1] == labels[i]) ++j;
    out.push_back({i, j, labels[i]});
    i = j + 1;
  }
  return out;
}

}  // namespace detail

inline void count_sentence(std::span<const NERClass> pred, std::span<const NERClass> gold, ScoringMode mode,
                           ConfusionCounts& c) {
  ++c.sentences;
  c.tokens += gold.size();
  if (mode == ScoringMode::Token) {
    for (std::size_t t = 0; t < gold.size(); ++t) {
      auto p = index_of(pred[t]), g = index_of(gold[t]);
      if (p == g) {
        ++c.tp[p];
      } else {
        ++c.fp[p];
        ++c.fn[g];
      }
    }
    return;
  }
  auto ps = detail::entity_spans(pred), gs = detail::entity_spans(gold);
  for (const auto& s : ps)
    (std::find(gs.begin(), gs.end(), s) != gs.end() ? c.tp : c.fp)[index_of(s.cls)]++;
  for (const auto& s : gs)
    if (std::find(ps.begin(), ps.end(), s) == ps.end()) ++c.fn[index_of(s.cls)];
}

inline ClassMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassMetrics m;
  m.tp = tp, m.fp = fp, m.fn = fn;
  m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline EvaluationReport report_from_counts(const ConfusionCounts& c, std::size_t folds, ScoringMode mode) {
  EvaluationReport r;
  for (std::size_t k = 0; k < kNumClasses; ++k) r.per_class[k] = metrics_from_counts(c.tp[k], c.fp[k], c.fn[k]);
  for (auto cls : {NERClass::PER, NERClass::LOC, NERClass::ORG}) {
    const auto& m = r[cls];
    r.plo.precision += m.precision / 3;
    r.plo.recall += m.recall / 3;
    r.plo.f1 += m.f1 / 3;
    r.plo.tp += m.tp, r.plo.fp += m.fp, r.plo.fn += m.fn;
  }
  r.folds = folds;
  r.sentences = c.sentences;
  r.tokens = c.tokens;
  r.entity_level = mode == ScoringMode::Entity;
  return r;
}

/// Predicted labels per sentence, aligned with gold.sentences.
inline EvaluationReport score(const std::vector<std::vector<NERClass>>& pred, const GoldCorpus& gold,
                              ScoringMode mode = ScoringMode::Token) {
  if (pred.size() != gold.sentences.size())
    throw AlignmentError("prediction has " + std::to_string(pred.size()) + " sentences, gold has " +
                         std::to_string(gold.sentences.size()));
  ConfusionCounts c;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gold.sentences[s].gold.size())
      throw AlignmentError("sentence " + gold.sentences[s].id + ": " + std::to_string(pred[s].size()) +
                           " predicted vs " + std::to_string(gold.sentences[s].gold.size()) + " gold tokens");
    count_sentence(pred[s], gold.sentences[s].gold, mode, c);
  }
  return report_from_counts(c, 1, mode);
}

// ---------------------------------------------------------------------------
// Cross-validation

/// Everything the fusion tree needs about one sentence, computed once.
struct SentenceFeatures {
  std::size_t token_count = 0;
  std::vector<EntityCandidate> candidates;
  std::vector<IndicatorVector> vectors;  // aligned with candidates
};

/// Gold class of a candidate span: majority over its tokens, ties LOC < ORG < PER < NONE.
inline NERClass candidate_gold(const EntityCandidate& c, std::span<const NERClass> gold) {
  ClassCounts counts{};
  for (std::size_t t = c.start; t <= c.end; ++t) counts[index_of(gold[t])] += 1;
  return majority_class(counts);
}

inline std::vector<CandidatePrediction> predict_candidates(const DecisionTree* tree, const SentenceFeatures& f) {
  std::vector<CandidatePrediction> out;
  for (std::size_t c = 0; c < f.candidates.size(); ++c) {
    CandidatePrediction p;
    p.candidate = f.candidates[c];
    if (tree) {
      auto tp = tree->predict(f.vectors[c]);
      p.cls = tp.cls;
      p.distribution = tp.distribution;
      p.probability = tp.probability();
    } else {
      p.cls = NERClass::NONE;
      p.distribution[index_of(NERClass::NONE)] = 1.0;
      p.probability = 1.0;
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Sentence index → test fold, from a seeded shuffle; fold sizes differ by at most one.
inline std::vector<std::size_t> assign_folds(std::size_t n_sentences, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs folds >= 2, got " + std::to_string(folds));
  if (n_sentences < folds)
    throw ConfigError("cross-validation needs at least " + std::to_string(folds) + " sentences, got " +
                      std::to_string(n_sentences));
  std::vector<std::size_t> order(n_sentences);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<std::size_t> fold(n_sentences);
  for (std::size_t pos = 0; pos < order.size(); ++pos) fold[order[pos]] = pos % folds;
  return fold;
}

struct CrossValidationResult {
  EvaluationReport report;
  std::vector<std::vector<NERClass>> predictions;  // per sentence, from the fold that tested it
  std::vector<std::size_t> fold_of;
};

/// Only the fusion tree is retrained per fold; the image and text models are
/// fixed and already reflected in `features`.
inline CrossValidationResult cross_validate(const GoldCorpus& corpus, const std::vector<SentenceFeatures>& features,
                                            std::size_t folds, std::uint64_t seed, const TreeParams& params = {},
                                            ScoringMode mode = ScoringMode::Token) {
  if (features.size() != corpus.sentences.size())
    throw AlignmentError("feature list does not match corpus sentence count");
  CrossValidationResult res;
  res.fold_of = assign_folds(corpus.sentences.size(), folds, seed);
  res.predictions.resize(corpus.sentences.size());
  ConfusionCounts total;
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<IndicatorVector> xs;
    std::vector<NERClass> ys;
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
      if (res.fold_of[s] == k) continue;
      const auto& f = features[s];
      for (std::size_t c = 0; c < f.candidates.size(); ++c) {
        xs.push_back(f.vectors[c]);
        ys.push_back(candidate_gold(f.candidates[c], corpus.sentences[s].gold));
      }
    }
    std::optional<DecisionTree> tree;
    if (!xs.empty()) tree = train_fusion_tree(xs, ys, params);
    for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
      if (res.fold_of[s] != k) continue;
      const auto& gs = corpus.sentences[s];
      if (features[s].token_count != gs.gold.size())
        throw AlignmentError("sentence " + gs.id + ": feature token count differs from gold");
      auto ann = resolve_compounds(gs.id, gs.gold.size(),
                                   predict_candidates(tree ? &*tree : nullptr, features[s]));
      count_sentence(ann.labels, gs.gold, mode, total);
      res.predictions[s] = std::move(ann.labels);
    }
  }
  res.report = report_from_counts(total, folds, mode);
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline void write_report_table(std::ostream& out, const EvaluationReport& r) {
  auto row = [&](const char* name, const ClassMetrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-20s %9.4f %9.4f %9.4f\n", name, m.precision, m.recall, m.f1);
    out << buf;
  };
  out << (r.entity_level ? "entity-level" : "token-level") << " scores, " << r.folds << " fold(s), "
      << r.sentences << " sentences, " << r.tokens << " tokens\n";
  out << "NER Class            Precision    Recall F-measure\n";
  row("Person (PER)", r[NERClass::PER]);
  row("Location (LOC)", r[NERClass::LOC]);
  row("Organisation (ORG)", r[NERClass::ORG]);
  row("None", r[NERClass::NONE]);
  row("Average (PLO)", r.plo);
}

/// Flat tab-separated export, one row per class plus the PLO average.
inline void write_report_tsv(std::ostream& out, const EvaluationReport& r) {
  out << "class\tprecision\trecall\tf1\ttp\tfp\tfn\n";
  auto row = [&](const char* name, const ClassMetrics& m) {
    out << name << '\t' << format_real(m.precision) << '\t' << format_real(m.recall) << '\t'
        << format_real(m.f1) << '\t' << m.tp << '\t' << m.fp << '\t' << m.fn << '\n';
  };
  row("PER", r[NERClass::PER]);
  row("LOC", r[NERClass::LOC]);
  row("ORG", r[NERClass::ORG]);
  row("NONE", r[NERClass::NONE]);
  row("PLO", r.plo);
}

/// Gold CoNLL with the predicted class appended as a third column.
inline void write_conll_predictions(std::ostream& out, const GoldCorpus& gold,
                                    const std::vector<std::vector<NERClass>>& pred) {
  for (std::size_t s = 0; s < gold.sentences.size(); ++s) {
    const auto& gs = gold.sentences[s];
    for (std::size_t t = 0; t < gs.tokens.size(); ++t)
      out << gs.tokens[t] << '\t' << to_string(gs.gold[t]) << '\t' << to_string(pred[s][t]) << '\n';
    out << '\n';
  }
}

}  // namespace mmner
