#pragma once

// Per-candidate indicator record: position, POS bigram, five image indicators
// and four snippet indicators, plus evidence counts.

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mmner/core.hpp"
#include "mmner/preprocess.hpp"
#include "mmner/text.hpp"
#include "mmner/vision.hpp"

namespace mmner {

struct CvIndicators {
  double loc = 0, per = 0, org = 0;
  int dist = 0;
  int plc = 0;
  bool operator==(const CvIndicators&) const = default;
};

struct TextIndicators {
  double loc = 0, per = 0, org = 0;
  int dist = 0;
  bool operator==(const TextIndicators&) const = default;
};

struct IndicatorVector {
  std::size_t i = 0;  // sentence index (metadata only)
  std::size_t j = 0;  // first token index of the candidate
  std::string term;
  int ng_pos = 0;
  CvIndicators cv;
  TextIndicators text;
  std::size_t n_images = 0;
  std::size_t n_snippets = 0;
  bool operator==(const IndicatorVector&) const = default;
};

namespace detail {

/// Largest minus second largest of three values.
template <typename T>
T top_two_gap(T a, T b, T c) {
  std::array<T, 3> v{a, b, c};
  std::sort(v.begin(), v.end());
  return v[2] - v[1];
}

}  // namespace detail

/// C_k = (sum over images of the +1/-1 verdict for k) / n; C_dist is the gap
/// between the two largest raw sums; C_plc sums every scene detector's +1/-1
/// output over every image.
inline CvIndicators compute_cv_indicators(const CvPredictionTable& table, std::size_t n) {
  if (n == 0) throw PreconditionError("retrieval count n must be >= 1");
  CvIndicators out;
  if (table.empty()) return out;
  int raw_loc = 0, raw_per = 0, raw_org = 0;
  for (const auto& row : table) {
    raw_loc += row.loc;
    raw_per += row.per;
    raw_org += row.org;
    for (int v : row.loc_raw) out.plc += v;
  }
  const double dn = static_cast<double>(n);
  out.loc = raw_loc / dn;
  out.per = raw_per / dn;
  out.org = raw_org / dn;
  out.dist = detail::top_two_gap(raw_loc, raw_org, raw_per);
  return out;
}

/// T_k = (snippets predicted k) / n; T_dist is the gap between the two largest
/// counts. Out-of-vocabulary snippets carry no class evidence and are not counted.
inline TextIndicators compute_text_indicators(std::span<const SnippetPrediction> preds, std::size_t n) {
  if (n == 0) throw PreconditionError("retrieval count n must be >= 1");
  TextIndicators out;
  int loc = 0, per = 0, org = 0;
  for (const auto& p : preds) {
    if (p.oov) continue;
    switch (p.predicted) {
      case NERClass::LOC: ++loc; break;
      case NERClass::PER: ++per; break;
      case NERClass::ORG: ++org; break;
      default: break;
    }
  }
  const double dn = static_cast<double>(n);
  out.loc = loc / dn;
  out.per = per / dn;
  out.org = org / dn;
  out.dist = detail::top_two_gap(loc, org, per);
  return out;
}

inline IndicatorVector assemble(const EntityCandidate& c, std::size_t sentence_index,
                                const CvIndicators& cv, const TextIndicators& text,
                                std::size_t n_images, std::size_t n_snippets) {
  IndicatorVector v;
  v.i = sentence_index;
  v.j = c.start;
  v.term = c.term;
  v.ng_pos = c.ng_pos;
  if (n_images > 0) v.cv = cv;
  if (n_snippets > 0) v.text = text;
  v.n_images = n_images;
  v.n_snippets = n_snippets;
  return v;
}

// ---------------------------------------------------------------------------
// Feature schema consumed by the fusion tree. The sentence index and the term
// itself are metadata, not features.

enum class FeatureKind { Numeric, Categorical };

struct FeatureSpec {
  std::string_view name;
  FeatureKind kind;
};

inline constexpr std::array<FeatureSpec, 13> kIndicatorFeatures{{
    {"j", FeatureKind::Numeric},
    {"ng_pos", FeatureKind::Categorical},
    {"C_loc", FeatureKind::Numeric},
    {"C_per", FeatureKind::Numeric},
    {"C_org", FeatureKind::Numeric},
    {"C_dist", FeatureKind::Numeric},
    {"C_plc", FeatureKind::Numeric},
    {"T_loc", FeatureKind::Numeric},
    {"T_per", FeatureKind::Numeric},
    {"T_org", FeatureKind::Numeric},
    {"T_dist", FeatureKind::Numeric},
    {"n_images", FeatureKind::Numeric},
    {"n_snippets", FeatureKind::Numeric},
}};

inline std::vector<double> feature_values(const IndicatorVector& v) {
  return {static_cast<double>(v.j), static_cast<double>(v.ng_pos),
          v.cv.loc, v.cv.per, v.cv.org, static_cast<double>(v.cv.dist), static_cast<double>(v.cv.plc),
          v.text.loc, v.text.per, v.text.org, static_cast<double>(v.text.dist),
          static_cast<double>(v.n_images), static_cast<double>(v.n_snippets)};
}

inline std::vector<std::string> indicator_feature_names() {
  std::vector<std::string> out;
  for (const auto& f : kIndicatorFeatures) out.emplace_back(f.name);
  return out;
}

inline std::vector<FeatureKind> indicator_feature_kinds() {
  std::vector<FeatureKind> out;
  for (const auto& f : kIndicatorFeatures) out.push_back(f.kind);
  return out;
}

// ---------------------------------------------------------------------------
// Tab-separated export: one row per candidate, optional trailing label column.

inline constexpr std::string_view kIndicatorHeader =
    "i\tj\tterm\tng_pos\tC_loc\tC_per\tC_org\tC_dist\tC_plc\tT_loc\tT_per\tT_org\tT_dist\tn_images\tn_snippets";

inline std::string format_real(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_indicator_row(std::ostream& out, const IndicatorVector& v,
                                std::optional<NERClass> label = std::nullopt) {
  out << v.i << '\t' << v.j << '\t' << v.term << '\t' << v.ng_pos << '\t' << format_real(v.cv.loc)
      << '\t' << format_real(v.cv.per) << '\t' << format_real(v.cv.org) << '\t' << v.cv.dist << '\t'
      << v.cv.plc << '\t' << format_real(v.text.loc) << '\t' << format_real(v.text.per) << '\t'
      << format_real(v.text.org) << '\t' << v.text.dist << '\t' << v.n_images << '\t' << v.n_snippets;
  if (label) out << '\t' << to_string(*label);
  out << '\n';
}

struct LabeledIndicator {
  IndicatorVector vector;
  std::optional<NERClass> label;
};

inline std::vector<LabeledIndicator> read_indicator_table(std::istream& in) {
  std::vector<LabeledIndicator> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.starts_with("i\t")) continue;
    auto c = split(line, '\t');
    if (c.size() != 15 && c.size() != 16)
      throw SchemaError("indicator table line " + std::to_string(lineno) + ": expected 15 or 16 columns");
    LabeledIndicator r;
    auto& v = r.vector;
    try {
      v.i = std::stoul(c[0]);
      v.j = std::stoul(c[1]);
      v.term = c[2];
      v.ng_pos = std::stoi(c[3]);
      v.cv = {std::stod(c[4]), std::stod(c[5]), std::stod(c[6]), std::stoi(c[7]), std::stoi(c[8])};
      v.text = {std::stod(c[9]), std::stod(c[10]), std::stod(c[11]), std::stoi(c[12])};
      v.n_images = std::stoul(c[13]);
      v.n_snippets = std::stoul(c[14]);
    } catch (const std::exception&) {
      throw SchemaError("indicator table line " + std::to_string(lineno) + ": bad number");
    }
    if (c.size() == 16) {
      r.label = parse_ner_class(c[15]);
      if (!r.label) throw SchemaError("indicator table line " + std::to_string(lineno) + ": bad label");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace mmner
