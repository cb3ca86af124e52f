#pragma once

// Text side of the pipeline: knowledge-base abstract ingestion, a TF-IDF
// vectorizer and one-vs-rest linear classifiers over LOC/ORG/PER, applied to
// each retrieved snippet.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "mmner/core.hpp"
#include "mmner/evidence.hpp"
#include "mmner/http.hpp"

namespace mmner {

/// The three text classes, in tie-break order.
inline constexpr std::array<NERClass, 3> kTextClasses{NERClass::LOC, NERClass::ORG, NERClass::PER};

struct LabeledDocument {
  std::string text;
  NERClass label = NERClass::LOC;
};

// ---------------------------------------------------------------------------
// Ingestion

struct IngestReport {
  std::vector<LabeledDocument> documents;
  std::array<std::size_t, 3> per_class{};  // LOC, ORG, PER
  std::size_t skipped_rows = 0;
  std::size_t duplicates = 0;
};

inline std::optional<NERClass> parse_kb_label(std::string_view s) {
  auto l = to_lower_ascii(trim(s));
  if (l == "loc" || l == "location" || l == "place") return NERClass::LOC;
  if (l == "org" || l == "organisation" || l == "organization") return NERClass::ORG;
  if (l == "per" || l == "person") return NERClass::PER;
  return std::nullopt;
}

inline std::size_t text_class_slot(NERClass c) {
  switch (c) {
    case NERClass::LOC: return 0;
    case NERClass::ORG: return 1;
    case NERClass::PER: return 2;
    default: throw PreconditionError("NONE is not a text class");
  }
}

namespace detail {

struct IngestAccumulator {
  IngestReport report;
  std::unordered_set<std::string> seen;
  std::size_t limit;

  void add(NERClass label, std::string text) {
    auto& count = report.per_class[text_class_slot(label)];
    if (count >= limit) return;
    if (!seen.insert(text).second) {
      ++report.duplicates;
      return;
    }
    ++count;
    report.documents.push_back({std::move(text), label});
  }
};

}  // namespace detail

/// Reads `label<TAB>abstract` rows. Blank abstracts, unknown labels and rows
/// without a tab are skipped and counted.
inline IngestReport ingest_kb_dump(std::istream& in, std::size_t per_class_limit = 15000) {
  detail::IngestAccumulator acc{{}, {}, per_class_limit};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      ++acc.report.skipped_rows;
      continue;
    }
    auto label = parse_kb_label(std::string_view(line).substr(0, tab));
    auto text = trim(std::string_view(line).substr(tab + 1));
    if (!label || text.empty()) {
      ++acc.report.skipped_rows;
      continue;
    }
    acc.add(*label, std::move(text));
  }
  return std::move(acc.report);
}

inline IngestReport ingest_kb_dump_file(const std::string& path, std::size_t per_class_limit = 15000) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot read dump file " + path);
  return ingest_kb_dump(in, per_class_limit);
}

struct KbEndpoint {
  std::string url = "https://dbpedia.org/sparql";
  std::string graph = "http://dbpedia.org";
  // One query template per class; {var}, {type}, {graph}, {limit} are filled in.
  std::string loc_query = default_query();
  std::string per_query = default_query();
  std::string org_query = default_query();
  int timeout_seconds = 60;

  static std::string default_query() {
    return "SELECT ?{var}, ?abstract FROM <{graph}>\n"
           "WHERE {?{var} rdf:type dbo:{type} .\n"
           "       ?{var} dbo:abstract ?abstract .\n"
           "FILTER (lang(?abstract) = 'en')} LIMIT {limit}";
  }

  std::string query_for(NERClass c, std::size_t limit) const {
    const char* var = c == NERClass::LOC ? "location" : c == NERClass::PER ? "person" : "organisation";
    const char* type = c == NERClass::LOC ? "Location" : c == NERClass::PER ? "Person" : "Organisation";
    const auto& tmpl = c == NERClass::LOC ? loc_query : c == NERClass::PER ? per_query : org_query;
    return fill_template(tmpl, {{"var", var}, {"type", type}, {"graph", graph},
                                {"limit", std::to_string(limit)}});
  }
};

/// Runs the three class queries against a SPARQL endpoint (JSON results).
inline IngestReport ingest_kb_endpoint(const KbEndpoint& ep, std::size_t per_class_limit = 15000) {
  detail::IngestAccumulator acc{{}, {}, per_class_limit};
  for (auto cls : {NERClass::LOC, NERClass::PER, NERClass::ORG}) {
    auto query = ep.query_for(cls, per_class_limit);
    auto url = ep.url + (ep.url.find('?') == std::string::npos ? "?" : "&") +
               "query=" + url_encode(query) + "&format=" + url_encode("application/sparql-results+json");
    HttpResponse res;
    try {
      res = http_get(url, {{"Accept", "application/sparql-results+json"}}, ep.timeout_seconds);
    } catch (const std::exception& e) {
      throw IngestError(std::string("endpoint unreachable: ") + e.what());
    }
    if (res.status != 200)
      throw IngestError("endpoint returned HTTP " + std::to_string(res.status) + " for " +
                        std::string(to_string(cls)) + " query");
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(res.body);
    } catch (const std::exception& e) {
      throw IngestError(std::string("endpoint returned invalid JSON: ") + e.what());
    }
    for (const auto& b : doc.at("results").at("bindings")) {
      if (!b.contains("abstract")) {
        ++acc.report.skipped_rows;
        continue;
      }
      auto text = trim(b["abstract"].value("value", ""));
      if (text.empty()) {
        ++acc.report.skipped_rows;
        continue;
      }
      acc.add(cls, std::move(text));
    }
  }
  return std::move(acc.report);
}

// ---------------------------------------------------------------------------
// Vectorizer and categorizer

/// Lowercased alphanumeric runs. Bytes >= 0x80 count as word characters.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct SparseVector {
  std::vector<std::size_t> index;
  std::vector<double> value;
  bool empty() const { return index.empty(); }
};

struct TfidfVectorizer {
  std::map<std::string, std::size_t> vocabulary;  // term → column; columns follow term order
  std::vector<double> idf;

  /// Terms with document frequency >= min_df; idf = ln((1+D)/(1+df)) + 1.
  static TfidfVectorizer fit(std::span<const std::string> docs, std::size_t min_df = 2) {
    std::map<std::string, std::size_t> df;
    for (const auto& d : docs) {
      auto toks = word_tokens(d);
      std::set<std::string> uniq(toks.begin(), toks.end());
      for (const auto& t : uniq) ++df[t];
    }
    TfidfVectorizer v;
    const double D = static_cast<double>(docs.size());
    for (const auto& [term, count] : df) {
      if (count < min_df) continue;
      v.vocabulary.emplace(term, v.idf.size());
      v.idf.push_back(std::log((1.0 + D) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    return v;
  }

  /// Raw term counts times idf, L2-normalized. Indices ascend.
  SparseVector transform(std::string_view doc) const {
    std::map<std::size_t, double> tf;
    for (const auto& t : word_tokens(doc))
      if (auto it = vocabulary.find(t); it != vocabulary.end()) tf[it->second] += 1.0;
    SparseVector out;
    double norm = 0;
    for (const auto& [i, c] : tf) {
      double w = c * idf[i];
      out.index.push_back(i);
      out.value.push_back(w);
      norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (auto& w : out.value) w /= norm;
    return out;
  }
};

struct LinearTrainParams {
  double c = 1.0;
  double eps = 1e-4;
  std::size_t max_iter = 1000;
};

/// One binary L2-regularized squared-hinge linear model, bias as an extra
/// constant feature, solved by cyclic dual coordinate descent.
struct BinaryLinearModel {
  std::vector<double> w;  // last entry is the bias weight
  double score(const SparseVector& x) const {
    double s = w.back();
    for (std::size_t k = 0; k < x.index.size(); ++k) s += w[x.index[k]] * x.value[k];
    return s;
  }
};

inline BinaryLinearModel train_binary_linear(std::span<const SparseVector> xs, std::span<const int> ys,
                                             std::size_t dim, const LinearTrainParams& p) {
  BinaryLinearModel m;
  m.w.assign(dim + 1, 0.0);
  const double diag = 1.0 / (2.0 * p.c);
  std::vector<double> alpha(xs.size(), 0.0), qii(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double s = 1.0;  // bias feature
    for (double v : xs[i].value) s += v * v;
    qii[i] = s + diag;
  }
  for (std::size_t iter = 0; iter < p.max_iter; ++iter) {
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double y = ys[i];
      double g = y * m.score(xs[i]) - 1.0 + diag * alpha[i];
      double pg = alpha[i] == 0.0 ? std::min(g, 0.0) : g;
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (std::abs(pg) < 1e-12) continue;
      double old = alpha[i];
      alpha[i] = std::max(alpha[i] - g / qii[i], 0.0);
      double d = (alpha[i] - old) * y;
      for (std::size_t k = 0; k < xs[i].index.size(); ++k) m.w[xs[i].index[k]] += d * xs[i].value[k];
      m.w.back() += d;
    }
    if (pg_max - pg_min < p.eps) break;
  }
  return m;
}

struct SnippetPrediction {
  int rank = 0;
  NERClass predicted = NERClass::LOC;
  std::array<double, 3> scores{};  // LOC, ORG, PER
  bool oov = false;
};

/// argmax with ties resolved LOC < ORG < PER.
inline NERClass argmax_text_class(const std::array<double, 3>& scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < 3; ++k)
    if (scores[k] > scores[best]) best = k;
  return kTextClasses[best];
}

struct TextCategorizer {
  TfidfVectorizer vectorizer;
  std::array<BinaryLinearModel, 3> models;  // LOC, ORG, PER vs rest
  std::string config_digest;

  SnippetPrediction predict(std::string_view doc) const {
    SnippetPrediction p;
    auto x = vectorizer.transform(doc);
    if (x.empty()) {
      p.oov = true;
      p.predicted = argmax_text_class(p.scores);
      return p;
    }
    for (std::size_t k = 0; k < 3; ++k) p.scores[k] = models[k].score(x);
    p.predicted = argmax_text_class(p.scores);
    return p;
  }
};

struct CategorizerConfig {
  std::size_t min_df = 2;
  LinearTrainParams linear;

  std::string digest() const {
    return mmner::digest("min_df=" + std::to_string(min_df) + ";c=" + std::to_string(linear.c) +
                         ";eps=" + std::to_string(linear.eps) + ";max_iter=" + std::to_string(linear.max_iter));
  }
};

inline TextCategorizer fit_categorizer(std::span<const LabeledDocument> corpus,
                                       const CategorizerConfig& cfg = {}) {
  std::array<std::size_t, 3> counts{};
  for (const auto& d : corpus) {
    if (d.label == NERClass::NONE) throw TrainingError("document labeled NONE in text corpus");
    ++counts[text_class_slot(d.label)];
  }
  for (std::size_t k = 0; k < 3; ++k)
    if (counts[k] == 0)
      throw TrainingError("text corpus has no " + std::string(to_string(kTextClasses[k])) +
                          " documents (LOC=" + std::to_string(counts[0]) + " ORG=" +
                          std::to_string(counts[1]) + " PER=" + std::to_string(counts[2]) + ")");
  std::vector<std::string> texts;
  for (const auto& d : corpus) texts.push_back(d.text);
  TextCategorizer cat;
  cat.config_digest = cfg.digest();
  cat.vectorizer = TfidfVectorizer::fit(texts, cfg.min_df);
  std::vector<SparseVector> xs;
  for (const auto& t : texts) xs.push_back(cat.vectorizer.transform(t));
  const std::size_t dim = cat.vectorizer.idf.size();
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<int> ys;
    for (const auto& d : corpus) ys.push_back(d.label == kTextClasses[k] ? +1 : -1);
    cat.models[k] = train_binary_linear(xs, ys, dim, cfg.linear);
  }
  return cat;
}

/// Each snippet is classified on its own; its document is `title + " " + excerpt`.
inline std::vector<SnippetPrediction> classify_snippets(const TextCategorizer& cat,
                                                        std::span<const TextEvidence> snippets) {
  std::vector<SnippetPrediction> out;
  out.reserve(snippets.size());
  for (const auto& s : snippets) {
    auto p = cat.predict(s.title + " " + s.excerpt);
    p.rank = s.rank;
    out.push_back(p);
  }
  return out;
}

inline nlohmann::ordered_json categorizer_to_json(const TextCategorizer& cat) {
  nlohmann::ordered_json j;
  j["format"] = "mmner.text_categorizer/1";
  j["config_digest"] = cat.config_digest;
  std::vector<std::string> terms(cat.vectorizer.vocabulary.size());
  for (const auto& [t, i] : cat.vectorizer.vocabulary) terms[i] = t;
  j["terms"] = terms;
  j["idf"] = cat.vectorizer.idf;
  auto models = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < 3; ++k) models[std::string(to_string(kTextClasses[k]))] = cat.models[k].w;
  j["models"] = std::move(models);
  return j;
}

inline TextCategorizer categorizer_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mmner.text_categorizer/1") throw ModelError("not a text categorizer file");
  TextCategorizer cat;
  cat.config_digest = j.value("config_digest", "");
  auto terms = j.at("terms").get<std::vector<std::string>>();
  cat.vectorizer.idf = j.at("idf").get<std::vector<double>>();
  if (terms.size() != cat.vectorizer.idf.size()) throw ModelError("idf length differs from vocabulary");
  for (std::size_t i = 0; i < terms.size(); ++i) cat.vectorizer.vocabulary.emplace(terms[i], i);
  for (std::size_t k = 0; k < 3; ++k) {
    cat.models[k].w = j.at("models").at(std::string(to_string(kTextClasses[k]))).get<std::vector<double>>();
    if (cat.models[k].w.size() != terms.size() + 1) throw ModelError("weight vector length mismatch");
  }
  return cat;
}

}  // namespace mmner
