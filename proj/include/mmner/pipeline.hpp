#pragma once

// End-to-end wiring: the flat configuration, model artifacts on disk, training
// of the image/text/fusion models, and per-sentence featurization/annotation.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"
#include "mmner/core.hpp"
#include "mmner/evaluation.hpp"
#include "mmner/evidence.hpp"
#include "mmner/http_search.hpp"
#include "mmner/indicators.hpp"
#include "mmner/preprocess.hpp"
#include "mmner/text.hpp"
#include "mmner/tree.hpp"
#include "mmner/vision.hpp"

namespace mmner {

// ---------------------------------------------------------------------------
// Configuration: one flat JSON object with dotted keys. Every key has a default;
// unknown keys are rejected. Relative paths resolve against the config file.

class PipelineConfig {
 public:
  using Value = nlohmann::ordered_json;

  PipelineConfig() : values_(defaults()) {}

  static const nlohmann::ordered_json& defaults() {
    static const nlohmann::ordered_json d = {
        {"retrieval.provider", "replay"},
        {"retrieval.n", 10},
        {"retrieval.cache_dir", "cache"},
        {"retrieval.replay_dir", "replay"},
        {"retrieval.http.web_url_template", ""},
        {"retrieval.http.image_url_template", ""},
        {"retrieval.http.count_param", "count"},
        {"retrieval.http.headers", nlohmann::ordered_json::object()},
        {"retrieval.http.web_results_path", "/webPages/value"},
        {"retrieval.http.title_field", "name"},
        {"retrieval.http.excerpt_field", "snippet"},
        {"retrieval.http.image_results_path", "/value"},
        {"retrieval.http.image_url_field", "contentUrl"},
        {"retrieval.http.timeout_seconds", 30},
        {"tagger.lexicon_file", ""},
        {"vision.train_dir", "images"},
        {"vision.k", 500},
        {"vision.stride", 8},
        {"vision.patch", 16},
        {"vision.max_side", 256},
        {"vision.seed", 42},
        {"vision.kmeans_max_iter", 100},
        {"vision.kmeans_tol", 1e-4},
        {"vision.kmeans_max_samples", 200000},
        {"vision.nu", 0.5},
        {"vision.gamma", 0.1},
        {"text.source", "dump"},
        {"text.dump_file", "kb_dump.tsv"},
        {"text.endpoint.url", "https://dbpedia.org/sparql"},
        {"text.endpoint.graph", "http://dbpedia.org"},
        {"text.endpoint.loc_query", KbEndpoint::default_query()},
        {"text.endpoint.per_query", KbEndpoint::default_query()},
        {"text.endpoint.org_query", KbEndpoint::default_query()},
        {"text.per_class_limit", 15000},
        {"text.min_df", 2},
        {"text.c", 1.0},
        {"tree.max_depth", nullptr},
        {"tree.min_samples_leaf", 1},
        {"evaluation.mapping_file", ""},
        {"evaluation.folds", 4},
        {"evaluation.seed", 13},
        {"evaluation.entity_level", false},
        {"models.dir", "models"},
    };
    return d;
  }

  static PipelineConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    Value j;
    try {
      j = Value::parse(in);
    } catch (const std::exception& e) {
      throw ConfigError(path + ": " + e.what());
    }
    PipelineConfig c;
    c.base_ = fs::absolute(path).parent_path();
    if (!j.is_object()) throw ConfigError(path + ": expected a flat JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) c.set(it.key(), it.value());
    return c;
  }

  void set(const std::string& key, const Value& v) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = v;
  }

  /// `key=value`; value parsed as JSON when possible, else taken as a string.
  void set_override(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    auto key = trim(assignment.substr(0, eq));
    auto raw = assignment.substr(eq + 1);
    Value v;
    try {
      v = Value::parse(raw);
    } catch (const std::exception&) {
      v = raw;
    }
    set(key, v);
  }

  void set_base_dir(fs::path p) { base_ = std::move(p); }
  const fs::path& base_dir() const { return base_; }

  template <typename T>
  T get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      return it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' has the wrong type: " + it->dump());
    }
  }

  std::optional<std::size_t> get_optional_size(const std::string& key) const {
    const auto& v = values_.at(key);
    if (v.is_null()) return std::nullopt;
    return get<std::size_t>(key);
  }

  fs::path path(const std::string& key) const {
    fs::path p = get<std::string>(key);
    if (p.empty() || p.is_absolute()) return p;
    return base_ / p;
  }

  /// Digest over one section's non-path settings.
  std::string section_digest(const std::string& prefix) const {
    nlohmann::ordered_json sub;
    for (auto it = values_.begin(); it != values_.end(); ++it) {
      const auto& k = it.key();
      if (!k.starts_with(prefix)) continue;
      if (k.ends_with("_dir") || k.ends_with("_file") || k.ends_with("_path")) continue;
      sub[k] = it.value();
    }
    return digest(sub.dump());
  }

  const nlohmann::ordered_json& values() const { return values_; }

  void validate() const {
    if (get<int>("retrieval.n") < 1) throw ConfigError("retrieval.n must be >= 1");
    if (get<int>("vision.k") < 2) throw ConfigError("vision.k must be >= 2");
    if (get<int>("tree.min_samples_leaf") < 1) throw ConfigError("tree.min_samples_leaf must be >= 1");
    auto provider = get<std::string>("retrieval.provider");
    if (provider != "replay" && provider != "http")
      throw ConfigError("retrieval.provider must be 'replay' or 'http'");
  }

  std::size_t n() const { return static_cast<std::size_t>(get<int>("retrieval.n")); }

  DescriptorParams descriptor_params() const {
    return {get<int>("vision.max_side"), get<int>("vision.stride"), get<int>("vision.patch")};
  }

  NuSvmParams svm_params() const {
    NuSvmParams p;
    p.nu = get<double>("vision.nu");
    p.gamma = get<double>("vision.gamma");
    return p;
  }

  KMeansOptions kmeans_options() const {
    return {get<std::size_t>("vision.kmeans_max_iter"), get<double>("vision.kmeans_tol"),
            get<std::size_t>("vision.kmeans_max_samples")};
  }

  CategorizerConfig categorizer_config() const {
    CategorizerConfig c;
    c.min_df = get<std::size_t>("text.min_df");
    c.linear.c = get<double>("text.c");
    return c;
  }

  TreeParams tree_params() const {
    return {get<std::size_t>("tree.min_samples_leaf"), get_optional_size("tree.max_depth")};
  }

  HttpSearchConfig http_config() const {
    HttpSearchConfig h;
    h.web_url_template = get<std::string>("retrieval.http.web_url_template");
    h.image_url_template = get<std::string>("retrieval.http.image_url_template");
    h.count_param = get<std::string>("retrieval.http.count_param");
    h.headers = get<std::map<std::string, std::string>>("retrieval.http.headers");
    h.web_results_path = get<std::string>("retrieval.http.web_results_path");
    h.title_field = get<std::string>("retrieval.http.title_field");
    h.excerpt_field = get<std::string>("retrieval.http.excerpt_field");
    h.image_results_path = get<std::string>("retrieval.http.image_results_path");
    h.image_url_field = get<std::string>("retrieval.http.image_url_field");
    h.timeout_seconds = get<int>("retrieval.http.timeout_seconds");
    return h;
  }

  KbEndpoint kb_endpoint() const {
    KbEndpoint e;
    e.url = get<std::string>("text.endpoint.url");
    e.graph = get<std::string>("text.endpoint.graph");
    e.loc_query = get<std::string>("text.endpoint.loc_query");
    e.per_query = get<std::string>("text.endpoint.per_query");
    e.org_query = get<std::string>("text.endpoint.org_query");
    return e;
  }

  GoldTagMapping gold_mapping() const {
    auto p = path("evaluation.mapping_file");
    return p.empty() ? GoldTagMapping::ritter_default() : GoldTagMapping::load(p.string());
  }

 private:
  nlohmann::ordered_json values_;
  fs::path base_ = fs::current_path();
};

// ---------------------------------------------------------------------------
// Artifact layout under models.dir:
//   vision/vocabulary.json, vision/<object_class>.json, text/categorizer.json, tree/tree.json

struct ArtifactPaths {
  fs::path root;
  fs::path vision_dir() const { return root / "vision"; }
  fs::path vocabulary() const { return vision_dir() / "vocabulary.json"; }
  fs::path classifier(ObjectClass c) const { return vision_dir() / (std::string(to_string(c)) + ".json"); }
  fs::path categorizer() const { return root / "text" / "categorizer.json"; }
  fs::path tree() const { return root / "tree" / "tree.json"; }
};

inline void save_json(const fs::path& p, const nlohmann::ordered_json& j) {
  fs::create_directories(p.parent_path());
  write_file_atomic(p, j.dump(1) + "\n");
}

inline nlohmann::json load_json(const fs::path& p, const std::string& missing_hint) {
  if (!fs::exists(p)) throw ModelError("missing model file " + p.string() + "; run `" + missing_hint + "` first");
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(p.string() + ": " + e.what());
  }
}

struct VisionModel {
  DescriptorParams descriptor;
  VisualVocabulary vocabulary;
  ClassifierBank bank;
};

inline VisionModel load_vision_model(const ArtifactPaths& paths, const DescriptorParams& dp) {
  VisionModel m;
  m.descriptor = dp;
  m.vocabulary = vocabulary_from_json(load_json(paths.vocabulary(), "mmner train-vision"));
  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    auto cls = static_cast<ObjectClass>(c);
    auto clf = classifier_from_json(load_json(paths.classifier(cls), "mmner train-vision"));
    if (clf.model.dim != m.vocabulary.k)
      throw ModelError(std::string(to_string(cls)) + " model does not match the vocabulary size");
    m.bank.model(cls) = std::move(clf);
  }
  return m;
}

inline TextCategorizer load_text_model(const ArtifactPaths& paths) {
  return categorizer_from_json(load_json(paths.categorizer(), "mmner train-text"));
}

inline DecisionTree load_tree_model(const ArtifactPaths& paths) {
  return DecisionTree::from_json(load_json(paths.tree(), "mmner train-tree"));
}

// ---------------------------------------------------------------------------
// Vision training from `<root>/<object_class>/(pos|neg)/*.{png,jpg}`

struct VisionTrainingSummary {
  std::size_t images = 0;
  std::size_t descriptors = 0;
  std::array<double, kNumObjectClasses> training_accuracy{};
  std::size_t kmeans_iterations = 0;
};

inline std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto ext = to_lower_ascii(e.path().extension().string());
    if (e.is_regular_file() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string object_inventory() {
  std::string s;
  for (auto n : kObjectClassNames) s += (s.empty() ? "" : ", ") + std::string(n);
  return s;
}

inline VisionTrainingSummary train_vision(const PipelineConfig& cfg, std::ostream* log = nullptr) {
  const auto root = cfg.path("vision.train_dir");
  std::vector<std::string> missing;
  for (auto name : kObjectClassNames)
    if (list_images(root / std::string(name) / "pos").empty()) missing.emplace_back(name);
  if (!missing.empty()) {
    std::string m;
    for (const auto& s : missing) m += (m.empty() ? "" : ", ") + s;
    throw ConfigError("training image tree " + root.string() + " lacks <class>/pos images for: " + m +
                      " (required inventory: " + object_inventory() + ")");
  }
  const auto dp = cfg.descriptor_params();
  const auto seed = cfg.get<std::uint64_t>("vision.seed");
  VisionTrainingSummary summary;

  std::map<ObjectClass, std::vector<DescriptorSet>> pos_sets, neg_sets;
  std::vector<DescriptorSet> all;
  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    auto cls = static_cast<ObjectClass>(c);
    for (const char* side : {"pos", "neg"}) {
      for (const auto& p : list_images(root / std::string(to_string(cls)) / side)) {
        ImageEvidence img{read_file(p), media_type_for_extension(p.extension().string()), 1};
        DescriptorSet d;
        try {
          d = extract_descriptors(decode_image(img, dp.max_side), dp, p.string());
        } catch (const ImageDecodeError&) {
          if (log) *log << "warning: skipping undecodable " << p << "\n";
          continue;
        }
        ++summary.images;
        summary.descriptors += d.size();
        (std::string(side) == "pos" ? pos_sets : neg_sets)[cls].push_back(d);
        all.push_back(std::move(d));
      }
    }
  }
  KMeansTrace trace;
  auto vocab = build_vocabulary(all, static_cast<std::size_t>(cfg.get<int>("vision.k")), seed,
                                cfg.kmeans_options(), &trace);
  summary.kmeans_iterations = trace.iterations;

  HistogramsByClass pos_h, neg_h;
  for (const auto& [cls, sets] : pos_sets)
    for (const auto& s : sets) pos_h[cls].push_back(encode_bof(s, vocab));
  for (const auto& [cls, sets] : neg_sets)
    for (const auto& s : sets) neg_h[cls].push_back(encode_bof(s, vocab));
  auto bank = train_classifier_bank(pos_h, neg_h, seed, cfg.svm_params());

  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    auto cls = static_cast<ObjectClass>(c);
    std::size_t right = 0, total = 0;
    for (const auto& [other, hs] : pos_h)
      for (const auto& h : hs) right += bank.model(cls).predict(h) == (other == cls ? 1 : -1), ++total;
    summary.training_accuracy[c] = total ? static_cast<double>(right) / static_cast<double>(total) : 0.0;
  }

  ArtifactPaths paths{cfg.path("models.dir")};
  const auto dg = cfg.section_digest("vision.");
  save_json(paths.vocabulary(), vocabulary_to_json(vocab, dg));
  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    auto cls = static_cast<ObjectClass>(c);
    save_json(paths.classifier(cls), classifier_to_json(bank.model(cls), dg, seed));
  }
  return summary;
}

// ---------------------------------------------------------------------------
// Text training

inline IngestReport ingest_from_config(const PipelineConfig& cfg) {
  const auto limit = cfg.get<std::size_t>("text.per_class_limit");
  auto source = cfg.get<std::string>("text.source");
  if (source == "dump") return ingest_kb_dump_file(cfg.path("text.dump_file").string(), limit);
  if (source == "endpoint") return ingest_kb_endpoint(cfg.kb_endpoint(), limit);
  throw ConfigError("text.source must be 'dump' or 'endpoint'");
}

inline IngestReport train_text(const PipelineConfig& cfg) {
  auto report = ingest_from_config(cfg);
  auto cat = fit_categorizer(report.documents, cfg.categorizer_config());
  cat.config_digest = cfg.section_digest("text.");
  save_json(ArtifactPaths{cfg.path("models.dir")}.categorizer(), categorizer_to_json(cat));
  return report;
}

// ---------------------------------------------------------------------------
// Featurization

inline std::unique_ptr<SearchProvider> make_provider(const PipelineConfig& cfg) {
  if (cfg.get<std::string>("retrieval.provider") == "http")
    return std::make_unique<HttpSearchProvider>(cfg.http_config());
  return std::make_unique<ReplayProvider>(cfg.path("retrieval.replay_dir"));
}

inline std::unique_ptr<LexiconTagger> make_tagger(const PipelineConfig& cfg) {
  auto tagger = std::make_unique<LexiconTagger>();
  auto lex = cfg.path("tagger.lexicon_file");
  if (!lex.empty()) {
    std::ifstream in(lex);
    if (!in) throw IOError("cannot read lexicon " + lex.string());
    tagger->load_lexicon(in);
  }
  return tagger;
}

/// Turns sentences into candidate indicator vectors. Evidence-derived
/// indicators are memoized per normalized term.
class Featurizer {
 public:
  Featurizer(const VisionModel& vision, const TextCategorizer& text, const PosTagger& tagger,
             SearchProvider& provider, EvidenceCache& cache, std::size_t n)
      : vision_(vision), text_(text), tagger_(tagger), provider_(provider), cache_(cache), n_(n) {}

  struct TermEvidence {
    CvIndicators cv;
    TextIndicators text;
    std::size_t n_images = 0, n_snippets = 0;
  };

  const TermEvidence& evidence_for(const std::string& term) {
    auto key = normalize_term(term);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    auto bundle = fetch_evidence(term, provider_, cache_, n_);
    TermEvidence e;
    auto table = classify_images(vision_.bank, bundle.images, vision_.vocabulary, vision_.descriptor);
    auto preds = classify_snippets(text_, bundle.snippets);
    e.cv = compute_cv_indicators(table, n_);
    e.text = compute_text_indicators(preds, n_);
    e.n_images = bundle.images.size();
    e.n_snippets = bundle.snippets.size();
    return memo_.emplace(key, e).first->second;
  }

  Sentence prepare(const std::vector<std::string>& tokens, std::string id) const {
    Sentence s;
    s.id = std::move(id);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      s.tokens.push_back({tokens[i], PosTag::OTHER, i});
      s.raw += (i ? " " : "") + tokens[i];
    }
    return tag_pos(std::move(s), tagger_);
  }

  Sentence prepare(std::string_view raw, std::string id) const { return tag_pos(tokenize(raw, std::move(id)), tagger_); }

  SentenceFeatures featurize(const Sentence& tagged, std::size_t sentence_index) {
    SentenceFeatures f;
    f.token_count = tagged.tokens.size();
    f.candidates = extract_candidates(tagged);
    for (const auto& c : f.candidates) {
      const auto& e = evidence_for(c.term);
      f.vectors.push_back(assemble(c, sentence_index, e.cv, e.text, e.n_images, e.n_snippets));
    }
    return f;
  }

 private:
  const VisionModel& vision_;
  const TextCategorizer& text_;
  const PosTagger& tagger_;
  SearchProvider& provider_;
  EvidenceCache& cache_;
  std::size_t n_;
  std::unordered_map<std::string, TermEvidence> memo_;
};

inline std::vector<SentenceFeatures> featurize_corpus(Featurizer& fz, const GoldCorpus& corpus) {
  std::vector<SentenceFeatures> out;
  out.reserve(corpus.sentences.size());
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s)
    out.push_back(fz.featurize(fz.prepare(corpus.sentences[s].tokens, corpus.sentences[s].id), s));
  return out;
}

/// Fits the fusion tree on every candidate of a gold corpus and persists it.
inline DecisionTree train_tree_on_corpus(const GoldCorpus& corpus, const std::vector<SentenceFeatures>& features,
                                         const TreeParams& params) {
  std::vector<IndicatorVector> xs;
  std::vector<NERClass> ys;
  for (std::size_t s = 0; s < features.size(); ++s)
    for (std::size_t c = 0; c < features[s].candidates.size(); ++c) {
      xs.push_back(features[s].vectors[c]);
      ys.push_back(candidate_gold(features[s].candidates[c], corpus.sentences[s].gold));
    }
  if (xs.empty()) throw TrainingError("gold corpus yields no entity candidates to train the fusion tree");
  return train_fusion_tree(xs, ys, params);
}

inline SentenceAnnotation annotate_sentence(const DecisionTree& tree, const Sentence& tagged,
                                            const SentenceFeatures& f) {
  return resolve_compounds(tagged.id, tagged.tokens.size(), predict_candidates(&tree, f));
}

/// `surface/CLASS` tokens separated by spaces.
inline std::string format_annotation(const Sentence& tagged, const SentenceAnnotation& ann) {
  std::string out;
  for (std::size_t t = 0; t < tagged.tokens.size(); ++t) {
    if (t) out += ' ';
    out += tagged.tokens[t].surface + "/" + std::string(to_string(ann.labels[t]));
  }
  return out;
}

}  // namespace mmner
