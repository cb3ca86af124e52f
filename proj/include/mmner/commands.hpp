#pragma once

// Operator commands. Each takes a validated config and writes human output to
// `out`; the CLI is a thin argument parser over these.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmner/pipeline.hpp"

namespace mmner {

inline std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IOError("cannot read " + p.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline VisionTrainingSummary cmd_train_vision(const PipelineConfig& cfg, std::ostream& out) {
  cfg.validate();
  auto s = train_vision(cfg, &out);
  out << "trained " << kNumObjectClasses << " object models on " << s.images << " images, " << s.descriptors
      << " descriptors, k-means " << s.kmeans_iterations << " iterations\n";
  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "  %-14s %-4s train-acc %.4f\n", kObjectClassNames[c].data(),
                  std::string(to_string(ner_class_of(static_cast<ObjectClass>(c)))).c_str(),
                  s.training_accuracy[c]);
    out << buf;
  }
  return s;
}

inline IngestReport cmd_train_text(const PipelineConfig& cfg, std::ostream& out) {
  cfg.validate();
  auto r = train_text(cfg);
  out << "text categorizer trained: LOC " << r.per_class[index_of(NERClass::LOC)] << ", PER "
      << r.per_class[index_of(NERClass::PER)] << ", ORG " << r.per_class[index_of(NERClass::ORG)]
      << " documents (" << r.skipped_rows << " rows skipped, " << r.duplicates << " duplicates)\n";
  return r;
}

/// Everything needed to turn sentences into indicator vectors.
struct FeatureContext {
  VisionModel vision;
  TextCategorizer text;
  std::unique_ptr<LexiconTagger> tagger;
  std::unique_ptr<SearchProvider> provider;
  std::unique_ptr<EvidenceCache> cache;
  std::unique_ptr<Featurizer> featurizer;
};

inline std::unique_ptr<FeatureContext> make_feature_context(const PipelineConfig& cfg) {
  auto ctx = std::make_unique<FeatureContext>();
  ArtifactPaths paths{cfg.path("models.dir")};
  ctx->vision = load_vision_model(paths, cfg.descriptor_params());
  ctx->text = load_text_model(paths);
  ctx->tagger = make_tagger(cfg);
  ctx->provider = make_provider(cfg);
  ctx->cache = std::make_unique<EvidenceCache>(cfg.path("retrieval.cache_dir"));
  ctx->featurizer = std::make_unique<Featurizer>(ctx->vision, ctx->text, *ctx->tagger, *ctx->provider,
                                                 *ctx->cache, cfg.n());
  return ctx;
}

inline std::size_t cmd_train_tree(const PipelineConfig& cfg, const fs::path& gold_path, std::ostream& out) {
  cfg.validate();
  auto corpus = read_conll(gold_path.string(), cfg.gold_mapping());
  auto ctx = make_feature_context(cfg);
  auto features = featurize_corpus(*ctx->featurizer, corpus);
  auto tree = train_tree_on_corpus(corpus, features, cfg.tree_params());
  save_json(ArtifactPaths{cfg.path("models.dir")}.tree(), tree.to_json(cfg.section_digest("tree.")));
  out << "fusion tree trained on " << corpus.sentences.size() << " sentences: " << tree.node_count()
      << " nodes, depth " << tree.depth() << "\n";
  return tree.node_count();
}

struct AnnotateOptions {
  fs::path input;
  fs::path output;
  fs::path indicators;  // optional TSV export
};

/// One output line per input line; blank input lines stay blank.
inline std::size_t cmd_annotate(const PipelineConfig& cfg, const AnnotateOptions& opt, std::ostream& out) {
  cfg.validate();
  auto lines = read_lines(opt.input);
  auto tree = load_tree_model(ArtifactPaths{cfg.path("models.dir")});
  auto ctx = make_feature_context(cfg);
  std::ostringstream ann, ind;
  if (!opt.indicators.empty()) ind << kIndicatorHeader << "\tpredicted\n";
  for (std::size_t s = 0; s < lines.size(); ++s) {
    auto tagged = ctx->featurizer->prepare(std::string_view(lines[s]), "s" + std::to_string(s));
    auto f = ctx->featurizer->featurize(tagged, s);
    auto a = annotate_sentence(tree, tagged, f);
    ann << format_annotation(tagged, a) << '\n';
    if (!opt.indicators.empty())
      for (std::size_t c = 0; c < f.vectors.size(); ++c) write_indicator_row(ind, f.vectors[c], a.candidates[c].cls);
  }
  write_file_atomic(opt.output, ann.str());
  if (!opt.indicators.empty()) write_file_atomic(opt.indicators, ind.str());
  out << "annotated " << lines.size() << " sentences -> " << opt.output.string() << "\n";
  return lines.size();
}

struct EvaluateOptions {
  fs::path gold;
  fs::path report_tsv;   // optional
  fs::path predictions;  // optional CoNLL with predicted column
};

inline EvaluationReport cmd_evaluate(const PipelineConfig& cfg, const EvaluateOptions& opt, std::ostream& out) {
  cfg.validate();
  auto folds = cfg.get<int>("evaluation.folds");
  if (folds < 2) throw ConfigError("evaluation.folds must be >= 2, got " + std::to_string(folds));
  auto corpus = read_conll(opt.gold.string(), cfg.gold_mapping());
  auto ctx = make_feature_context(cfg);
  auto features = featurize_corpus(*ctx->featurizer, corpus);
  auto mode = cfg.get<bool>("evaluation.entity_level") ? ScoringMode::Entity : ScoringMode::Token;
  auto cv = cross_validate(corpus, features, static_cast<std::size_t>(folds),
                           cfg.get<std::uint64_t>("evaluation.seed"), cfg.tree_params(), mode);
  write_report_table(out, cv.report);
  if (!opt.report_tsv.empty()) {
    std::ostringstream t;
    write_report_tsv(t, cv.report);
    write_file_atomic(opt.report_tsv, t.str());
  }
  if (!opt.predictions.empty()) {
    std::ostringstream p;
    write_conll_predictions(p, corpus, cv.predictions);
    write_file_atomic(opt.predictions, p.str());
  }
  return cv.report;
}

/// Fetches evidence for every distinct candidate term of `input`; returns the
/// number of distinct terms.
inline std::size_t cmd_cache_warm(const PipelineConfig& cfg, const fs::path& input, std::ostream& out) {
  cfg.validate();
  auto tagger = make_tagger(cfg);
  auto provider = make_provider(cfg);
  EvidenceCache cache(cfg.path("retrieval.cache_dir"));
  std::set<std::string> terms;
  auto lines = read_lines(input);
  for (std::size_t s = 0; s < lines.size(); ++s) {
    auto tagged = tag_pos(tokenize(lines[s], "s" + std::to_string(s)), *tagger);
    for (const auto& c : extract_candidates(tagged)) {
      auto key = normalize_term(c.term);
      if (!terms.insert(key).second) continue;
      fetch_evidence(c.term, *provider, cache, cfg.n());
    }
  }
  out << "warmed " << terms.size() << " terms into " << cache.dir().string() << "\n";
  return terms.size();
}

inline CacheStats cmd_cache_stats(const PipelineConfig& cfg, std::ostream& out) {
  auto s = EvidenceCache(cfg.path("retrieval.cache_dir")).stats();
  out << "entries " << s.entries << "\nbytes " << s.bytes << "\n";
  return s;
}

inline void cmd_cache_clear(const PipelineConfig& cfg, std::ostream& out) {
  EvidenceCache(cfg.path("retrieval.cache_dir")).clear();
  out << "cache cleared\n";
}

}  // namespace mmner
