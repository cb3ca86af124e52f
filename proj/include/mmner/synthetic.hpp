#pragma once

// Synthetic fixture world: procedurally drawn training images for the twelve
// detectors, a labeled abstract dump, a replay corpus whose evidence is
// consistent per entity class, and a small Twitter-style gold corpus. Lets the
// whole pipeline run offline and deterministically.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmner/core.hpp"
#include "mmner/evidence.hpp"
#include "mmner/vision.hpp"

namespace mmner::synthetic {

namespace fs = std::filesystem;

inline constexpr int kImageSide = 128;

/// Grayscale PNG with a class-specific texture: oriented gratings for the ten
/// scene classes, block checkerboards for logos and concentric rings for faces.
/// `variant` jitters phase, orientation and noise.
inline std::string render_object_image(ObjectClass cls, std::uint64_t variant) {
  Rng rng(0x5eed0000ULL + static_cast<std::uint64_t>(cls) * 1000003ULL + variant * 7919ULL);
  const int S = kImageSide;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(S) * S);
  const double phase = uniform01(rng) * 2 * std::numbers::pi;
  const double jitter = (uniform01(rng) - 0.5) * 0.12;
  const int ci = static_cast<int>(cls);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      double v;
      if (cls == ObjectClass::HumanFace) {
        double cx = S / 2.0 + 6 * std::cos(phase), cy = S / 2.0 + 6 * std::sin(phase);
        double r = std::hypot(x - cx, y - cy);
        v = std::sin(2 * std::numbers::pi * r / 10.0 + phase);
      } else if (cls == ObjectClass::CompanyLogo) {
        int ox = static_cast<int>(phase * 3), block = 16;
        v = (((x + ox) / block + (y + ox) / block) % 2) ? 1.0 : -1.0;
      } else {
        double theta = (ci % 5) * std::numbers::pi / 5 + jitter;
        double period = ci < 5 ? 8.0 : 16.0;
        v = std::sin(2 * std::numbers::pi * (x * std::cos(theta) + y * std::sin(theta)) / period + phase);
      }
      double noise = (uniform01(rng) - 0.5) * 20.0;
      px[static_cast<std::size_t>(y) * S + x] =
          static_cast<std::uint8_t>(std::clamp(128.0 + 100.0 * v + noise, 0.0, 255.0));
    }
  return encode_png(px, S, S);
}

inline NERClass entity_class_of_object(ObjectClass c) { return ner_class_of(c); }

// Word pools for synthetic abstracts and snippets.
inline const std::vector<std::string>& class_words(NERClass c) {
  static const std::vector<std::string> loc{
      "city", "river", "located", "population", "capital", "region", "municipality", "district",
      "province", "coast", "mountains", "valley", "border", "square", "kilometres", "inhabitants",
      "harbour", "island", "climate", "village"};
  static const std::vector<std::string> per{
      "born", "singer", "actor", "politician", "career", "album", "married", "childhood",
      "footballer", "novelist", "awarded", "biography", "daughter", "son", "musician", "actress",
      "painter", "died", "starred", "elected"};
  static const std::vector<std::string> org{
      "company", "founded", "headquarters", "corporation", "brand", "retailer", "supermarket",
      "software", "subsidiary", "employees", "revenue", "shareholders", "products", "chain",
      "stores", "airline", "manufacturer", "industry", "listed", "enterprise"};
  static const std::vector<std::string> none{};
  switch (c) {
    case NERClass::LOC: return loc;
    case NERClass::PER: return per;
    case NERClass::ORG: return org;
    default: return none;
  }
}

inline std::string class_text(NERClass c, Rng& rng, std::size_t words) {
  const auto& pool = class_words(c);
  std::string s;
  for (std::size_t i = 0; i < words; ++i) s += (i ? " " : "") + pool[uniform_index(rng, pool.size())];
  return s;
}

/// Tab-separated `label<TAB>abstract` rows, `per_class` per class.
inline std::string make_kb_dump(std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::string out;
  for (std::size_t i = 0; i < per_class; ++i)
    for (auto [label, cls] : {std::pair{"Location", NERClass::LOC}, std::pair{"Person", NERClass::PER},
                              std::pair{"Organisation", NERClass::ORG}})
      out += std::string(label) + "\t" + class_text(cls, rng, 18) + "\n";
  return out;
}

struct EntitySpec {
  std::string term;
  NERClass cls;
};

/// Ten images and ten snippets drawn from the entity's class.
inline EvidenceBundle class_bundle(const std::string& term, NERClass cls, std::uint64_t seed) {
  EvidenceBundle b;
  b.term = term;
  b.provider_id = "replay";
  ObjectClass obj = cls == NERClass::PER   ? ObjectClass::HumanFace
                    : cls == NERClass::ORG ? ObjectClass::CompanyLogo
                                           : ObjectClass::City;
  // Same images for every entity of a class keeps image indicators identical
  // within a class.
  for (int r = 1; r <= 10; ++r)
    b.images.push_back({render_object_image(obj, 1000 + static_cast<std::uint64_t>(r)), "image/png", r});
  Rng rng(seed ^ fnv1a64(term));
  for (int r = 1; r <= 10; ++r)
    b.snippets.push_back({term + " " + class_text(cls, rng, 3), class_text(cls, rng, 12), r});
  return b;
}

inline const std::vector<EntitySpec>& fixture_entities() {
  static const std::vector<EntitySpec> e{
      {"mariana", NERClass::PER},  {"joaquim", NERClass::PER},   {"henrietta", NERClass::PER},
      {"oskar", NERClass::PER},    {"lucinda", NERClass::PER},   {"teodor", NERClass::PER},
      {"berlin", NERClass::LOC},   {"lisbon", NERClass::LOC},    {"bonn", NERClass::LOC},
      {"kyoto", NERClass::LOC},    {"nairobi", NERClass::LOC},   {"oslo", NERClass::LOC},
      {"kaufland", NERClass::ORG}, {"miCRs0ft", NERClass::ORG},  {"siemens", NERClass::ORG},
      {"nestle", NERClass::ORG},   {"ikea", NERClass::ORG},      {"lufthansa", NERClass::ORG},
  };
  return e;
}

/// Twelve sentences, CoNLL two-column with Twitter NER fine tags. Every class
/// occurs sentence-initially, after a verb and after a preposition, at varied
/// offsets, so position and POS context never separate classes on their own.
inline const std::vector<std::vector<std::pair<std::string, std::string>>>& fixture_sentences() {
  static const std::vector<std::vector<std::pair<std::string, std::string>>> s{
      {{"mariana", "B-person"}, {"flew", "O"}, {"to", "O"}, {"kyoto", "B-geo-loc"}, {"with", "O"}, {"pizza", "O"}},
      {{"siemens", "B-company"}, {"hired", "O"}, {"joaquim", "B-person"}, {"in", "O"}, {"nairobi", "B-geo-loc"}},
      {{"in", "O"}, {"lisbon", "B-geo-loc"}, {"we", "O"}, {"enjoyed", "O"}, {"coffee", "O"}, {"at", "O"}, {"nestle", "B-company"}},
      {{"pizza", "O"}, {"reached", "O"}, {"henrietta", "B-person"}, {"at", "O"}, {"kaufland", "B-company"}},
      {{"oslo", "B-geo-loc"}, {"waited", "O"}, {"for", "O"}, {"oskar", "B-person"}, {"at", "O"}, {"ikea", "B-company"}},
      {{"miCRs0ft", "B-company"}, {"hired", "O"}, {"lucinda", "B-person"}, {"for", "O"}, {"music", "O"}},
      {{"at", "O"}, {"lufthansa", "B-company"}, {"we", "O"}, {"met", "O"}, {"teodor", "B-person"}, {"in", "O"}, {"kyoto", "B-geo-loc"}},
      {{"music", "O"}, {"delighted", "O"}, {"oskar", "B-person"}, {"in", "O"}, {"lisbon", "B-geo-loc"}},
      {{"henrietta", "B-person"}, {"walked", "O"}, {"to", "O"}, {"nestle", "B-company"}, {"with", "O"}, {"coffee", "O"}},
      {{"in", "O"}, {"kyoto", "B-geo-loc"}, {"we", "O"}, {"visited", "O"}, {"ikea", "B-company"}, {"with", "O"}, {"mariana", "B-person"}},
      {{"lufthansa", "B-company"}, {"served", "O"}, {"pizza", "O"}, {"in", "O"}, {"oslo", "B-geo-loc"}},
      {{"at", "O"}, {"home", "O"}, {"we", "O"}, {"called", "O"}, {"joaquim", "B-person"}, {"from", "O"}, {"nairobi", "B-geo-loc"}},
  };
  return s;
}

struct FixturePaths {
  fs::path root;
  fs::path images() const { return root / "images"; }
  fs::path dump() const { return root / "kb_dump.tsv"; }
  fs::path replay() const { return root / "replay"; }
  fs::path gold() const { return root / "gold.conll"; }
  fs::path sentences() const { return root / "sentences.txt"; }
  fs::path config() const { return root / "config.json"; }
};

struct FixtureOptions {
  std::size_t images_per_class = 8;
  std::size_t docs_per_class = 40;
  std::uint64_t seed = 7;
  int k = 32;
};

/// Writes the complete fixture world under `root` and returns its paths.
inline FixturePaths write_fixture_world(const fs::path& root, const FixtureOptions& opt = {}) {
  FixturePaths p{root};
  fs::create_directories(root);
  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    auto cls = static_cast<ObjectClass>(c);
    auto dir = p.images() / std::string(to_string(cls)) / "pos";
    fs::create_directories(dir);
    for (std::size_t v = 0; v < opt.images_per_class; ++v)
      write_file(dir / ("img_" + std::to_string(v) + ".png"), render_object_image(cls, v));
  }
  write_file(p.dump(), make_kb_dump(opt.docs_per_class, opt.seed));

  fs::create_directories(p.replay());
  for (const auto& e : fixture_entities()) {
    auto b = class_bundle(e.term, e.cls, opt.seed);
    detail::write_entry(p.replay() / cache_key(e.term), b);
  }

  std::string conll, plain;
  for (const auto& sent : fixture_sentences()) {
    std::string line;
    for (const auto& [tok, tag] : sent) {
      conll += tok + "\t" + tag + "\n";
      line += (line.empty() ? "" : " ") + tok;
    }
    conll += "\n";
    plain += line + "\n";
  }
  write_file(p.gold(), conll);
  write_file(p.sentences(), plain);

  nlohmann::ordered_json cfg = {
      {"retrieval.provider", "replay"},
      {"retrieval.n", 10},
      {"retrieval.cache_dir", "cache"},
      {"retrieval.replay_dir", "replay"},
      {"vision.train_dir", "images"},
      {"vision.k", opt.k},
      {"vision.seed", 42},
      {"vision.kmeans_max_samples", 6000},
      {"text.source", "dump"},
      {"text.dump_file", "kb_dump.tsv"},
      {"evaluation.folds", 4},
      {"evaluation.seed", 13},
      {"models.dir", "models"},
  };
  write_file(p.config(), cfg.dump(2) + "\n");
  return p;
}

}  // namespace mmner::synthetic
