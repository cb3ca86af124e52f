#pragma once

// Entropy-criterion decision tree with exhaustive best-split search, used to
// fuse indicator vectors into PER/LOC/ORG/NONE, and the compound-override
// resolution that turns candidate predictions into token labels.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmner/core.hpp"
#include "mmner/indicators.hpp"
#include "mmner/preprocess.hpp"

namespace mmner {

using ClassCounts = std::array<double, kNumClasses>;

/// Shannon entropy in bits of the normalized counts.
inline double entropy(std::span<const double> counts) {
  double total = 0;
  for (double c : counts) {
    if (c < 0) throw DomainError("entropy: negative count");
    total += c;
  }
  if (!(total > 0)) throw DomainError("entropy: counts sum to zero");
  double h = 0;
  for (double c : counts) {
    if (c <= 0) continue;
    double p = c / total;
    h -= p * std::log2(p);
  }
  return h;
}

inline double entropy(const ClassCounts& counts) { return entropy(std::span<const double>(counts)); }

/// argmax, ties resolved LOC < ORG < PER < NONE.
inline NERClass majority_class(const ClassCounts& counts) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumClasses; ++k)
    if (counts[k] > counts[best]) best = k;
  return static_cast<NERClass>(best);
}

struct Split {
  std::size_t feature = 0;
  double threshold = 0;  // numeric: left iff x <= threshold; categorical: left iff x == threshold
  double gain = 0;
  bool categorical = false;
};

inline constexpr double kMinGain = 1e-12;

struct TreeParams {
  std::size_t min_samples_leaf = 1;
  std::optional<std::size_t> max_depth;
};

/// Best information-gain split over every feature and candidate threshold.
/// Numeric thresholds are midpoints between consecutive distinct values;
/// categorical features split one category against the rest. Ties go to the
/// lowest feature id, then the lowest threshold. nullopt means "make a leaf".
inline std::optional<Split> best_split(const std::vector<std::vector<double>>& x,
                                       std::span<const NERClass> y,
                                       std::span<const FeatureKind> kinds,
                                       std::span<const std::size_t> rows,
                                       std::size_t min_samples_leaf = 1) {
  const std::size_t n = rows.size();
  if (n < 2) return std::nullopt;
  ClassCounts parent{};
  for (auto r : rows) parent[index_of(y[r])] += 1;
  const double h = entropy(parent);
  if (h <= 0) return std::nullopt;

  std::optional<Split> best;
  auto consider = [&](std::size_t f, double thr, bool cat, const ClassCounts& left, double nl) {
    double nr = static_cast<double>(n) - nl;
    if (nl < static_cast<double>(min_samples_leaf) || nr < static_cast<double>(min_samples_leaf)) return;
    ClassCounts right{};
    for (std::size_t k = 0; k < kNumClasses; ++k) right[k] = parent[k] - left[k];
    double g = h - (nl / n) * entropy(left) - (nr / n) * entropy(right);
    if (g <= kMinGain) return;
    if (!best || g > best->gain + kMinGain) best = Split{f, thr, g, cat};
  };

  std::vector<std::size_t> order(rows.begin(), rows.end());
  for (std::size_t f = 0; f < kinds.size(); ++f) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a][f] < x[b][f]; });
    if (kinds[f] == FeatureKind::Categorical) {
      for (std::size_t s = 0; s < n;) {
        std::size_t e = s;
        ClassCounts left{};
        while (e < n && x[order[e]][f] == x[order[s]][f]) left[index_of(y[order[e]])] += 1, ++e;
        if (e - s < n) consider(f, x[order[s]][f], true, left, static_cast<double>(e - s));
        s = e;
      }
    } else {
      ClassCounts left{};
      for (std::size_t s = 0; s + 1 < n; ++s) {
        left[index_of(y[order[s]])] += 1;
        double a = x[order[s]][f], b = x[order[s + 1]][f];
        if (a == b) continue;
        consider(f, a + (b - a) / 2, false, left, static_cast<double>(s + 1));
      }
    }
  }
  return best;
}

struct TreeNode {
  ClassCounts counts{};
  std::optional<Split> split;
  std::unique_ptr<TreeNode> left, right;

  bool is_leaf() const { return !split.has_value(); }
};

struct TreePrediction {
  NERClass cls = NERClass::NONE;
  ClassCounts distribution{};

  double probability() const { return distribution[index_of(cls)]; }
};

class DecisionTree {
 public:
  DecisionTree() = default;

  const std::vector<std::string>& feature_names() const { return names_; }
  const std::vector<FeatureKind>& feature_kinds() const { return kinds_; }
  const TreeNode& root() const { return *root_; }
  const TreeParams& params() const { return params_; }

  std::size_t node_count() const { return count(root_.get()); }
  std::size_t depth() const { return depth_of(root_.get()); }

  static DecisionTree train(const std::vector<std::vector<double>>& x, std::span<const NERClass> y,
                            std::vector<std::string> names, std::vector<FeatureKind> kinds,
                            const TreeParams& params = {}) {
    if (x.empty() || x.size() != y.size())
      throw TrainingError("decision tree: need a non-empty training set with one label per row");
    if (names.size() != kinds.size()) throw TrainingError("decision tree: feature names/kinds mismatch");
    for (const auto& row : x)
      if (row.size() != kinds.size()) throw TrainingError("decision tree: ragged feature rows");
    if (params.min_samples_leaf < 1) throw TrainingError("min_samples_leaf must be >= 1");
    DecisionTree t;
    t.names_ = std::move(names);
    t.kinds_ = std::move(kinds);
    t.params_ = params;
    std::vector<std::size_t> rows(x.size());
    std::iota(rows.begin(), rows.end(), 0);
    t.root_ = t.grow(x, y, rows, 0);
    return t;
  }

  TreePrediction predict(std::span<const double> features) const {
    if (features.size() != kinds_.size())
      throw SchemaError("expected " + std::to_string(kinds_.size()) + " features, got " +
                        std::to_string(features.size()));
    const TreeNode* node = root_.get();
    while (!node->is_leaf()) {
      const auto& s = *node->split;
      double v = features[s.feature];
      bool go_left = s.categorical ? v == s.threshold : v <= s.threshold;
      node = go_left ? node->left.get() : node->right.get();
    }
    TreePrediction p;
    p.cls = majority_class(node->counts);
    double total = 0;
    for (double c : node->counts) total += c;
    for (std::size_t k = 0; k < kNumClasses; ++k) p.distribution[k] = node->counts[k] / total;
    return p;
  }

  /// Checks the tree was trained on the indicator schema before routing.
  TreePrediction predict(const IndicatorVector& v) const {
    const auto expected = indicator_feature_names();
    for (const auto& name : expected)
      if (std::find(names_.begin(), names_.end(), name) == names_.end())
        throw SchemaError("tree is missing indicator feature '" + name + "'");
    if (names_ != expected) throw SchemaError("tree feature order differs from the indicator schema");
    return predict(feature_values(v));
  }

  nlohmann::ordered_json to_json(const std::string& config_digest = {}) const {
    nlohmann::ordered_json j;
    j["format"] = "mmner.decision_tree/1";
    j["config_digest"] = config_digest;
    j["criterion"] = "entropy";
    j["splitter"] = "best";
    j["min_samples_leaf"] = params_.min_samples_leaf;
    j["max_depth"] = params_.max_depth ? nlohmann::ordered_json(*params_.max_depth) : nlohmann::ordered_json();
    auto feats = nlohmann::ordered_json::array();
    for (std::size_t f = 0; f < names_.size(); ++f)
      feats.push_back({{"id", f}, {"name", names_[f]},
                       {"kind", kinds_[f] == FeatureKind::Categorical ? "categorical" : "numeric"}});
    j["features"] = std::move(feats);
    j["root"] = node_json(*root_);
    return j;
  }

  static DecisionTree from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "mmner.decision_tree/1") throw ModelError("not a decision tree file");
    DecisionTree t;
    for (const auto& f : j.at("features")) {
      t.names_.push_back(f.at("name").get<std::string>());
      t.kinds_.push_back(f.at("kind").get<std::string>() == "categorical" ? FeatureKind::Categorical
                                                                         : FeatureKind::Numeric);
    }
    t.params_.min_samples_leaf = j.value("min_samples_leaf", std::size_t{1});
    if (j.contains("max_depth") && !j["max_depth"].is_null()) t.params_.max_depth = j["max_depth"].get<std::size_t>();
    t.root_ = parse_node(j.at("root"), t.kinds_.size());
    return t;
  }

 private:
  std::unique_ptr<TreeNode> grow(const std::vector<std::vector<double>>& x, std::span<const NERClass> y,
                                 const std::vector<std::size_t>& rows, std::size_t depth) const {
    auto node = std::make_unique<TreeNode>();
    for (auto r : rows) node->counts[index_of(y[r])] += 1;
    if (params_.max_depth && depth >= *params_.max_depth) return node;
    auto split = best_split(x, y, kinds_, rows, params_.min_samples_leaf);
    if (!split) return node;
    std::vector<std::size_t> l, r;
    for (auto i : rows) {
      double v = x[i][split->feature];
      (split->categorical ? v == split->threshold : v <= split->threshold) ? l.push_back(i) : r.push_back(i);
    }
    node->split = split;
    node->left = grow(x, y, l, depth + 1);
    node->right = grow(x, y, r, depth + 1);
    return node;
  }

  nlohmann::ordered_json node_json(const TreeNode& n) const {
    nlohmann::ordered_json j;
    j["counts"] = {{"LOC", n.counts[0]}, {"ORG", n.counts[1]}, {"PER", n.counts[2]}, {"NONE", n.counts[3]}};
    if (n.is_leaf()) return j;
    j["feature_id"] = n.split->feature;
    j["feature"] = names_[n.split->feature];
    j["test"] = n.split->categorical ? "==" : "<=";
    j["threshold"] = n.split->threshold;
    j["gain"] = n.split->gain;
    j["left"] = node_json(*n.left);
    j["right"] = node_json(*n.right);
    return j;
  }

  static std::unique_ptr<TreeNode> parse_node(const nlohmann::json& j, std::size_t nfeat) {
    auto node = std::make_unique<TreeNode>();
    const auto& c = j.at("counts");
    node->counts = {c.at("LOC").get<double>(), c.at("ORG").get<double>(), c.at("PER").get<double>(),
                    c.at("NONE").get<double>()};
    if (!j.contains("feature_id")) {
      double total = 0;
      for (double v : node->counts) total += v;
      if (!(total > 0)) throw ModelError("decision tree leaf with empty distribution");
      return node;
    }
    Split s;
    s.feature = j.at("feature_id").get<std::size_t>();
    if (s.feature >= nfeat) throw ModelError("decision tree references unknown feature id");
    s.categorical = j.at("test").get<std::string>() == "==";
    s.threshold = j.at("threshold").get<double>();
    s.gain = j.value("gain", 0.0);
    node->split = s;
    node->left = parse_node(j.at("left"), nfeat);
    node->right = parse_node(j.at("right"), nfeat);
    return node;
  }

  static std::size_t count(const TreeNode* n) {
    return n->is_leaf() ? 1 : 1 + count(n->left.get()) + count(n->right.get());
  }
  static std::size_t depth_of(const TreeNode* n) {
    return n->is_leaf() ? 0 : 1 + std::max(depth_of(n->left.get()), depth_of(n->right.get()));
  }

  std::vector<std::string> names_;
  std::vector<FeatureKind> kinds_;
  TreeParams params_;
  std::unique_ptr<TreeNode> root_;
};

/// Trains on indicator vectors with the standard feature schema.
inline DecisionTree train_fusion_tree(std::span<const IndicatorVector> vectors, std::span<const NERClass> labels,
                                      const TreeParams& params = {}) {
  std::vector<std::vector<double>> x;
  x.reserve(vectors.size());
  for (const auto& v : vectors) x.push_back(feature_values(v));
  return DecisionTree::train(x, labels, indicator_feature_names(), indicator_feature_kinds(), params);
}

// ---------------------------------------------------------------------------
// Sentence annotation

struct CandidatePrediction {
  EntityCandidate candidate;
  NERClass cls = NERClass::NONE;
  double probability = 0;  // leaf probability of cls
  ClassCounts distribution{};
};

struct SentenceAnnotation {
  std::string sentence_id;
  std::vector<NERClass> labels;  // one per token
  std::vector<CandidatePrediction> candidates;
};

/// Singles label their token. A compound overrides its constituents when its
/// class differs from theirs and its probability is at least each of theirs.
inline SentenceAnnotation resolve_compounds(std::string sentence_id, std::size_t token_count,
                                            std::vector<CandidatePrediction> preds) {
  SentenceAnnotation out;
  out.sentence_id = std::move(sentence_id);
  out.labels.assign(token_count, NERClass::NONE);
  std::vector<const CandidatePrediction*> single(token_count, nullptr);
  for (const auto& p : preds) {
    if (p.candidate.is_compound()) continue;
    if (p.candidate.start >= token_count) throw PreconditionError("candidate outside sentence");
    single[p.candidate.start] = &p;
    out.labels[p.candidate.start] = p.cls;
  }
  for (const auto& p : preds) {
    if (!p.candidate.is_compound()) continue;
    if (p.candidate.end >= token_count) throw PreconditionError("candidate outside sentence");
    bool differs = false, dominates = true;
    for (std::size_t t = p.candidate.start; t <= p.candidate.end; ++t) {
      const auto* s = single[t];
      NERClass c = s ? s->cls : NERClass::NONE;
      double prob = s ? s->probability : 0.0;
      if (c != p.cls) differs = true;
      if (p.probability < prob) dominates = false;
    }
    if (differs && dominates)
      for (std::size_t t = p.candidate.start; t <= p.candidate.end; ++t) out.labels[t] = p.cls;
  }
  out.candidates = std::move(preds);
  return out;
}

}  // namespace mmner
