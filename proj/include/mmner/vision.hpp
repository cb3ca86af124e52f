#pragma once

// Image side of the pipeline: dense gradient-orientation descriptors, a k-means
// visual vocabulary, bag-of-features histograms and the bank of twelve binary
// object detectors (ten scene types for LOC, company logos for ORG, human faces
// for PER).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "mmner/core.hpp"
#include "mmner/evidence.hpp"
#include "mmner/svm.hpp"

namespace mmner {

inline constexpr std::size_t kDescriptorDim = 128;

// ---------------------------------------------------------------------------
// Images

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, [0, 1]

  float at(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

inline GrayImage to_gray_image(const cv::Mat& gray8) {
  GrayImage g;
  g.width = gray8.cols;
  g.height = gray8.rows;
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      g.pixels[static_cast<std::size_t>(y) * g.width + x] = gray8.at<std::uint8_t>(y, x) / 255.0f;
  return g;
}

/// Decodes to grayscale and rescales so the longest side equals max_side.
inline GrayImage decode_image(const ImageEvidence& img, int max_side = 256) {
  if (img.content.empty()) throw ImageDecodeError("empty image payload (rank " + std::to_string(img.rank) + ")");
  cv::Mat buf(1, static_cast<int>(img.content.size()), CV_8U,
              const_cast<char*>(img.content.data()));
  cv::Mat gray = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw ImageDecodeError("undecodable image (rank " + std::to_string(img.rank) + ")");
  if (max_side > 0) {
    int longest = std::max(gray.cols, gray.rows);
    if (longest != max_side) {
      double s = static_cast<double>(max_side) / longest;
      int w = std::max(1, static_cast<int>(std::lround(gray.cols * s)));
      int h = std::max(1, static_cast<int>(std::lround(gray.rows * s)));
      cv::Mat resized;
      cv::resize(gray, resized, cv::Size(w, h), 0, 0, s < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
      gray = resized;
    }
  }
  return to_gray_image(gray);
}

/// PNG-encodes an 8-bit grayscale buffer.
inline std::string encode_png(const std::vector<std::uint8_t>& pixels, int width, int height) {
  cv::Mat m(height, width, CV_8U, const_cast<std::uint8_t*>(pixels.data()));
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", m, out)) throw IOError("png encoding failed");
  return std::string(out.begin(), out.end());
}

// ---------------------------------------------------------------------------
// Descriptors

struct DescriptorParams {
  int max_side = 256;
  int stride = 8;
  int patch = 16;  // divisible by 4
};

struct DescriptorSet {
  std::size_t dim = kDescriptorDim;
  std::vector<float> data;  // size() x dim, row-major
  std::string source;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
};

/// Closed-form number of dense-grid patches along one side.
inline int grid_count(int side, int patch, int stride) {
  return side < patch ? 0 : (side - patch) / stride + 1;
}

/// Dense-grid SIFT-style descriptors: 4x4 spatial cells x 8 orientation bins,
/// Gaussian-weighted gradient magnitudes, L2-normalized, clamped at 0.2 and
/// renormalized. Flat patches give zero vectors.
inline DescriptorSet extract_descriptors(const GrayImage& img, const DescriptorParams& p = {},
                                         std::string source = {}) {
  if (p.patch <= 0 || p.patch % 4 != 0 || p.stride <= 0)
    throw ConfigError("descriptor patch must be a positive multiple of 4 and stride positive");
  DescriptorSet out;
  out.source = std::move(source);
  const int W = img.width, H = img.height;
  const std::size_t npx = static_cast<std::size_t>(W) * H;
  std::vector<float> mag(npx), ori(npx);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      float dx = img.at(x + 1, y) - img.at(x - 1, y);
      float dy = img.at(x, y + 1) - img.at(x, y - 1);
      auto idx = static_cast<std::size_t>(y) * W + x;
      mag[idx] = std::sqrt(dx * dx + dy * dy);
      float a = std::atan2(dy, dx);
      if (a < 0) a += 2.0f * std::numbers::pi_v<float>;
      ori[idx] = a;
    }

  const int P = p.patch, cell = P / 4;
  const float center = (P - 1) / 2.0f;
  const float sigma2 = 2.0f * (P / 2.0f) * (P / 2.0f);
  std::vector<float> weight(static_cast<std::size_t>(P) * P);
  for (int v = 0; v < P; ++v)
    for (int u = 0; u < P; ++u)
      weight[static_cast<std::size_t>(v) * P + u] =
          std::exp(-((u - center) * (u - center) + (v - center) * (v - center)) / sigma2);

  const int nx = grid_count(W, P, p.stride), ny = grid_count(H, P, p.stride);
  out.data.reserve(static_cast<std::size_t>(nx) * ny * kDescriptorDim);
  std::array<float, kDescriptorDim> d{};
  for (int gy = 0; gy < ny; ++gy)
    for (int gx = 0; gx < nx; ++gx) {
      d.fill(0.0f);
      const int x0 = gx * p.stride, y0 = gy * p.stride;
      for (int v = 0; v < P; ++v)
        for (int u = 0; u < P; ++u) {
          auto idx = static_cast<std::size_t>(y0 + v) * W + (x0 + u);
          float m = mag[idx] * weight[static_cast<std::size_t>(v) * P + u];
          if (m == 0.0f) continue;
          float bin = ori[idx] / (2.0f * std::numbers::pi_v<float>) * 8.0f;
          int b0 = static_cast<int>(std::floor(bin)) % 8;
          float frac = bin - std::floor(bin);
          int b1 = (b0 + 1) % 8;
          std::size_t base = static_cast<std::size_t>((v / cell) * 4 + (u / cell)) * 8;
          d[base + b0] += m * (1.0f - frac);
          d[base + b1] += m * frac;
        }
      auto l2 = [&] {
        double s = 0;
        for (float f : d) s += static_cast<double>(f) * f;
        return std::sqrt(s);
      };
      double n = l2();
      if (n > 1e-12) {
        for (auto& f : d) f = std::min(static_cast<float>(f / n), 0.2f);
        double n2 = l2();
        for (auto& f : d) f = static_cast<float>(f / n2);
      } else {
        d.fill(0.0f);
      }
      out.data.insert(out.data.end(), d.begin(), d.end());
    }
  return out;
}

inline DescriptorSet extract_descriptors(const ImageEvidence& img, const DescriptorParams& p = {}) {
  return extract_descriptors(decode_image(img, p.max_side), p, "rank " + std::to_string(img.rank));
}

// ---------------------------------------------------------------------------
// Visual vocabulary

struct VisualVocabulary {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;  // k x dim
  std::uint64_t seed = 0;

  std::span<const double> centroid(std::size_t c) const { return {centroids.data() + c * dim, dim}; }
};

struct KMeansOptions {
  std::size_t max_iter = 100;
  double tol = 1e-4;            // max centroid shift
  std::size_t max_samples = 0;  // 0 = use every descriptor
};

struct KMeansTrace {
  std::vector<double> objective;  // sum of squared distances after each assignment step
  std::size_t iterations = 0;
};

template <typename T>
double squared_distance(std::span<const T> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    double t = static_cast<double>(a[j]) - b[j];
    s += t * t;
  }
  return s;
}

/// Index of the nearest centroid; ties go to the lowest index.
template <typename T>
std::size_t nearest_centroid(std::span<const T> x, const VisualVocabulary& v) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < v.k; ++c) {
    double d = squared_distance(x, v.centroid(c));
    if (d < best_d) best_d = d, best = c;
  }
  return best;
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded from
/// the point farthest from its current centroid.
inline VisualVocabulary build_vocabulary(std::span<const DescriptorSet> sets, std::size_t k,
                                         std::uint64_t seed, const KMeansOptions& opt = {},
                                         KMeansTrace* trace = nullptr) {
  if (k < 2) throw VocabularyError("k must be >= 2");
  std::size_t dim = 0, total = 0;
  for (const auto& s : sets) {
    if (s.size() == 0) continue;
    if (dim == 0) dim = s.dim;
    if (s.dim != dim) throw VocabularyError("descriptor dimensions differ across sets");
    total += s.size();
  }
  if (total < k)
    throw VocabularyError("need at least k=" + std::to_string(k) + " descriptors, got " +
                          std::to_string(total));

  std::vector<const float*> pts;
  pts.reserve(total);
  for (const auto& s : sets)
    for (std::size_t i = 0; i < s.size(); ++i) pts.push_back(s.data.data() + i * s.dim);

  Rng rng(seed);
  if (opt.max_samples > 0 && pts.size() > opt.max_samples) {
    // partial Fisher-Yates, then restore original order for determinism of ties
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < opt.max_samples; ++i)
      std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    idx.resize(opt.max_samples);
    std::sort(idx.begin(), idx.end());
    std::vector<const float*> sub;
    sub.reserve(idx.size());
    for (auto i : idx) sub.push_back(pts[i]);
    pts.swap(sub);
    if (pts.size() < k) throw VocabularyError("sample smaller than k");
  }
  const std::size_t n = pts.size();
  auto point = [&](std::size_t i) { return std::span<const float>(pts[i], dim); };

  VisualVocabulary v;
  v.k = k;
  v.dim = dim;
  v.seed = seed;
  v.centroids.assign(k * dim, 0.0);
  auto set_centroid = [&](std::size_t c, std::size_t i) {
    for (std::size_t j = 0; j < dim; ++j) v.centroids[c * dim + j] = pts[i][j];
  };

  // k-means++
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(rng, n);
  set_centroid(0, first);
  for (std::size_t c = 1; c < k; ++c) {
    double total_w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(point(i), v.centroid(c - 1)));
      total_w += d2[i];
    }
    if (!(total_w > 0))
      throw VocabularyError("fewer than k=" + std::to_string(k) + " distinct descriptors");
    double r = uniform01(rng) * total_w, acc = 0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0) continue;
      acc += d2[i];
      pick = i;
      if (acc > r) break;
    }
    set_centroid(c, pick);
  }

  std::vector<std::size_t> assign(n, 0);
  std::vector<double> dist(n, 0.0);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    double obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = nearest_centroid(point(i), v);
      dist[i] = squared_distance(point(i), v.centroid(assign[i]));
      obj += dist[i];
    }
    if (trace) trace->objective.push_back(obj);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[assign[i] * dim + j] += pts[i][j];
    }
    double max_shift = 0;
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> next(dim);
      if (counts[c] == 0) {
        std::size_t far = 0;
        double far_d = -1;
        for (std::size_t i = 0; i < n; ++i)
          if (!taken[i] && dist[i] > far_d) far_d = dist[i], far = i;
        taken[far] = true;
        dist[far] = 0;
        for (std::size_t j = 0; j < dim; ++j) next[j] = pts[far][j];
      } else {
        for (std::size_t j = 0; j < dim; ++j)
          next[j] = sums[c * dim + j] / static_cast<double>(counts[c]);
      }
      double shift = std::sqrt(squared_distance(std::span<const double>(next), v.centroid(c)));
      max_shift = std::max(max_shift, shift);
      std::copy(next.begin(), next.end(), v.centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
    if (trace) trace->iterations = iter + 1;
    if (max_shift < opt.tol) break;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Bag of features

struct BofHistogram {
  std::vector<double> bins;
};

/// Nearest-centroid counts, L1-normalized; empty input gives all zeros.
inline BofHistogram encode_bof(const DescriptorSet& set, const VisualVocabulary& vocab) {
  if (set.size() > 0 && set.dim != vocab.dim)
    throw VocabularyError("descriptor dimension " + std::to_string(set.dim) +
                          " does not match vocabulary dimension " + std::to_string(vocab.dim));
  BofHistogram h;
  h.bins.assign(vocab.k, 0.0);
  if (set.size() == 0) return h;
  for (std::size_t i = 0; i < set.size(); ++i) h.bins[nearest_centroid(set.row(i), vocab)] += 1.0;
  const double n = static_cast<double>(set.size());
  for (auto& b : h.bins) b /= n;
  return h;
}

// ---------------------------------------------------------------------------
// Object detectors

enum class ObjectClass : int {
  Building = 0, Suburb, Street, City, Country, Mountain, Highway, Forest, Coast, Map,
  CompanyLogo, HumanFace
};

inline constexpr std::size_t kNumObjectClasses = 12;
inline constexpr std::size_t kNumLocModels = 10;

inline constexpr std::array<std::string_view, kNumObjectClasses> kObjectClassNames{
    "building", "suburb", "street", "city", "country", "mountain", "highway", "forest",
    "coast", "map", "company_logo", "human_face"};

inline std::string_view to_string(ObjectClass c) { return kObjectClassNames[static_cast<std::size_t>(c)]; }

inline std::optional<ObjectClass> parse_object_class(std::string_view s) {
  for (std::size_t i = 0; i < kNumObjectClasses; ++i)
    if (kObjectClassNames[i] == s) return static_cast<ObjectClass>(i);
  return std::nullopt;
}

inline NERClass ner_class_of(ObjectClass c) {
  if (c == ObjectClass::CompanyLogo) return NERClass::ORG;
  if (c == ObjectClass::HumanFace) return NERClass::PER;
  return NERClass::LOC;
}

struct ObjectClassifier {
  ObjectClass object_class = ObjectClass::Building;
  RbfSvmModel model;
  double threshold = 0.0;

  double score(const BofHistogram& h) const { return model.decision(h.bins); }
  int predict(const BofHistogram& h) const { return score(h) > threshold ? +1 : -1; }
};

inline ObjectClassifier train_object_classifier(const std::vector<BofHistogram>& pos,
                                                const std::vector<BofHistogram>& neg,
                                                ObjectClass object_class,
                                                const NuSvmParams& params = {}) {
  if (pos.empty() || neg.empty())
    throw TrainingError(std::string(to_string(object_class)) +
                        ": need at least one positive and one negative histogram");
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& h : pos) x.push_back(h.bins), y.push_back(+1);
  for (const auto& h : neg) x.push_back(h.bins), y.push_back(-1);
  try {
    return ObjectClassifier{object_class, train_nu_svm(x, y, params), 0.0};
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(to_string(object_class)) + ": " + e.what());
  }
}

struct ClassifierBank {
  std::array<ObjectClassifier, kNumLocModels> loc_models;
  ObjectClassifier org_model;
  ObjectClassifier per_model;

  const ObjectClassifier& model(ObjectClass c) const {
    if (c == ObjectClass::CompanyLogo) return org_model;
    if (c == ObjectClass::HumanFace) return per_model;
    return loc_models[static_cast<std::size_t>(c)];
  }
  ObjectClassifier& model(ObjectClass c) {
    return const_cast<ObjectClassifier&>(std::as_const(*this).model(c));
  }
};

using HistogramsByClass = std::map<ObjectClass, std::vector<BofHistogram>>;

/// Trains all twelve detectors. A class without explicit negatives draws them
/// uniformly (seeded) from the other classes' positives, as many as it has
/// positives. Either side is subsampled to at most three times the other so
/// nu = 0.5 stays feasible.
inline ClassifierBank train_classifier_bank(const HistogramsByClass& positives,
                                            const HistogramsByClass& negatives, std::uint64_t seed,
                                            const NuSvmParams& params = {}) {
  ClassifierBank bank;
  for (std::size_t ci = 0; ci < kNumObjectClasses; ++ci) {
    auto cls = static_cast<ObjectClass>(ci);
    auto it = positives.find(cls);
    if (it == positives.end() || it->second.empty())
      throw TrainingError("no training images for object class " + std::string(to_string(cls)));
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * (ci + 1));
    std::vector<const BofHistogram*> pos, neg;
    for (const auto& h : it->second) pos.push_back(&h);
    if (auto nit = negatives.find(cls); nit != negatives.end() && !nit->second.empty()) {
      for (const auto& h : nit->second) neg.push_back(&h);
    } else {
      for (const auto& [other, hs] : positives)
        if (other != cls)
          for (const auto& h : hs) neg.push_back(&h);
      shuffle(neg, rng);
      neg.resize(std::min(neg.size(), pos.size()));
    }
    auto cap = [&](std::vector<const BofHistogram*>& side, std::size_t other) {
      if (side.size() <= 3 * other) return;
      shuffle(side, rng);
      side.resize(3 * other);
    };
    cap(neg, pos.size());
    cap(pos, neg.size());
    std::vector<BofHistogram> p, n;
    for (auto* h : pos) p.push_back(*h);
    for (auto* h : neg) n.push_back(*h);
    bank.model(cls) = train_object_classifier(p, n, cls, params);
  }
  return bank;
}

struct CvPrediction {
  int per = -1;
  int org = -1;
  int loc = -1;  // OR over the scene detectors
  std::array<int, kNumLocModels> loc_raw{};
  bool decoded = true;
};

using CvPredictionTable = std::vector<CvPrediction>;

inline CvPrediction undecodable_prediction() {
  CvPrediction p;
  p.loc_raw.fill(-1);
  p.decoded = false;
  return p;
}

inline CvPrediction classify_histogram(const ClassifierBank& bank, const BofHistogram& h) {
  CvPrediction p;
  p.per = bank.per_model.predict(h);
  p.org = bank.org_model.predict(h);
  p.loc = -1;
  for (std::size_t m = 0; m < kNumLocModels; ++m) {
    p.loc_raw[m] = bank.loc_models[m].predict(h);
    if (p.loc_raw[m] == +1) p.loc = +1;
  }
  return p;
}

/// One row per image. Images that fail to decode count as -1 everywhere.
inline CvPredictionTable classify_images(const ClassifierBank& bank,
                                         std::span<const ImageEvidence> images,
                                         const VisualVocabulary& vocab,
                                         const DescriptorParams& params = {}) {
  CvPredictionTable table;
  table.reserve(images.size());
  for (const auto& img : images) {
    try {
      table.push_back(classify_histogram(bank, encode_bof(extract_descriptors(img, params), vocab)));
    } catch (const ImageDecodeError&) {
      table.push_back(undecodable_prediction());
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Persistence (JSON text; doubles round-trip exactly)

inline nlohmann::ordered_json vocabulary_to_json(const VisualVocabulary& v, const std::string& config_digest) {
  nlohmann::ordered_json j;
  j["format"] = "mmner.vocabulary/1";
  j["config_digest"] = config_digest;
  j["k"] = v.k;
  j["dim"] = v.dim;
  j["seed"] = v.seed;
  j["centroids"] = v.centroids;
  return j;
}

inline VisualVocabulary vocabulary_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mmner.vocabulary/1") throw ModelError("not a vocabulary file");
  VisualVocabulary v;
  v.k = j.at("k").get<std::size_t>();
  v.dim = j.at("dim").get<std::size_t>();
  v.seed = j.at("seed").get<std::uint64_t>();
  v.centroids = j.at("centroids").get<std::vector<double>>();
  if (v.k < 2 || v.centroids.size() != v.k * v.dim) throw ModelError("vocabulary shape mismatch");
  return v;
}

inline nlohmann::ordered_json classifier_to_json(const ObjectClassifier& c, const std::string& config_digest,
                                                 std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["format"] = "mmner.object_classifier/1";
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["object_class"] = to_string(c.object_class);
  j["ner_class"] = to_string(ner_class_of(c.object_class));
  j["kernel"] = "rbf";
  j["gamma"] = c.model.gamma;
  j["rho"] = c.model.rho;
  j["threshold"] = c.threshold;
  j["dim"] = c.model.dim;
  j["coef"] = c.model.coef;
  j["support_vectors"] = c.model.support_vectors;
  return j;
}

inline ObjectClassifier classifier_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mmner.object_classifier/1") throw ModelError("not an object classifier file");
  auto cls = parse_object_class(j.at("object_class").get<std::string>());
  if (!cls) throw ModelError("unknown object class " + j.at("object_class").dump());
  ObjectClassifier c;
  c.object_class = *cls;
  c.threshold = j.value("threshold", 0.0);
  c.model.gamma = j.at("gamma").get<double>();
  c.model.rho = j.at("rho").get<double>();
  c.model.dim = j.at("dim").get<std::size_t>();
  c.model.coef = j.at("coef").get<std::vector<double>>();
  c.model.support_vectors = j.at("support_vectors").get<std::vector<double>>();
  if (c.model.support_vectors.size() != c.model.coef.size() * c.model.dim)
    throw ModelError("support vector shape mismatch for " + std::string(to_string(*cls)));
  return c;
}

}  // namespace mmner
