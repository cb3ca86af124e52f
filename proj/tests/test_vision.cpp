#include <gtest/gtest.h>

#include <cmath>

#include "mmner/synthetic.hpp"
#include "mmner/vision.hpp"
#include "oracles.hpp"

using namespace mmner;

namespace {

ImageEvidence png(const std::vector<std::uint8_t>& px, int w, int h) { return {encode_png(px, w, h), "image/png", 1}; }

DescriptorSet random_set(Rng& rng, std::size_t n, std::size_t dim) {
  DescriptorSet s;
  s.dim = dim;
  for (std::size_t i = 0; i < n * dim; ++i) s.data.push_back(static_cast<float>(uniform01(rng)));
  return s;
}

VisualVocabulary random_vocab(Rng& rng, std::size_t k, std::size_t dim) {
  VisualVocabulary v;
  v.k = k;
  v.dim = dim;
  for (std::size_t i = 0; i < k * dim; ++i) v.centroids.push_back(uniform01(rng));
  return v;
}

}  // namespace

TEST(Descriptors, UniformGrayGivesZeroVectors) {
  auto img = decode_image(png(std::vector<std::uint8_t>(256 * 256, 128), 256, 256));
  auto d = extract_descriptors(img);
  ASSERT_GT(d.size(), 0u);
  for (float x : d.data) EXPECT_EQ(x, 0.0f);
}

TEST(Descriptors, GridCountClosedForm) {
  EXPECT_EQ(grid_count(256, 16, 8), 31);
  EXPECT_EQ(grid_count(10, 16, 8), 0);
  Rng rng(3);
  std::vector<std::uint8_t> px(256 * 256);
  for (auto& p : px) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  auto d = extract_descriptors(decode_image(png(px, 256, 256)));
  EXPECT_EQ(d.size(), 961u);
  EXPECT_EQ(d.dim, 128u);
}

TEST(Descriptors, NormalizedClampedAndFinite) {
  Rng rng(4);
  std::vector<std::uint8_t> px(64 * 48);
  for (auto& p : px) p = static_cast<std::uint8_t>(uniform_index(rng, 256));
  auto d = extract_descriptors(decode_image(png(px, 64, 48)));
  EXPECT_EQ(d.size(), static_cast<std::size_t>(grid_count(256, 16, 8) * grid_count(192, 16, 8)));
  for (std::size_t i = 0; i < d.size(); ++i) {
    double n2 = 0;
    for (float x : d.row(i)) {
      EXPECT_TRUE(std::isfinite(x));
      EXPECT_GE(x, 0.0f);
      n2 += static_cast<double>(x) * x;
    }
    if (n2 > 0) {
      EXPECT_NEAR(n2, 1.0, 1e-5);
    }
  }
}

TEST(Descriptors, UndecodableImageThrows) {
  EXPECT_THROW(decode_image({"not an image", "image/png", 1}), ImageDecodeError);
  EXPECT_THROW(decode_image({"", "image/png", 1}), ImageDecodeError);
}

TEST(Descriptors, LongestSideResizedTo256) {
  auto g = decode_image(png(std::vector<std::uint8_t>(100 * 50, 7), 100, 50));
  EXPECT_EQ(g.width, 256);
  EXPECT_EQ(g.height, 128);
}

TEST(Bof, SpecExampleAllNearestCentroidThree) {
  VisualVocabulary v;
  v.k = 5;
  v.dim = 2;
  v.centroids = {0, 0, 10, 0, 0, 10, 5, 5, 20, 20};
  DescriptorSet s;
  s.dim = 2;
  for (int i = 0; i < 10; ++i) s.data.insert(s.data.end(), {5.0f + 0.1f * static_cast<float>(i % 3), 5.0f});
  EXPECT_EQ(encode_bof(s, v).bins, (std::vector<double>{0, 0, 0, 1, 0}));
}

TEST(Bof, EmptySetGivesZeroHistogram) {
  Rng rng(1);
  auto v = random_vocab(rng, 4, 3);
  DescriptorSet s;
  s.dim = 3;
  EXPECT_EQ(encode_bof(s, v).bins, std::vector<double>(4, 0.0));
}

TEST(Bof, TiesGoToLowestCentroid) {
  VisualVocabulary v;
  v.k = 3;
  v.dim = 1;
  v.centroids = {1.0, -1.0, 1.0};
  DescriptorSet s;
  s.dim = 1;
  s.data = {0.0f};
  EXPECT_EQ(encode_bof(s, v).bins, (std::vector<double>{1, 0, 0}));
}

TEST(Bof, DimensionMismatchThrows) {
  Rng rng(1);
  auto v = random_vocab(rng, 3, 4);
  auto s = random_set(rng, 2, 5);
  EXPECT_THROW(encode_bof(s, v), VocabularyError);
}

TEST(Bof, MatchesOracleAndSumsToOne) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t k = 2 + uniform_index(rng, 7), dim = 1 + uniform_index(rng, 6), n = uniform_index(rng, 51);
    auto v = random_vocab(rng, k, dim);
    auto s = random_set(rng, n, dim);
    auto h = encode_bof(s, v);
    EXPECT_EQ(h.bins, oracle::bof(s, v));
    double sum = 0;
    for (double b : h.bins) sum += b;
    if (n == 0) {
      EXPECT_EQ(sum, 0.0);
    } else {
      EXPECT_NEAR(sum, 1.0, 1e-12);
    }
  }
}

TEST(KMeans, SeparatedCloudsRecoverMeans) {
  Rng rng(5);
  DescriptorSet s;
  s.dim = 2;
  for (int i = 0; i < 200; ++i) {
    float cx = i % 2 ? 10.0f : -10.0f;
    s.data.push_back(cx + static_cast<float>(uniform01(rng) - 0.5));
    s.data.push_back(static_cast<float>(uniform01(rng) - 0.5));
  }
  std::vector<DescriptorSet> sets{s};
  auto v = build_vocabulary(sets, 2, 11);
  std::vector<double> xs{v.centroids[0], v.centroids[2]};
  std::sort(xs.begin(), xs.end());
  EXPECT_NEAR(xs[0], -10.0, 0.1);
  EXPECT_NEAR(xs[1], 10.0, 0.1);
}

TEST(KMeans, DeterministicUnderSeed) {
  Rng rng(8);
  std::vector<DescriptorSet> sets{random_set(rng, 300, 8), random_set(rng, 100, 8)};
  auto a = build_vocabulary(sets, 6, 99);
  auto b = build_vocabulary(sets, 6, 99);
  EXPECT_EQ(a.centroids, b.centroids);
  auto c = build_vocabulary(sets, 6, 100);
  EXPECT_NE(a.centroids, c.centroids);
}

TEST(KMeans, FewerDescriptorsThanKThrows) {
  Rng rng(8);
  std::vector<DescriptorSet> sets{random_set(rng, 3, 4)};
  EXPECT_THROW(build_vocabulary(sets, 4, 1), VocabularyError);
  EXPECT_THROW(build_vocabulary(sets, 1, 1), VocabularyError);
}

TEST(KMeans, ObjectiveNonIncreasingAndCentroidsDistinct) {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t dim = 1 + uniform_index(rng, 5), k = 2 + uniform_index(rng, 7);
    std::vector<DescriptorSet> sets{random_set(rng, 40 + uniform_index(rng, 100), dim)};
    KMeansTrace tr;
    auto v = build_vocabulary(sets, k, static_cast<std::uint64_t>(trial), {}, &tr);
    ASSERT_FALSE(tr.objective.empty());
    for (std::size_t i = 1; i < tr.objective.size(); ++i) EXPECT_LE(tr.objective[i], tr.objective[i - 1]);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) {
        auto ca = v.centroid(a), cb = v.centroid(b);
        EXPECT_FALSE(std::equal(ca.begin(), ca.end(), cb.begin()));
      }
  }
}

TEST(Svm, SeparableToyHistogramsFullTrainingAccuracy) {
  std::vector<BofHistogram> pos, neg;
  for (int i = 0; i < 6; ++i) {
    double e = 0.02 * i;
    pos.push_back({{0.9 - e, 0.1 + e, 0.0}});
    neg.push_back({{0.0, 0.1 + e, 0.9 - e}});
  }
  auto clf = train_object_classifier(pos, neg, ObjectClass::Forest);
  for (auto& h : pos) EXPECT_EQ(clf.predict(h), +1);
  for (auto& h : neg) EXPECT_EQ(clf.predict(h), -1);
}

TEST(Svm, SwappingLabelsFlipsPredictionsOnSymmetricSet) {
  Rng rng(31);
  std::vector<BofHistogram> pos, neg;
  for (int i = 0; i < 8; ++i) {
    double a = uniform01(rng), b = uniform01(rng);
    pos.push_back({{a, b, 0.5 + b}});
    neg.push_back({{0.5 + b, b, a}});  // mirror image
  }
  auto f = train_object_classifier(pos, neg, ObjectClass::Map);
  auto g = train_object_classifier(neg, pos, ObjectClass::Map);
  for (const auto* side : {&pos, &neg})
    for (auto& h : *side) {
      EXPECT_NE(f.score(h), 0.0);
      EXPECT_EQ(f.predict(h), -g.predict(h));
    }
}

TEST(Svm, SingleClassThrows) {
  std::vector<BofHistogram> pos{{{1, 0}}}, none;
  EXPECT_THROW(train_object_classifier(pos, none, ObjectClass::City), TrainingError);
  EXPECT_THROW(train_nu_svm({{1.0}, {2.0}}, {1, 1}), TrainingError);
}

TEST(Svm, PredictIsPlusMinusOneOnArbitraryInput) {
  Rng rng(9);
  std::vector<BofHistogram> pos, neg;
  for (int i = 0; i < 10; ++i) {
    pos.push_back({{uniform01(rng), uniform01(rng)}});
    neg.push_back({{uniform01(rng) + 0.5, uniform01(rng)}});
  }
  auto clf = train_object_classifier(pos, neg, ObjectClass::Coast);
  for (int i = 0; i < 100; ++i) {
    int p = clf.predict({{uniform01(rng) * 3, uniform01(rng) * 3}});
    EXPECT_TRUE(p == 1 || p == -1);
  }
}

TEST(Svm, PersistenceRoundTripsExactly) {
  std::vector<BofHistogram> pos{{{0.7, 0.3}}, {{0.8, 0.2}}}, neg{{{0.1, 0.9}}, {{0.3, 0.7}}};
  auto c = train_object_classifier(pos, neg, ObjectClass::HumanFace);
  auto j = nlohmann::json::parse(classifier_to_json(c, "d", 1).dump());
  auto r = classifier_from_json(j);
  EXPECT_EQ(r.object_class, ObjectClass::HumanFace);
  EXPECT_EQ(r.model.coef, c.model.coef);
  EXPECT_EQ(r.model.rho, c.model.rho);
  BofHistogram q{{0.5, 0.5}};
  EXPECT_EQ(r.score(q), c.score(q));
}

TEST(Bank, InventoryIsTenPlusOnePlusOne) {
  std::size_t loc = 0, org = 0, per = 0;
  for (std::size_t c = 0; c < kNumObjectClasses; ++c) {
    switch (ner_class_of(static_cast<ObjectClass>(c))) {
      case NERClass::LOC: ++loc; break;
      case NERClass::ORG: ++org; break;
      case NERClass::PER: ++per; break;
      default: break;
    }
  }
  EXPECT_EQ(loc, 10u);
  EXPECT_EQ(org, 1u);
  EXPECT_EQ(per, 1u);
  ClassifierBank b;
  EXPECT_EQ(b.loc_models.size(), 10u);
}

TEST(Bank, MissingClassThrows) {
  HistogramsByClass pos;
  pos[ObjectClass::City] = {{{1, 0}}};
  EXPECT_THROW(train_classifier_bank(pos, {}, 1), TrainingError);
}

TEST(Bank, ClassifyImagesEmptyAndUndecodable) {
  ClassifierBank bank;
  VisualVocabulary v;
  v.k = 2;
  v.dim = kDescriptorDim;
  v.centroids.assign(2 * kDescriptorDim, 0.0);
  EXPECT_TRUE(classify_images(bank, std::vector<ImageEvidence>{}, v).empty());
  std::vector<ImageEvidence> bad{{"garbage", "image/png", 1}};
  auto t = classify_images(bank, bad, v);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_FALSE(t[0].decoded);
  EXPECT_EQ(t[0].per, -1);
  EXPECT_EQ(t[0].org, -1);
  EXPECT_EQ(t[0].loc, -1);
  for (int x : t[0].loc_raw) EXPECT_EQ(x, -1);
}

// Faces-only bank: the PER column fires on every face image.
TEST(Bank, FaceImagesTriggerPerModel) {
  DescriptorParams dp;
  std::vector<DescriptorSet> all;
  std::map<ObjectClass, std::vector<DescriptorSet>> sets;
  for (std::size_t c = 0; c < kNumObjectClasses; ++c)
    for (std::uint64_t v = 0; v < 6; ++v) {
      auto cls = static_cast<ObjectClass>(c);
      ImageEvidence img{synthetic::render_object_image(cls, v), "image/png", 1};
      sets[cls].push_back(extract_descriptors(img, dp));
      all.push_back(sets[cls].back());
    }
  KMeansOptions opt;
  opt.max_samples = 4000;
  auto vocab = build_vocabulary(all, 24, 3, opt);
  HistogramsByClass pos;
  for (auto& [cls, ss] : sets)
    for (auto& s : ss) pos[cls].push_back(encode_bof(s, vocab));
  auto bank = train_classifier_bank(pos, {}, 5);
  std::vector<ImageEvidence> faces;
  for (int r = 1; r <= 10; ++r)
    faces.push_back({synthetic::render_object_image(ObjectClass::HumanFace, 1000 + static_cast<std::uint64_t>(r)), "image/png", r});
  auto table = classify_images(bank, faces, vocab, dp);
  ASSERT_EQ(table.size(), 10u);
  for (auto& row : table) EXPECT_EQ(row.per, +1);
}
