// Acceptance checks, one PASS/FAIL line each. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mmner/commands.hpp"
#include "mmner/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mmner;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void check(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
};

// ---------------------------------------------------------------------------

CvPredictionTable cv_table(int loc_pos, int org_pos, int per_pos, int raw_pos) {
  CvPredictionTable t(10);
  for (int i = 0; i < 10; ++i) {
    t[i].loc = i < loc_pos ? 1 : -1;
    t[i].org = i < org_pos ? 1 : -1;
    t[i].per = i < per_pos ? 1 : -1;
    t[i].loc_raw.fill(-1);
  }
  for (int r = 0; r < raw_pos; ++r) t[r % 10].loc_raw[r / 10] = 1;
  return t;
}

std::vector<SnippetPrediction> snippet_preds(int loc, int org, int per) {
  std::vector<SnippetPrediction> out;
  for (auto [cls, count] : {std::pair{NERClass::LOC, loc}, {NERClass::ORG, org}, {NERClass::PER, per}})
    for (int i = 0; i < count; ++i) out.push_back({static_cast<int>(out.size()) + 1, cls, {}, false});
  while (out.size() < 10) {
    SnippetPrediction p;
    p.rank = static_cast<int>(out.size()) + 1;
    p.oov = true;
    out.push_back(p);
  }
  return out;
}

Outcome indicator_replay() {
  Outcome o;
  struct Expect {
    const char* term;
    CvPredictionTable table;
    std::vector<SnippetPrediction> snippets;
    CvIndicators cv;
    TextIndicators text;
  };
  std::vector<Expect> cases{
      {"miCRs0ft", cv_table(6, 9, 5, 22), snippet_preds(0, 5, 0), {0.2, 0.0, 0.8, 6, -56}, {0.0, 0.0, 0.5, 5}},
      {"kaufland", cv_table(6, 7, 5, 25), snippet_preds(1, 4, 0), {0.2, 0.0, 0.4, 2, -50}, {0.1, 0.0, 0.4, 3}},
  };
  auto tagger = make_tagger(PipelineConfig{});
  for (const auto& c : cases) {
    auto tagged = tag_pos(tokenize(std::string("i love ") + c.term, "s0"), *tagger);
    auto cands = extract_candidates(tagged);
    o.check(cands.size() == 1 && cands[0].term == c.term, std::string(c.term) + " is not a single candidate");
    if (!o.ok) return o;
    auto v = assemble(cands[0], 0, compute_cv_indicators(c.table, 10), compute_text_indicators(c.snippets, 10),
                      c.table.size(), c.snippets.size());
    o.check(v.cv == c.cv, std::string(c.term) + " image indicators differ");
    o.check(v.text == c.text, std::string(c.term) + " snippet indicators differ");
  }
  return o;
}

Outcome compound_override() {
  Outcome o;
  auto tagger = make_tagger(PipelineConfig{});
  auto tagged = tag_pos(tokenize("paris hilton was once the toast of the town", "s0"), *tagger);
  const std::map<std::string, std::pair<NERClass, double>> tree_out{
      {"paris", {NERClass::LOC, 0.6}}, {"hilton", {NERClass::LOC, 0.7}}, {"paris hilton", {NERClass::PER, 0.7}}};
  std::vector<CandidatePrediction> preds;
  for (const auto& c : extract_candidates(tagged)) {
    CandidatePrediction p;
    p.candidate = c;
    auto it = tree_out.find(c.term);
    p.cls = it == tree_out.end() ? NERClass::NONE : it->second.first;
    p.probability = it == tree_out.end() ? 1.0 : it->second.second;
    preds.push_back(p);
  }
  o.check(preds.size() >= 3, "paris/hilton/paris hilton candidates missing");
  auto a = resolve_compounds(tagged.id, tagged.tokens.size(), preds);
  o.check(a.labels[0] == NERClass::PER && a.labels[1] == NERClass::PER, "paris hilton not labelled PER PER");
  return o;
}

NERClass oracle_predict(const oracle::Node& n, const std::vector<double>& row) {
  const oracle::Node* cur = &n;
  while (cur->split) {
    const auto& s = *cur->split;
    bool left = s.categorical ? row[s.feature] == s.threshold : row[s.feature] <= s.threshold;
    cur = left ? cur->left.get() : cur->right.get();
  }
  int best = 0;
  for (int k = 1; k < 4; ++k)
    if (cur->counts[k] > cur->counts[best]) best = k;
  return static_cast<NERClass>(best);
}

Outcome tree_oracle() {
  Outcome o;
  o.check(std::abs(entropy(ClassCounts{7, 0, 0, 0}) - 0.0) <= 1e-12, "entropy of a pure node");
  o.check(std::abs(entropy(ClassCounts{4, 0, 4, 0}) - 1.0) <= 1e-12, "entropy of a two-way split");
  o.check(std::abs(entropy(ClassCounts{3, 3, 3, 3}) - 2.0) <= 1e-12, "entropy of a uniform node");
  Rng rng(2024);
  int compared = 0;
  for (int t = 0; t < 200; ++t) {
    std::size_t nf = 1 + uniform_index(rng, 4), n = 2 + uniform_index(rng, 19);
    std::vector<FeatureKind> kinds;
    std::vector<bool> cat;
    std::vector<std::string> names;
    for (std::size_t f = 0; f < nf; ++f) {
      bool c = uniform_index(rng, 3) == 0;
      kinds.push_back(c ? FeatureKind::Categorical : FeatureKind::Numeric);
      cat.push_back(c);
      names.push_back("f" + std::to_string(f));
    }
    std::vector<std::vector<double>> x;
    std::vector<NERClass> y;
    std::vector<int> yi;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row;
      for (std::size_t f = 0; f < nf; ++f)
        row.push_back(cat[f] ? static_cast<double>(uniform_index(rng, 4)) : uniform01(rng) < 0.3 ? 0.0 : uniform01(rng));
      x.push_back(row);
      yi.push_back(static_cast<int>(uniform_index(rng, 4)));
      y.push_back(static_cast<NERClass>(yi.back()));
    }
    auto tree = DecisionTree::train(x, y, names, kinds);
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    auto ref = oracle::grow(x, yi, cat, rows, 1);
    for (const auto& row : x)
      o.check(tree.predict(row).cls == oracle_predict(*ref, row), "dataset " + std::to_string(t) + " disagrees");
    ++compared;
  }
  o.detail = o.ok ? std::to_string(compared) + " datasets" : o.detail;
  return o;
}

Outcome bof_and_kmeans() {
  Outcome o;
  Rng rng(99);
  for (int t = 0; t < 300; ++t) {
    std::size_t k = 2 + uniform_index(rng, 7), dim = 1 + uniform_index(rng, 8), n = uniform_index(rng, 51);
    VisualVocabulary v;
    v.k = k;
    v.dim = dim;
    for (std::size_t i = 0; i < k * dim; ++i) v.centroids.push_back(uniform01(rng));
    DescriptorSet s;
    s.dim = dim;
    for (std::size_t i = 0; i < n * dim; ++i) s.data.push_back(static_cast<float>(uniform01(rng)));
    auto h = encode_bof(s, v);
    double sum = std::accumulate(h.bins.begin(), h.bins.end(), 0.0);
    o.check(n == 0 ? sum == 0.0 : std::abs(sum - 1.0) <= 1e-12, "histogram does not sum to 1");
    o.check(h.bins == oracle::bof(s, v), "assignment differs from brute force");
  }
  for (int t = 0; t < 100; ++t) {
    std::vector<DescriptorSet> sets(3);
    std::size_t dim = 2 + uniform_index(rng, 6);
    for (auto& s : sets) {
      s.dim = dim;
      std::size_t n = 20 + uniform_index(rng, 60);
      for (std::size_t i = 0; i < n * dim; ++i) s.data.push_back(static_cast<float>(uniform01(rng)));
    }
    KMeansTrace trace;
    KMeansOptions opt;
    opt.tol = 0;
    build_vocabulary(sets, 2 + uniform_index(rng, 7), 1000 + static_cast<std::uint64_t>(t), opt, &trace);
    for (std::size_t i = 1; i < trace.objective.size(); ++i)
      o.check(trace.objective[i] <= trace.objective[i - 1], "objective rose in trial " + std::to_string(t));
  }
  return o;
}

Outcome tfidf_hand_check() {
  Outcome o;
  std::vector<std::string> docs{"apple banana apple", "banana cherry", "banana date elder"};
  auto v = TfidfVectorizer::fit(docs, 1);
  const double rare = std::log(4.0 / 2.0) + 1.0;  // df = 1 of D = 3
  const double n1 = std::sqrt(4 * rare * rare + 1), n2 = std::sqrt(1 + rare * rare), n3 = std::sqrt(1 + 2 * rare * rare);
  // columns: apple banana cherry date elder
  const double want[3][5] = {{2 * rare / n1, 1 / n1, 0, 0, 0},
                             {0, 1 / n2, rare / n2, 0, 0},
                             {0, 1 / n3, 0, rare / n3, rare / n3}};
  o.check(v.vocabulary.size() == 5, "vocabulary is not 5 words");
  o.check(v.idf[v.vocabulary.at("banana")] == 1.0, "idf of the all-document term is not exactly 1");
  for (int d = 0; d < 3; ++d) {
    double dense[5] = {0, 0, 0, 0, 0};
    auto x = v.transform(docs[d]);
    for (std::size_t i = 0; i < x.index.size(); ++i) dense[x.index[i]] = x.value[i];
    for (int c = 0; c < 5; ++c) o.check(std::abs(dense[c] - want[d][c]) <= 1e-9, "cell differs in doc " + std::to_string(d));
  }
  return o;
}

Outcome metrics_hand_check() {
  Outcome o;
  constexpr auto P = NERClass::PER, L = NERClass::LOC, G = NERClass::ORG, N = NERClass::NONE;
  GoldCorpus c;
  c.sentences.push_back({"s0", std::vector<std::string>(10, "w"), {P, P, P, L, N, N, G, N, N, N}});
  auto r = score({{P, P, N, L, P, P, G, N, N, L}}, c);
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  o.check(r[P].tp == 2 && r[P].fp == 2 && r[P].fn == 1, "PER confusion counts");
  o.check(near(r[P].precision, 0.5) && near(r[P].recall, 2.0 / 3) && near(r[P].f1, 4.0 / 7), "PER P/R/F1");
  o.check(near(r[L].precision, 0.5) && near(r[L].recall, 1.0) && near(r[L].f1, 2.0 / 3), "LOC P/R/F1");
  o.check(near(r[G].f1, 1.0), "ORG F1");
  o.check(near(r.plo.f1, (4.0 / 7 + 2.0 / 3 + 1.0) / 3), "PLO F1");
  auto same = score({c.sentences[0].gold}, c);
  for (auto k : {P, L, G, N})
    o.check(same[k].precision == 1.0 && same[k].recall == 1.0 && same[k].f1 == 1.0, "identical corpus below 1.0");
  return o;
}

struct RunArtifacts {
  EvaluationReport report;
  std::map<std::string, std::string> files;  // relative path -> bytes
};

RunArtifacts full_run(const fs::path& root) {
  auto p = synthetic::write_fixture_world(root);
  auto cfg = PipelineConfig::load(p.config().string());
  std::ostringstream log;
  cmd_train_vision(cfg, log);
  cmd_train_text(cfg, log);
  cmd_train_tree(cfg, p.gold(), log);
  RunArtifacts a;
  a.report = cmd_evaluate(cfg, {p.gold(), root / "report.tsv", root / "predictions.conll"}, log);
  cmd_annotate(cfg, {p.sentences(), root / "annotated.txt", root / "indicators.tsv"}, log);
  for (const auto& e : fs::recursive_directory_iterator(root / "models"))
    if (e.is_regular_file()) a.files[fs::relative(e.path(), root).string()] = read_file(e.path());
  for (auto f : {"report.tsv", "predictions.conll", "annotated.txt", "indicators.tsv"}) a.files[f] = read_file(root / f);
  return a;
}

Outcome end_to_end() {
  Outcome o;
  testutil::TempDir d("accept");
  const auto before = http_request_count();
  auto t0 = std::chrono::steady_clock::now();
  auto run = full_run(d.path());
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.check(run.report.folds == 4 && run.report.sentences == 12, "not a 4-fold run over 12 sentences");
  o.check(run.report.plo.f1 == 1.0, "PLO F1 = " + std::to_string(run.report.plo.f1));
  o.check(secs < 60, "took " + std::to_string(secs) + " s");
  o.check(http_request_count() == before, "network requests were issued");
  if (o.ok) o.detail = "PLO F1 1.0, " + std::to_string(secs).substr(0, 4) + " s, 0 requests";
  return o;
}

Outcome determinism() {
  Outcome o;
  testutil::TempDir a("det-a"), b("det-b");
  auto ra = full_run(a.path()), rb = full_run(b.path());
  o.check(ra.files.size() == rb.files.size(), "different artifact sets");
  for (const auto& [name, bytes] : ra.files) {
    auto it = rb.files.find(name);
    o.check(it != rb.files.end() && it->second == bytes, name + " differs");
  }
  o.check(ra.report.plo.f1 == rb.report.plo.f1 && ra.report.plo.precision == rb.report.plo.precision,
          "reports differ");
  if (o.ok) o.detail = std::to_string(ra.files.size()) + " files identical";
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"indicator-replay", 1, indicator_replay},
      {"compound-override", 1, compound_override},
      {"tree-oracle", 30, tree_oracle},
      {"bof-kmeans", 60, bof_and_kmeans},
      {"tfidf-hand-check", 1, tfidf_hand_check},
      {"metrics-hand-check", 1, metrics_hand_check},
      {"end-to-end-offline", 60, end_to_end},
      {"determinism", 300, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs >= c.budget_s) {
      o.ok = false;
      o.detail = "over the " + std::to_string(static_cast<int>(c.budget_s)) + " s budget";
    }
    std::printf("%s %-20s %8.3f s  %s\n", o.ok ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    failures += o.ok ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
