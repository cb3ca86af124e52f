#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "mmner/evidence.hpp"
#include "mmner/http_search.hpp"
#include "test_util.hpp"

using namespace mmner;
using testutil::TempDir;

namespace {

EvidenceBundle sample_bundle(const std::string& term, int n_img = 3, int n_snip = 3) {
  EvidenceBundle b;
  b.term = term;
  b.provider_id = "fake";
  b.retrieved_at = 1700000000;
  for (int r = 1; r <= n_img; ++r) {
    std::string bytes = "\x89PNG\r\n\x1a\n";
    bytes.push_back('\0');
    bytes += term + std::to_string(r) + std::string(1, static_cast<char>(0xff));
    b.images.push_back({bytes, "image/png", r});
  }
  for (int r = 1; r <= n_snip; ++r) b.snippets.push_back({"title " + std::to_string(r), "excerpt about " + term, r});
  return b;
}

class CountingProvider : public SearchProvider {
 public:
  std::string id() const override { return "counting"; }
  EvidenceBundle search(const std::string& term, std::size_t n) override {
    ++calls;
    if (delay.count()) std::this_thread::sleep_for(delay);
    return sample_bundle(term, static_cast<int>(n) + 2, static_cast<int>(n));
  }
  std::atomic<int> calls{0};
  std::chrono::milliseconds delay{0};
};

class FailingProvider : public SearchProvider {
 public:
  std::string id() const override { return "failing"; }
  EvidenceBundle search(const std::string&, std::size_t) override { throw IOError("connection refused"); }
};

}  // namespace

TEST(CacheKey, NormalizationAndDistinctness) {
  EXPECT_EQ(cache_key("Paris Hilton"), cache_key("paris  hilton"));
  EXPECT_NE(cache_key("paris"), cache_key("hilton"));
  EXPECT_THROW(cache_key("   "), PreconditionError);
}

TEST(CacheKey, GoldenValue) { EXPECT_EQ(cache_key("kaufland"), "kaufland-8b1efdbae895097f"); }

TEST(CacheKey, FilesystemSafe) {
  auto k = cache_key("a/b\\..c:d*?\"<>| \xc3\xa9t\xc3\xa9");
  for (char c : k) EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') << k;
}

TEST(EvidenceCache, RoundTripIsLossless) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  auto b = sample_bundle("kaufland", 4, 2);
  cache.put(b);
  auto got = cache.get("KAUFLAND");
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(*got, b);
}

TEST(EvidenceCache, MalformedEntryIsEvicted) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  cache.put(sample_bundle("ikea"));
  write_file(d.path() / cache_key("ikea") / "meta.json", "{not json");
  EXPECT_FALSE(cache.get("ikea").has_value());
  EXPECT_FALSE(fs::exists(d.path() / cache_key("ikea")));
}

TEST(EvidenceCache, StatsAndClear) {
  TempDir d("cache");
  EvidenceCache cache(d.path() / "c");
  EXPECT_EQ(cache.stats().entries, 0u);
  cache.clear();  // missing directory is fine
  cache.put(sample_bundle("a"));
  cache.put(sample_bundle("b"));
  auto s = cache.stats();
  EXPECT_EQ(s.entries, 2u);
  EXPECT_GT(s.bytes, 0u);
  cache.clear();
  EXPECT_EQ(cache.stats().entries, 0u);
}

TEST(FetchEvidence, SecondCallHitsCache) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  CountingProvider p;
  auto a = fetch_evidence("kaufland", p, cache, 10);
  auto b = fetch_evidence("Kaufland", p, cache, 10);
  EXPECT_EQ(p.calls.load(), 1);
  EXPECT_EQ(a.images.size(), 10u);  // truncated to n
  EXPECT_EQ(a.snippets.size(), 10u);
  EXPECT_EQ(a.images, b.images);
}

TEST(FetchEvidence, EmptyTermIsPrecondition) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  CountingProvider p;
  EXPECT_THROW(fetch_evidence("  ", p, cache), PreconditionError);
  EXPECT_EQ(p.calls.load(), 0);
}

TEST(FetchEvidence, ProviderFailureIsRetrievalErrorWithTermAndCause) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  FailingProvider p;
  try {
    fetch_evidence("siemens", p, cache);
    FAIL();
  } catch (const RetrievalError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("siemens"), std::string::npos);
    EXPECT_NE(msg.find("connection refused"), std::string::npos);
  }
  EXPECT_EQ(cache.stats().entries, 0u);
}

TEST(FetchEvidence, ConcurrentColdKeyCallsProviderOnce) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  CountingProvider p;
  p.delay = std::chrono::milliseconds(50);
  std::vector<std::thread> ts;
  std::vector<EvidenceBundle> out(8);
  for (int i = 0; i < 8; ++i) ts.emplace_back([&, i] { out[i] = fetch_evidence("nestle", p, cache, 5); });
  for (auto& t : ts) t.join();
  EXPECT_EQ(p.calls.load(), 1);
  for (auto& b : out) EXPECT_EQ(b.images, out[0].images);
}

TEST(FetchEvidence, DistinctTermsConcurrently) {
  TempDir d("cache");
  EvidenceCache cache(d.path());
  CountingProvider p;
  std::vector<std::thread> ts;
  for (int i = 0; i < 8; ++i) ts.emplace_back([&, i] { fetch_evidence("term" + std::to_string(i % 4), p, cache, 3); });
  for (auto& t : ts) t.join();
  EXPECT_EQ(cache.stats().entries, 4u);
  EXPECT_LE(p.calls.load(), 8);
  EXPECT_GE(p.calls.load(), 4);
}

TEST(ReplayProvider, ServesFixtureAndEmptyForUnknown) {
  TempDir d("replay");
  auto b = sample_bundle("miCRs0ft", 10, 10);
  detail::write_entry(d.path() / cache_key("miCRs0ft"), b);
  ReplayProvider rp(d.path());
  auto got = rp.search("miCRs0ft", 10);
  EXPECT_EQ(got.images, b.images);
  EXPECT_EQ(got.snippets, b.snippets);
  auto none = rp.search("unknownterm", 10);
  EXPECT_TRUE(none.images.empty());
  EXPECT_TRUE(none.snippets.empty());
  ReplayProvider again(d.path());
  EXPECT_EQ(again.search("miCRs0ft", 10), got);
}

TEST(ReplayProvider, WarmCacheNoProviderCall) {
  TempDir d("replay");
  detail::write_entry(d.path() / "replay" / cache_key("miCRs0ft"), sample_bundle("miCRs0ft", 10, 10));
  ReplayProvider rp(d.path() / "replay");
  EvidenceCache cache(d.path() / "cache");
  fetch_evidence("miCRs0ft", rp, cache, 10);
  CountingProvider counting;
  auto b = fetch_evidence("miCRs0ft", counting, cache, 10);
  EXPECT_EQ(counting.calls.load(), 0);
  EXPECT_EQ(b.images.size(), 10u);
  EXPECT_EQ(b.snippets.size(), 10u);
}

TEST(ReplayProvider, MissingDirectoryIsConfigError) {
  EXPECT_THROW(ReplayProvider("/nonexistent/mmner/replay"), ConfigError);
}

TEST(HttpSearch, FetchesSnippetsAndImagesFromConfiguredFields) {
  httplib::Server srv;
  std::atomic<int> web_hits{0};
  srv.Get("/web", [&](const httplib::Request& req, httplib::Response& res) {
    ++web_hits;
    EXPECT_EQ(req.get_param_value("q"), "paris hilton");
    EXPECT_EQ(req.get_param_value("count"), "2");
    EXPECT_EQ(req.get_header_value("X-Key"), "secret");
    res.set_content(R"({"webPages":{"value":[{"name":"t1","snippet":"e1"},{"name":"t2","snippet":"e2"},{"name":"t3","snippet":"e3"}]}})",
                    "application/json");
  });
  int port = 0;
  srv.Get("/img", [&](const httplib::Request&, httplib::Response& res) {
    std::string body = R"({"value":[{"contentUrl":"http://127.0.0.1:PORT/a.png"},{"contentUrl":"http://127.0.0.1:PORT/missing.png"},{"contentUrl":"http://127.0.0.1:PORT/b.jpg"}]})";
    for (auto p = body.find("PORT"); p != std::string::npos; p = body.find("PORT")) body.replace(p, 4, std::to_string(port));
    res.set_content(body, "application/json");
  });
  srv.Get("/a.png", [](const httplib::Request&, httplib::Response& res) { res.set_content("PNGDATA", "image/png"); });
  srv.Get("/b.jpg", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("JPGDATA", "application/octet-stream");
  });
  port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  HttpSearchConfig cfg;
  cfg.web_url_template = "http://127.0.0.1:" + std::to_string(port) + "/web?q={query}";
  cfg.image_url_template = "http://127.0.0.1:" + std::to_string(port) + "/img?q={query}&n={count}";
  cfg.headers = {{"X-Key", "secret"}};
  HttpSearchProvider p(cfg);
  auto before = http_request_count();
  auto b = p.search("paris hilton", 2);
  srv.stop();
  th.join();

  EXPECT_GT(http_request_count(), before);
  ASSERT_EQ(b.snippets.size(), 2u);
  EXPECT_EQ(b.snippets[1].title, "t2");
  EXPECT_EQ(b.snippets[1].rank, 2);
  ASSERT_EQ(b.images.size(), 2u);
  EXPECT_EQ(b.images[0].content, "PNGDATA");
  EXPECT_EQ(b.images[1].media_type, "image/jpeg");
  EXPECT_EQ(b.images[1].rank, 2);
  EXPECT_EQ(web_hits.load(), 1);
}

TEST(HttpSearch, UnreachableHostSurfacesAsRetrievalError) {
  HttpSearchConfig cfg;
  cfg.web_url_template = "http://127.0.0.1:1/web?q={query}";
  cfg.timeout_seconds = 2;
  HttpSearchProvider p(cfg);
  TempDir d("cache");
  EvidenceCache cache(d.path());
  EXPECT_THROW(fetch_evidence("x", p, cache), RetrievalError);
}

TEST(HttpSearch, NeedsATemplate) { EXPECT_THROW(HttpSearchProvider(HttpSearchConfig{}), ConfigError); }

TEST(Http, TemplateAndEncoding) {
  EXPECT_EQ(url_encode("a b&c/é"), "a%20b%26c%2F%C3%A9");
  EXPECT_EQ(fill_template("{a}-{b}-{a}", {{"a", "1"}, {"b", "{a}"}}), "1-{a}-1");
  auto u = parse_url("http://host:8080/p?q=1");
  EXPECT_EQ(u.origin, "http://host:8080");
  EXPECT_EQ(u.path, "/p?q=1");
  EXPECT_THROW(parse_url("host/p"), ConfigError);
}
