#pragma once

// Web evidence retrieval: bundles of top-N images and text snippets per term,
// a crash-safe on-disk cache with per-key single-flight, an offline replay
// provider that reads the same layout, and a configurable HTTP search adapter.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmner/core.hpp"

namespace mmner {

namespace fs = std::filesystem;

struct ImageEvidence {
  std::string content;  // raw encoded bytes
  std::string media_type;
  int rank = 1;
  bool operator==(const ImageEvidence&) const = default;
};

struct TextEvidence {
  std::string title;
  std::string excerpt;
  int rank = 1;
  bool operator==(const TextEvidence&) const = default;
};

struct EvidenceBundle {
  std::string term;
  std::vector<ImageEvidence> images;
  std::vector<TextEvidence> snippets;
  std::string provider_id;
  std::int64_t retrieved_at = 0;  // unix seconds
  bool operator==(const EvidenceBundle&) const = default;
};

inline std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

/// Filesystem-safe key: a readable slug of the normalized term followed by its
/// FNV-1a digest. Terms equal after case folding and whitespace collapsing
/// share a key.
inline std::string cache_key(std::string_view term) {
  auto norm = normalize_term(term);
  if (norm.empty()) throw PreconditionError("cache_key: empty term");
  std::string slug;
  for (unsigned char c : norm) {
    if (slug.size() >= 32) break;
    slug.push_back(std::isalnum(c) && c < 0x80 ? static_cast<char>(c) : '_');
  }
  return slug + "-" + hex64(fnv1a64(norm));
}

inline std::string extension_for(std::string_view media_type) {
  if (media_type == "image/png") return "png";
  if (media_type == "image/jpeg" || media_type == "image/jpg") return "jpg";
  if (media_type == "image/gif") return "gif";
  if (media_type == "image/bmp") return "bmp";
  if (media_type == "image/x-portable-graymap") return "pgm";
  if (media_type == "image/x-portable-pixmap") return "ppm";
  return "bin";
}

inline std::string media_type_for_extension(std::string ext) {
  ext = to_lower_ascii(ext);
  if (!ext.empty() && ext[0] == '.') ext.erase(0, 1);
  if (ext == "png") return "image/png";
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "gif") return "image/gif";
  if (ext == "bmp") return "image/bmp";
  if (ext == "pgm") return "image/x-portable-graymap";
  if (ext == "ppm") return "image/x-portable-pixmap";
  return "application/octet-stream";
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IOError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IOError("cannot write " + p.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IOError("short write to " + p.string());
}

/// Writes `data` next to `p` and renames it into place.
inline void write_file_atomic(const fs::path& p, std::string_view data) {
  auto tmp = p;
  tmp += ".tmp" + hex64(fnv1a64(p.string(), static_cast<std::uint64_t>(unix_now())));
  write_file(tmp, data);
  fs::rename(tmp, p);
}

// ---------------------------------------------------------------------------
// Entry directory format, shared by the cache and the replay corpus:
//   <dir>/meta.json, <dir>/img_<rank>.<ext>

namespace detail {

inline void write_entry(const fs::path& dir, const EvidenceBundle& b) {
  fs::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["term"] = b.term;
  meta["normalized"] = normalize_term(b.term);
  meta["provider"] = b.provider_id;
  meta["retrieved_at"] = b.retrieved_at;
  auto images = nlohmann::ordered_json::array();
  for (const auto& img : b.images) {
    auto file = "img_" + std::to_string(img.rank) + "." + extension_for(img.media_type);
    write_file(dir / file, img.content);
    images.push_back({{"rank", img.rank}, {"file", file}, {"media_type", img.media_type}});
  }
  meta["images"] = std::move(images);
  auto snippets = nlohmann::ordered_json::array();
  for (const auto& s : b.snippets)
    snippets.push_back({{"rank", s.rank}, {"title", s.title}, {"excerpt", s.excerpt}});
  meta["snippets"] = std::move(snippets);
  write_file(dir / "meta.json", meta.dump(2) + "\n");
}

/// Throws on any malformation.
inline EvidenceBundle read_entry(const fs::path& dir) {
  auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
  EvidenceBundle b;
  b.term = meta.at("term").get<std::string>();
  b.provider_id = meta.value("provider", std::string("replay"));
  b.retrieved_at = meta.value("retrieved_at", std::int64_t{0});
  for (const auto& img : meta.at("images")) {
    ImageEvidence e;
    e.rank = img.at("rank").get<int>();
    auto file = img.at("file").get<std::string>();
    if (file.find('/') != std::string::npos || file.find("..") != std::string::npos)
      throw IOError("image path escapes entry: " + file);
    e.media_type = img.value("media_type", media_type_for_extension(fs::path(file).extension()));
    e.content = read_file(dir / file);
    b.images.push_back(std::move(e));
  }
  for (const auto& s : meta.at("snippets"))
    b.snippets.push_back({s.value("title", ""), s.value("excerpt", ""), s.at("rank").get<int>()});
  auto by_rank = [](const auto& a, const auto& c) { return a.rank < c.rank; };
  std::stable_sort(b.images.begin(), b.images.end(), by_rank);
  std::stable_sort(b.snippets.begin(), b.snippets.end(), by_rank);
  return b;
}

inline void truncate(EvidenceBundle& b, std::size_t n) {
  if (b.images.size() > n) b.images.resize(n);
  if (b.snippets.size() > n) b.snippets.resize(n);
}

}  // namespace detail

// ---------------------------------------------------------------------------

class SearchProvider {
 public:
  virtual ~SearchProvider() = default;
  virtual std::string id() const = 0;
  /// At most n images and n snippets, ordered by rank.
  virtual EvidenceBundle search(const std::string& term, std::size_t n) = 0;
};

/// Serves bundles from a fixture corpus laid out like the cache. Unknown terms
/// yield an empty bundle.
class ReplayProvider final : public SearchProvider {
 public:
  explicit ReplayProvider(fs::path corpus_dir) : dir_(std::move(corpus_dir)) {
    std::error_code ec;
    if (!fs::is_directory(dir_, ec))
      throw ConfigError("replay corpus is not a readable directory: " + dir_.string());
    fs::directory_iterator probe(dir_, ec);
    if (ec) throw ConfigError("replay corpus unreadable: " + dir_.string() + ": " + ec.message());
  }

  std::string id() const override { return "replay"; }

  EvidenceBundle search(const std::string& term, std::size_t n) override {
    auto entry = dir_ / cache_key(term);
    if (!fs::exists(entry / "meta.json")) {
      EvidenceBundle empty;
      empty.term = term;
      empty.provider_id = id();
      return empty;
    }
    auto b = detail::read_entry(entry);
    b.term = term;
    b.provider_id = id();
    detail::truncate(b, n);
    return b;
  }

 private:
  fs::path dir_;
};

struct CacheStats {
  std::size_t entries = 0;
  std::uintmax_t bytes = 0;
};

/// One directory per key; entries are published by renaming a fully written
/// temp directory, so readers never see partial state.
class EvidenceCache {
 public:
  explicit EvidenceCache(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  std::optional<EvidenceBundle> get(const std::string& term) const {
    auto key = cache_key(term);
    auto entry = dir_ / key;
    std::error_code ec;
    if (!fs::exists(entry / "meta.json", ec)) {
      if (fs::exists(entry, ec)) fs::remove_all(entry, ec);
      return std::nullopt;
    }
    try {
      auto b = detail::read_entry(entry);
      if (normalize_term(b.term) != normalize_term(term)) throw IOError("key collision");
      return b;
    } catch (const std::exception&) {
      fs::remove_all(entry, ec);
      return std::nullopt;
    }
  }

  void put(const EvidenceBundle& bundle) {
    auto key = cache_key(bundle.term);
    fs::create_directories(dir_);
    auto tmp = dir_ / (".tmp-" + key + "-" + std::to_string(seq_.fetch_add(1)) + "-" +
                       hex64(fnv1a64(std::to_string(unix_now()), reinterpret_cast<std::uintptr_t>(this))));
    detail::write_entry(tmp, bundle);
    std::error_code ec;
    fs::rename(tmp, dir_ / key, ec);
    if (ec) {
      // Lost a publish race (or a stale entry exists): replace it.
      fs::remove_all(dir_ / key);
      fs::rename(tmp, dir_ / key, ec);
      if (ec) {
        fs::remove_all(tmp);
        throw IOError("cannot publish cache entry " + key + ": " + ec.message());
      }
    }
  }

  /// Cached bundle, or the result of `fetch` published to the cache. Concurrent
  /// callers for the same key share one fetch.
  EvidenceBundle get_or_fetch(const std::string& term,
                              const std::function<EvidenceBundle()>& fetch) {
    auto key = cache_key(term);
    std::shared_future<EvidenceBundle> fut;
    std::promise<EvidenceBundle> promise;
    bool leader = false;
    {
      std::lock_guard lock(mu_);
      if (auto it = inflight_.find(key); it != inflight_.end()) {
        fut = it->second;
      } else {
        fut = promise.get_future().share();
        inflight_.emplace(key, fut);
        leader = true;
      }
    }
    if (!leader) return fut.get();

    try {
      auto cached = get(term);
      EvidenceBundle result = cached ? std::move(*cached) : fetch();
      if (!cached) put(result);
      promise.set_value(result);
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
    {
      std::lock_guard lock(mu_);
      inflight_.erase(key);
    }
    return fut.get();
  }

  CacheStats stats() const {
    CacheStats s;
    std::error_code ec;
    if (!fs::is_directory(dir_, ec)) return s;
    for (const auto& e : fs::directory_iterator(dir_)) {
      auto name = e.path().filename().string();
      if (!e.is_directory() || name.starts_with(".tmp-")) continue;
      if (!fs::exists(e.path() / "meta.json")) continue;
      ++s.entries;
      for (const auto& f : fs::recursive_directory_iterator(e.path()))
        if (f.is_regular_file()) s.bytes += f.file_size();
    }
    return s;
  }

  /// Missing directory is a no-op.
  void clear() {
    std::error_code ec;
    if (!fs::exists(dir_, ec)) return;
    auto doomed = dir_;
    doomed += ".clearing-" + hex64(fnv1a64(dir_.string(), static_cast<std::uint64_t>(unix_now())));
    fs::rename(dir_, doomed);
    fs::remove_all(doomed);
  }

 private:
  fs::path dir_;
  std::mutex mu_;
  std::map<std::string, std::shared_future<EvidenceBundle>> inflight_;
  std::atomic<std::uint64_t> seq_{0};
};

/// Cached lookup of one term. Provider failures surface as RetrievalError.
inline EvidenceBundle fetch_evidence(const std::string& term, SearchProvider& provider,
                                     EvidenceCache& cache, std::size_t n = 10) {
  auto t = trim(term);
  if (t.empty()) throw PreconditionError("fetch_evidence: empty term");
  if (n == 0) throw PreconditionError("fetch_evidence: n must be >= 1");
  return cache.get_or_fetch(t, [&] {
    try {
      auto b = provider.search(t, n);
      b.term = t;
      detail::truncate(b, n);
      return b;
    } catch (const std::exception& e) {
      throw RetrievalError("term '" + t + "' via " + provider.id() + ": " + e.what());
    }
  });
}

}  // namespace mmner
