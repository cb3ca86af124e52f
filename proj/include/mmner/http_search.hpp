#pragma once

// Generic web-search adapter: URL templates for a text and an image query,
// JSON-pointer paths to the result arrays, and per-item field names.

#include <map>
#include <string>

#include "json.hpp"
#include "mmner/evidence.hpp"
#include "mmner/http.hpp"

namespace mmner {

struct HttpSearchConfig {
  // {query} is the url-encoded term, {count} the requested result count.
  // Either template may be empty to skip that modality.
  std::string web_url_template;
  std::string image_url_template;
  std::string count_param = "count";  // appended as &<count_param>=<n> when the template lacks {count}
  std::map<std::string, std::string> headers;
  std::string web_results_path = "/webPages/value";
  std::string title_field = "name";
  std::string excerpt_field = "snippet";
  std::string image_results_path = "/value";
  std::string image_url_field = "contentUrl";
  int timeout_seconds = 30;
};

class HttpSearchProvider final : public SearchProvider {
 public:
  explicit HttpSearchProvider(HttpSearchConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.web_url_template.empty() && cfg_.image_url_template.empty())
      throw ConfigError("http provider needs a web or image URL template");
  }

  std::string id() const override { return "http"; }

  EvidenceBundle search(const std::string& term, std::size_t n) override {
    EvidenceBundle b;
    b.term = term;
    b.provider_id = id();
    b.retrieved_at = unix_now();
    if (!cfg_.web_url_template.empty()) {
      auto items = query(cfg_.web_url_template, cfg_.web_results_path, term, n);
      for (const auto& item : items) {
        if (b.snippets.size() >= n) break;
        TextEvidence t{item.value(cfg_.title_field, ""), item.value(cfg_.excerpt_field, ""),
                       static_cast<int>(b.snippets.size()) + 1};
        if (t.title.empty() && t.excerpt.empty()) continue;
        b.snippets.push_back(std::move(t));
      }
    }
    if (!cfg_.image_url_template.empty()) {
      auto items = query(cfg_.image_url_template, cfg_.image_results_path, term, n);
      for (const auto& item : items) {
        if (b.images.size() >= n) break;
        auto url = item.value(cfg_.image_url_field, "");
        if (url.empty()) continue;
        try {
          auto res = http_get(url, {}, cfg_.timeout_seconds);
          if (res.status != 200 || res.body.empty()) continue;
          auto mt = res.content_type.substr(0, res.content_type.find(';'));
          if (mt.empty() || mt == "application/octet-stream")
            mt = media_type_for_extension(fs::path(parse_url(url).path).extension().string());
          b.images.push_back({std::move(res.body), trim(mt), static_cast<int>(b.images.size()) + 1});
        } catch (const IOError&) {
          // unreachable image hosts are common; the slot is simply not filled
        }
      }
    }
    return b;
  }

 private:
  nlohmann::json query(const std::string& tmpl, const std::string& path, const std::string& term,
                       std::size_t n) const {
    auto url = fill_template(tmpl, {{"query", url_encode(term)}, {"count", std::to_string(n)}});
    if (tmpl.find("{count}") == std::string::npos && !cfg_.count_param.empty())
      url += (url.find('?') == std::string::npos ? "?" : "&") + cfg_.count_param + "=" + std::to_string(n);
    auto res = http_get(url, cfg_.headers, cfg_.timeout_seconds);
    if (res.status != 200) throw IOError("search returned HTTP " + std::to_string(res.status));
    auto doc = nlohmann::json::parse(res.body);
    auto ptr = nlohmann::json::json_pointer(path);
    if (!doc.contains(ptr)) return nlohmann::json::array();
    auto arr = doc.at(ptr);
    if (!arr.is_array()) throw IOError("search response field " + path + " is not an array");
    return arr;
  }

  HttpSearchConfig cfg_;
};

}  // namespace mmner
