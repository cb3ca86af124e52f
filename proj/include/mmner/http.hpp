#pragma once

// Thin GET helper over cpp-httplib plus URL/template utilities shared by the
// knowledge-base ingester and the HTTP search adapter.

#include <atomic>
#include <map>
#include <string>
#include <string_view>

#include "httplib.h"
#include "mmner/core.hpp"

namespace mmner {

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path + query, at least "/"
};

inline ParsedUrl parse_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("URL without scheme: " + std::string(url));
  auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl u;
  if (path_start == std::string_view::npos) {
    u.origin = std::string(url);
    u.path = "/";
  } else {
    u.origin = std::string(url.substr(0, path_start));
    u.path = std::string(url.substr(path_start));
  }
  return u;
}

inline std::string url_encode(std::string_view s) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

/// Replaces every `{name}` with the mapped value.
inline std::string fill_template(std::string tmpl, const std::map<std::string, std::string>& vars) {
  for (const auto& [name, value] : vars) {
    const std::string needle = "{" + name + "}";
    for (auto pos = tmpl.find(needle); pos != std::string::npos;
         pos = tmpl.find(needle, pos + value.size()))
      tmpl.replace(pos, needle.size(), value);
  }
  return tmpl;
}

namespace detail {
inline std::atomic<std::size_t> http_requests{0};
}

/// Outgoing requests issued by this process so far.
inline std::size_t http_request_count() { return detail::http_requests.load(); }

inline HttpResponse http_get(const std::string& url,
                             const std::map<std::string, std::string>& headers = {},
                             int timeout_seconds = 30) {
  auto u = parse_url(url);
  detail::http_requests.fetch_add(1);
  httplib::Client client(u.origin);
  client.set_follow_location(true);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Get(u.path, h);
  if (!res) throw IOError("GET " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body, res->get_header_value("Content-Type")};
}

}  // namespace mmner
