#pragma once

// Shared vocabulary for the pipeline: NER classes, the error hierarchy,
// a stable 64-bit hash and a handful of string helpers.

#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmner {

// Order matters: it is the tie-break order for every argmax in the pipeline.
enum class NERClass : int { LOC = 0, ORG = 1, PER = 2, NONE = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<NERClass, 4> kAllClasses{NERClass::LOC, NERClass::ORG,
                                                     NERClass::PER, NERClass::NONE};

inline constexpr std::string_view to_string(NERClass c) {
  switch (c) {
    case NERClass::LOC: return "LOC";
    case NERClass::ORG: return "ORG";
    case NERClass::PER: return "PER";
    case NERClass::NONE: return "NONE";
  }
  return "NONE";
}

inline std::optional<NERClass> parse_ner_class(std::string_view s) {
  if (s == "LOC") return NERClass::LOC;
  if (s == "ORG") return NERClass::ORG;
  if (s == "PER") return NERClass::PER;
  if (s == "NONE" || s == "O") return NERClass::NONE;
  return std::nullopt;
}

inline constexpr std::size_t index_of(NERClass c) { return static_cast<std::size_t>(c); }

// ---------------------------------------------------------------------------
// Errors. kind() is the machine-parsable class name the CLI prints.

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MMNER_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(#Name, what) {}            \
  };

MMNER_DEFINE_ERROR(PreconditionError)
MMNER_DEFINE_ERROR(ConfigError)
MMNER_DEFINE_ERROR(IOError)
MMNER_DEFINE_ERROR(TaggerError)
MMNER_DEFINE_ERROR(RetrievalError)
MMNER_DEFINE_ERROR(ImageDecodeError)
MMNER_DEFINE_ERROR(VocabularyError)
MMNER_DEFINE_ERROR(TrainingError)
MMNER_DEFINE_ERROR(IngestError)
MMNER_DEFINE_ERROR(SchemaError)
MMNER_DEFINE_ERROR(AlignmentError)
MMNER_DEFINE_ERROR(DomainError)
MMNER_DEFINE_ERROR(ModelError)

#undef MMNER_DEFINE_ERROR

// ---------------------------------------------------------------------------
// FNV-1a 64. Used for cache keys and config digests; stable across platforms.

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string digest(std::string_view data) { return hex64(fnv1a64(data)); }

// ---------------------------------------------------------------------------
// Strings

inline std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Lowercases ASCII and collapses whitespace runs to a single space.
inline std::string normalize_term(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Portable random helpers. std::mt19937_64's output sequence is fixed by the
// standard, the distributions are not, so draws go through these.

using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace mmner
