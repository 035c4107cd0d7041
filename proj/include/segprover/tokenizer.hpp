#pragma once

// Pluggable tokenizers for token-dependent statistics and boundary rules.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "segprover/core.hpp"

namespace segprover {

enum class TokenizerKind { whitespace, external_map };

struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::whitespace;
  std::optional<std::string> external_map;  // path, required iff kind == external_map

  static TokenizerSpec whitespace() { return {}; }
  static TokenizerSpec from_map(std::string path) {
    return {TokenizerKind::external_map, std::move(path)};
  }

  /// "whitespace" or "map:<path>".
  static TokenizerSpec parse(std::string_view s) {
    if (s == "whitespace") return whitespace();
    if (s.substr(0, 4) == "map:" && s.size() > 4) return from_map(std::string(s.substr(4)));
    throw FormatError("unknown tokenizer spec: " + std::string(s));
  }

  std::string describe() const {
    return kind == TokenizerKind::whitespace ? "whitespace" : "map:" + external_map.value_or("");
  }
};

using TokenList = std::vector<std::string>;

namespace detail {

inline std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace detail

/// A loaded tokenizer. External-map tokenizers do longest-match lookup over
/// the map and fall back to single characters; each mapped id becomes one
/// token rendered as "[id]".
class Tokenizer {
 public:
  explicit Tokenizer(const TokenizerSpec& spec) : spec_(spec) {
    if (spec.kind == TokenizerKind::whitespace) return;
    if (!spec.external_map) throw FormatError("external_map tokenizer needs a map file");
    std::ifstream in(*spec.external_map);
    if (!in) throw FormatError("cannot open tokenizer map: " + *spec.external_map);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto tab = line.rfind('\t');
      if (tab == std::string::npos || tab == 0)
        throw FormatError("tokenizer map line " + std::to_string(number) + ": expected token<TAB>id");
      std::vector<std::int64_t> ids;
      std::istringstream fields(line.substr(tab + 1));
      std::int64_t id;
      while (fields >> id) ids.push_back(id);
      if (ids.empty() || !fields.eof())
        throw FormatError("tokenizer map line " + std::to_string(number) + ": bad id list");
      auto key = line.substr(0, tab);
      max_key_ = std::max(max_key_, key.size());
      map_[std::move(key)] = std::move(ids);
    }
  }

  const TokenizerSpec& spec() const noexcept { return spec_; }

  TokenList tokenize(std::string_view text) const {
    TokenList out;
    if (spec_.kind == TokenizerKind::whitespace) {
      std::size_t i = 0;
      while (i < text.size()) {
        while (i < text.size() && detail::is_space(text[i])) ++i;
        std::size_t start = i;
        while (i < text.size() && !detail::is_space(text[i])) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
      }
      return out;
    }
    std::size_t i = 0;
    while (i < text.size()) {
      bool matched = false;
      for (std::size_t len = std::min(max_key_, text.size() - i); len > 0; --len) {
        auto it = map_.find(std::string(text.substr(i, len)));
        if (it == map_.end()) continue;
        for (auto id : it->second) out.push_back("[" + std::to_string(id) + "]");
        i += len;
        matched = true;
        break;
      }
      if (matched) continue;
      std::size_t len = std::min(detail::utf8_length(static_cast<unsigned char>(text[i])), text.size() - i);
      out.emplace_back(text.substr(i, len));
      i += len;
    }
    return out;
  }

  std::size_t count(std::string_view text) const { return tokenize(text).size(); }

 private:
  TokenizerSpec spec_;
  std::unordered_map<std::string, std::vector<std::int64_t>> map_;
  std::size_t max_key_ = 0;
};

inline TokenList tokenize(std::string_view text, const TokenizerSpec& spec) {
  return Tokenizer(spec).tokenize(text);
}

}  // namespace segprover
