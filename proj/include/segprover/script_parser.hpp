#pragma once

// Splits raw Lean proof bodies into executable tactic blocks.
//
// A physical line continues the current block when the previous line ends with
// "<;>", when a bracket opened earlier in the block is still open, or when the
// line is indented deeper than the block's first line. Comments are blanked out
// before any of this runs, and delimiters inside string literals are ignored.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "segprover/core.hpp"
#include "segprover/goal_blocks.hpp"
#include "segprover/text.hpp"

namespace segprover {

struct ParseFailure {
  std::string message;
  std::size_t line = 0;  // 1-based line of the offending input, 0 if not line-specific
};

namespace detail {

// Replaces comment characters with spaces, keeping newlines so line structure
// survives. Block comments nest as in Lean.
inline Outcome<std::string, ParseFailure> blank_comments(std::string_view src) {
  std::string out(src);
  std::size_t line = 1;
  std::size_t i = 0;
  bool in_string = false;
  std::size_t string_line = 0;
  while (i < out.size()) {
    char c = out[i];
    if (c == '\n') ++line;
    if (in_string) {
      if (c == '\\' && i + 1 < out.size() && out[i + 1] != '\n') {
        i += 2;
        continue;
      }
      if (c == '"') in_string = false;
      ++i;
      continue;
    }
    if (c == '"') {
      in_string = true;
      string_line = line;
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < out.size() && out[i + 1] == '-') {
      while (i < out.size() && out[i] != '\n') out[i++] = ' ';
      continue;
    }
    if (c == '/' && i + 1 < out.size() && out[i + 1] == '-') {
      std::size_t start_line = line;
      int depth = 0;
      while (i < out.size()) {
        if (out[i] == '/' && i + 1 < out.size() && out[i + 1] == '-') {
          ++depth;
          out[i] = out[i + 1] = ' ';
          i += 2;
        } else if (out[i] == '-' && i + 1 < out.size() && out[i + 1] == '/') {
          --depth;
          out[i] = out[i + 1] = ' ';
          i += 2;
          if (depth == 0) break;
        } else {
          if (out[i] == '\n')
            ++line;
          else
            out[i] = ' ';
          ++i;
        }
      }
      if (depth != 0) return ParseFailure{"unterminated block comment", start_line};
      continue;
    }
    ++i;
  }
  if (in_string) return ParseFailure{"unterminated string literal", string_line};
  return out;
}

inline std::size_t leading_indent(std::string_view line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Open-delimiter state carried across the lines of one block.
struct DelimiterState {
  std::string open;
  bool in_string = false;

  bool balanced() const { return open.empty() && !in_string; }

  // Returns false on a closer that does not match the innermost opener.
  bool feed(std::string_view line) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (in_string) {
        if (c == '\\') {
          ++i;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      switch (c) {
        case '"': in_string = true; break;
        case '(': case '[': case '{': open.push_back(c); break;
        case ')': case ']': case '}': {
          char want = c == ')' ? '(' : c == ']' ? '[' : '{';
          if (open.empty() || open.back() != want) return false;
          open.pop_back();
          break;
        }
        default: break;
      }
    }
    return true;
  }
};

}  // namespace detail

/// Parses a proof body (everything after the theorem header) into tactic blocks.
inline Outcome<std::vector<Tactic>, ParseFailure> parse_proof_script(std::string_view script_text) {
  auto cleaned = detail::blank_comments(script_text);
  if (!cleaned) return cleaned.error();

  struct Line {
    std::string_view text;
    std::size_t number;
  };
  std::vector<Line> lines;
  std::size_t number = 0;
  for (auto raw : detail::split_lines(cleaned.value())) {
    ++number;
    auto line = detail::trim_right(raw);
    if (!line.empty()) lines.push_back({line, number});
  }
  if (lines.empty()) return ParseFailure{"script contains no tactics", 0};

  std::size_t common = lines.front().text.size();
  for (const auto& l : lines) common = std::min(common, detail::leading_indent(l.text));

  std::vector<Tactic> blocks;
  std::vector<std::string_view> current;
  detail::DelimiterState delims;
  bool pending_combinator = false;

  auto close_block = [&] {
    if (!current.empty()) blocks.emplace_back(detail::join(current, "\n"));
    current.clear();
  };

  for (const auto& l : lines) {
    auto body = l.text.substr(common);
    std::size_t indent = detail::leading_indent(body);
    bool continues = !current.empty() && (pending_combinator || !delims.balanced() || indent > 0);
    if (!continues) {
      if (indent > 0) return ParseFailure{"indented line does not continue any tactic block", l.number};
      close_block();
    }
    current.push_back(body);
    if (!delims.feed(body)) return ParseFailure{"mismatched closing delimiter", l.number};
    pending_combinator = detail::ends_with(body, "<;>");
  }
  if (!delims.balanced()) return ParseFailure{"unbalanced delimiters at end of script", lines.back().number};
  if (pending_combinator) return ParseFailure{"dangling <;> at end of script", lines.back().number};
  close_block();
  return blocks;
}

}  // namespace segprover
