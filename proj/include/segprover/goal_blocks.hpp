#pragma once

// Goal-block view of pretty-printed proof states.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "segprover/text.hpp"

namespace segprover {

/// UTF-8 encoding of the target marker U+22A2.
inline constexpr std::string_view kTargetMarker = "\xE2\x8A\xA2";

struct GoalBlock {
  std::string text;
  bool has_single_target = false;

  friend bool operator==(const GoalBlock&, const GoalBlock&) = default;
};

inline std::size_t count_target_markers(std::string_view text) {
  std::size_t n = 0;
  for (auto pos = text.find(kTargetMarker); pos != std::string_view::npos;
       pos = text.find(kTargetMarker, pos + kTargetMarker.size()))
    ++n;
  return n;
}

/// Splits a pretty state on runs of blank lines. Total: malformed blocks just
/// fail the single-target check.
inline std::vector<GoalBlock> parse_proof_state(std::string_view pretty) {
  std::vector<GoalBlock> blocks;
  std::vector<std::string_view> current;
  auto flush = [&] {
    if (current.empty()) return;
    GoalBlock b;
    b.text = detail::join(current, "\n");
    b.has_single_target = count_target_markers(b.text) == 1;
    blocks.push_back(std::move(b));
    current.clear();
  };
  for (auto line : detail::split_lines(pretty)) {
    if (detail::is_blank(line))
      flush();
    else
      current.push_back(detail::trim_right(line));
  }
  flush();
  return blocks;
}

/// True for the completion text environments print once every goal is closed.
inline bool is_completion_text(std::string_view pretty) {
  auto t = detail::trim(pretty);
  constexpr std::string_view kNoGoals = "no goals";
  if (t.size() != kNoGoals.size()) return false;
  return std::equal(t.begin(), t.end(), kNoGoals.begin(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) == b;
  });
}

/// Number of goal blocks carrying exactly one target marker.
inline std::size_t count_open_goals(std::string_view pretty) {
  if (is_completion_text(pretty)) return 0;
  auto blocks = parse_proof_state(pretty);
  return static_cast<std::size_t>(
      std::count_if(blocks.begin(), blocks.end(), [](const GoalBlock& b) { return b.has_single_target; }));
}

}  // namespace segprover
