#pragma once

// Domain types shared by parsing, segmentation, replay, search and metrics.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "segprover/text.hpp"
#include "segprover/goal_blocks.hpp"

namespace segprover {

/// Thrown when a value would violate one of the domain invariants below.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown on malformed input files or configuration.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Either a value or a data-level failure. Failures here are expected outcomes
/// (a record that does not replay, a script that does not parse), not bugs.
template <class T, class E>
class Outcome {
 public:
  Outcome(T value) : state_(std::in_place_index<0>, std::move(value)) {}
  Outcome(E error) : state_(std::in_place_index<1>, std::move(error)) {}

  bool ok() const noexcept { return state_.index() == 0; }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const& { return std::get<0>(state_); }
  T& value() & { return std::get<0>(state_); }
  T&& value() && { return std::get<0>(std::move(state_)); }
  const E& error() const& { return std::get<1>(state_); }

 private:
  std::variant<T, E> state_;
};

/// One executable tactic block; may span several physical lines.
class Tactic {
 public:
  explicit Tactic(std::string text) : text_(std::move(text)) {
    auto trimmed = detail::trim_right(text_);
    if (trimmed.empty()) throw InvariantError("tactic text is empty");
    text_.resize(trimmed.size());
  }

  const std::string& text() const noexcept { return text_; }
  friend bool operator==(const Tactic&, const Tactic&) = default;

 private:
  std::string text_;
};

/// Pretty-printed proof state with its open-goal count.
struct ProofState {
  std::string pretty;
  std::size_t goal_count = 0;
  bool proved = false;

  /// Goal count recomputed from the text; `proved` follows from a zero count.
  static ProofState from_pretty(std::string pretty) {
    ProofState s;
    s.goal_count = count_open_goals(pretty);
    s.proved = s.goal_count == 0;
    s.pretty = std::move(pretty);
    return s;
  }

  /// Terminal state reported by the environment. The text is kept as given.
  static ProofState completed(std::string pretty) {
    return ProofState{std::move(pretty), 0, true};
  }

  friend bool operator==(const ProofState&, const ProofState&) = default;
};

/// Verified alternating state/tactic sequence: states has one more entry than tactics.
class Trajectory {
 public:
  Trajectory(std::string theorem_id, std::string statement, std::vector<ProofState> states,
             std::vector<Tactic> tactics)
      : theorem_id_(std::move(theorem_id)),
        statement_(std::move(statement)),
        states_(std::move(states)),
        tactics_(std::move(tactics)) {
    if (tactics_.empty()) throw InvariantError("trajectory has no tactics");
    if (states_.size() != tactics_.size() + 1)
      throw InvariantError("trajectory needs exactly one more state than tactics");
    if (states_.front().goal_count < 1) throw InvariantError("initial state has no open goals");
    if (!states_.back().proved) throw InvariantError("final state is not proved");
    for (const auto& s : states_)
      if (s.proved != (s.goal_count == 0))
        throw InvariantError("proved flag disagrees with goal count");
  }

  const std::string& theorem_id() const noexcept { return theorem_id_; }
  const std::string& statement() const noexcept { return statement_; }
  const std::vector<ProofState>& states() const noexcept { return states_; }
  const std::vector<Tactic>& tactics() const noexcept { return tactics_; }
  /// Number of tactics (T).
  std::size_t length() const noexcept { return tactics_.size(); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  std::string theorem_id_;
  std::string statement_;
  std::vector<ProofState> states_;
  std::vector<Tactic> tactics_;
};

enum class BoundaryKind { step, whole, goal_change, token_threshold, tactic_distance, state_distance };

inline std::string_view to_string(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::step: return "step";
    case BoundaryKind::whole: return "whole";
    case BoundaryKind::goal_change: return "goal_change";
    case BoundaryKind::token_threshold: return "token_threshold";
    case BoundaryKind::tactic_distance: return "tactic_distance";
    case BoundaryKind::state_distance: return "state_distance";
  }
  return "?";
}

inline BoundaryKind parse_boundary_kind(std::string_view s) {
  for (auto k : {BoundaryKind::step, BoundaryKind::whole, BoundaryKind::goal_change,
                 BoundaryKind::token_threshold, BoundaryKind::tactic_distance,
                 BoundaryKind::state_distance})
    if (to_string(k) == s) return k;
  throw FormatError("unknown boundary strategy: " + std::string(s));
}

inline bool needs_threshold(BoundaryKind k) {
  return k == BoundaryKind::token_threshold || k == BoundaryKind::tactic_distance ||
         k == BoundaryKind::state_distance;
}

/// A configured boundary rule. Thresholds are validated on construction.
class BoundaryStrategy {
 public:
  explicit BoundaryStrategy(BoundaryKind kind, std::optional<double> threshold = std::nullopt)
      : kind_(kind), threshold_(threshold) {
    if (needs_threshold(kind) != threshold.has_value())
      throw InvariantError(std::string("threshold ") +
                           (threshold ? "not allowed" : "required") + " for strategy " +
                           std::string(to_string(kind)));
    if (kind == BoundaryKind::token_threshold) {
      double t = *threshold;
      if (!(t >= 1.0) || t != static_cast<double>(static_cast<std::int64_t>(t)))
        throw InvariantError("token threshold must be a positive integer");
    } else if (threshold) {
      double t = *threshold;
      if (!(t > 0.0 && t <= 1.0)) throw InvariantError("distance threshold must lie in (0, 1]");
    }
  }

  static BoundaryStrategy step() { return BoundaryStrategy(BoundaryKind::step); }
  static BoundaryStrategy whole() { return BoundaryStrategy(BoundaryKind::whole); }
  static BoundaryStrategy goal_change() { return BoundaryStrategy(BoundaryKind::goal_change); }
  static BoundaryStrategy tokens(std::int64_t n) {
    return BoundaryStrategy(BoundaryKind::token_threshold, static_cast<double>(n));
  }
  static BoundaryStrategy tactic_distance(double t) {
    return BoundaryStrategy(BoundaryKind::tactic_distance, t);
  }
  static BoundaryStrategy state_distance(double t) {
    return BoundaryStrategy(BoundaryKind::state_distance, t);
  }

  BoundaryKind kind() const noexcept { return kind_; }
  const std::optional<double>& threshold() const noexcept { return threshold_; }

  friend bool operator==(const BoundaryStrategy&, const BoundaryStrategy&) = default;

 private:
  BoundaryKind kind_;
  std::optional<double> threshold_;
};

/// Non-empty tactic sequence treated as one generation unit.
class MacroAction {
 public:
  explicit MacroAction(std::vector<Tactic> tactics) : tactics_(std::move(tactics)) {
    if (tactics_.empty()) throw InvariantError("macro action must contain at least one tactic");
  }

  const std::vector<Tactic>& tactics() const noexcept { return tactics_; }
  std::size_t size() const noexcept { return tactics_.size(); }
  friend bool operator==(const MacroAction&, const MacroAction&) = default;

 private:
  std::vector<Tactic> tactics_;
};

inline constexpr std::string_view kTacticSeparator = "\n";

struct SupervisionExample {
  std::string theorem_id;
  std::size_t boundary_index = 0;  // k, 1-based
  std::string input_state;
  MacroAction target;
  BoundaryKind granularity = BoundaryKind::step;

  std::string example_id() const { return theorem_id + "#" + std::to_string(boundary_index); }
  friend bool operator==(const SupervisionExample&, const SupervisionExample&) = default;
};

struct SerializedTarget {
  std::string text;
  std::size_t token_count = 0;
};

/// Per-example (target length, token-normalized NLL) pair from an external training log.
struct LengthLossRecord {
  std::string example_id;
  std::size_t length = 1;
  double loss = 0.0;

  LengthLossRecord(std::string id, std::size_t len, double l)
      : example_id(std::move(id)), length(len), loss(l) {
    if (length < 1) throw InvariantError("length must be at least 1");
    if (!(loss >= 0.0)) throw InvariantError("loss must be non-negative");
  }
};

}  // namespace segprover
