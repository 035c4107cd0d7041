#pragma once

// Best-first proof search with atomic-step, macro-action and whole-proof
// generation modes, and goal-aware rollout for step-level policies.
//
// Node priority is the summed candidate score along the path (ties FIFO).
// When a step changes the open-goal count and the rollout horizon H > 0, the
// policy's top candidate is followed linearly for up to H more steps; only the
// state where the rollout stops joins the frontier.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "segprover/boundary.hpp"
#include "segprover/core.hpp"
#include "segprover/io.hpp"
#include "segprover/policy.hpp"
#include "segprover/protocol.hpp"
#include "segprover/script_parser.hpp"

namespace segprover {

enum class SearchMode { step, macro, whole_proof };

inline std::string_view to_string(SearchMode m) {
  switch (m) {
    case SearchMode::step: return "step";
    case SearchMode::macro: return "macro";
    case SearchMode::whole_proof: return "whole_proof";
  }
  return "?";
}

inline SearchMode parse_search_mode(std::string_view s) {
  for (auto m : {SearchMode::step, SearchMode::macro, SearchMode::whole_proof})
    if (to_string(m) == s) return m;
  throw FormatError("unknown search mode: " + std::string(s));
}

/// wall: steady-clock seconds. logical: a fixed charge per policy request and
/// per environment call, for runs that must be byte-reproducible.
enum class ClockKind { wall, logical };

inline std::string_view to_string(ClockKind c) { return c == ClockKind::wall ? "wall" : "logical"; }

inline ClockKind parse_clock_kind(std::string_view s) {
  if (s == "wall") return ClockKind::wall;
  if (s == "logical") return ClockKind::logical;
  throw FormatError("unknown clock: " + std::string(s));
}

struct SearchConfig {
  SearchMode mode = SearchMode::step;
  std::size_t beam = 8;
  std::size_t max_expansions = 600;
  double timeout_s = 1800.0;
  std::size_t rollout_horizon = 5;
  std::size_t max_tokens = 0;  // required, no default
  std::size_t whole_proof_attempts = 2048;
  ClockKind clock = ClockKind::wall;
  double logical_generation_s = 1.0;
  double logical_execution_s = 0.125;
  bool record_trace = false;
  json extensions = json::object();

  void validate() const {
    if (beam < 1) throw InvariantError("beam must be positive");
    if (!(timeout_s > 0)) throw InvariantError("timeout must be positive");
    if (max_tokens < 1) throw InvariantError("max_tokens must be set to a positive value");
    if (whole_proof_attempts < 1) throw InvariantError("whole_proof_attempts must be positive");
    if (!extensions.is_object()) throw InvariantError("extensions must be an object");
  }

  json to_json() const {
    return json{{"mode", std::string(to_string(mode))},
                {"beam", beam},
                {"max_expansions", max_expansions},
                {"timeout_s", timeout_s},
                {"rollout_horizon", rollout_horizon},
                {"max_tokens", max_tokens},
                {"whole_proof_attempts", whole_proof_attempts},
                {"clock", std::string(to_string(clock))},
                {"extensions", extensions}};
  }
};

enum class FailureKind { budget, timeout, exhausted, env_error };

inline std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::budget: return "budget";
    case FailureKind::timeout: return "timeout";
    case FailureKind::exhausted: return "exhausted";
    case FailureKind::env_error: return "env_error";
  }
  return "?";
}

inline FailureKind parse_failure_kind(std::string_view s) {
  for (auto k : {FailureKind::budget, FailureKind::timeout, FailureKind::exhausted, FailureKind::env_error})
    if (to_string(k) == s) return k;
  throw FormatError("unknown failure kind: " + std::string(s));
}

enum class SearchEventKind { push, expand, rollout_state, generate };

inline std::string_view to_string(SearchEventKind k) {
  switch (k) {
    case SearchEventKind::push: return "push";
    case SearchEventKind::expand: return "expand";
    case SearchEventKind::rollout_state: return "rollout_state";
    case SearchEventKind::generate: return "generate";
  }
  return "?";
}

struct SearchEvent {
  SearchEventKind kind;
  std::string pretty;
  double priority = 0.0;
  std::vector<std::string> path;
  std::size_t tokens = 0;

  friend bool operator==(const SearchEvent&, const SearchEvent&) = default;
};

struct SearchResult {
  std::string theorem_id;
  bool solved = false;
  std::optional<std::vector<std::string>> proof;
  double elapsed_s = 0.0;
  std::size_t output_tokens = 0;
  std::size_t expansions = 0;
  std::optional<FailureKind> failure_kind;
  std::size_t estimated_token_candidates = 0;
  std::string error_message;
  std::vector<SearchEvent> trace;
};

struct TheoremRef {
  std::string theorem_id;
  std::string statement;
};

struct SearchNode {
  StateRef state_ref = 0;
  std::string pretty;
  std::size_t goal_count = 0;
  double priority = 0.0;
  std::vector<std::string> path;
};

enum class TransitionKind { failed, advanced, proved };

struct Transition {
  TransitionKind kind = TransitionKind::failed;
  std::vector<std::string> executed;
  StateRef state_ref = 0;
  std::string pretty;
  std::size_t goal_count = 0;
  /// Scores of rollout candidates followed after the triggering candidate.
  double rollout_score = 0.0;

  static Transition failed() { return {}; }
};

class Stopwatch {
 public:
  Stopwatch(ClockKind kind, double generation_s, double execution_s)
      : kind_(kind), generation_s_(generation_s), execution_s_(execution_s), start_(std::chrono::steady_clock::now()) {}

  void on_generation() { logical_ += generation_s_; }
  void on_execution() { logical_ += execution_s_; }

  double elapsed() const {
    if (kind_ == ClockKind::logical) return logical_;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  ClockKind kind_;
  double generation_s_, execution_s_;
  double logical_ = 0.0;
  std::chrono::steady_clock::time_point start_;
};

/// One proof attempt on one theorem. Holds the accounting (tokens, clock,
/// trace) shared by every operation of the attempt.
template <CandidatePolicy P, ProofEnvironment E>
class ProofSearch {
 public:
  ProofSearch(P& policy, E& env, SearchConfig config)
      : policy_(policy),
        env_(&env),
        config_(std::move(config)),
        clock_(config_.clock, config_.logical_generation_s, config_.logical_execution_s) {
    config_.validate();
  }

  const SearchConfig& config() const noexcept { return config_; }
  const SearchResult& result() const noexcept { return result_; }
  double elapsed() const { return clock_.elapsed(); }
  bool timed_out() const { return clock_.elapsed() >= config_.timeout_s; }

  /// Starts the theorem in the session and returns the root node.
  std::optional<SearchNode> start(const TheoremRef& theorem) {
    result_.theorem_id = theorem.theorem_id;
    clock_.on_execution();
    auto r = env_->init(theorem.theorem_id, theorem.statement);
    if (r.status != EnvStatus::ok) {
      result_.error_message = "init failed: " + r.message.value_or("");
      return std::nullopt;
    }
    return SearchNode{*r.state_ref, *r.pretty, count_open_goals(*r.pretty), 0.0, {}};
  }

  CandidateList generate(std::string_view pretty, std::size_t n, const json& extra = json::object()) {
    json ext = config_.extensions;
    ext.update(extra);
    CandidateList cands;
    try {
      cands = policy_.generate(instruction_prompt(pretty), n, config_.max_tokens, ext);
    } catch (const TransportError& e) {
      throw PolicyError(std::string("policy transport failure: ") + e.what());
    }
    clock_.on_generation();
    std::size_t tokens = 0;
    for (const auto& c : cands) {
      tokens += c.token_count;
      if (c.token_count_estimated) ++result_.estimated_token_candidates;
    }
    result_.output_tokens += tokens;
    log({SearchEventKind::generate, std::string(pretty), 0.0, {}, tokens});
    return cands;
  }

  EnvResponse execute(StateRef ref, std::string_view tactic) {
    clock_.on_execution();
    return env_->run(ref, tactic);
  }

  /// Executes one candidate from `node` under the configured mode.
  Transition apply_candidate(const SearchNode& node, const PolicyCandidate& candidate) {
    auto blocks = parse_proof_script(candidate.text);
    if (!blocks) return Transition::failed();
    const auto& tactics = blocks.value();
    switch (config_.mode) {
      case SearchMode::step: {
        if (tactics.size() != 1) return Transition::failed();
        const auto& a = tactics.front().text();
        auto r = execute(node.state_ref, a);
        if (r.status == EnvStatus::error) return Transition::failed();
        if (r.status == EnvStatus::proved) return {TransitionKind::proved, {a}, 0, *r.pretty, 0, 0.0};
        std::size_t g = count_open_goals(*r.pretty);
        Transition next{TransitionKind::advanced, {a}, *r.state_ref, *r.pretty, g, 0.0};
        if (g != node.goal_count && config_.rollout_horizon > 0) return goal_aware_step(std::move(next));
        return next;
      }
      case SearchMode::macro: {
        // Keep the longest executed prefix whose end state differs from the node's.
        std::vector<Transition> reached;
        for (std::size_t i = 0; i < tactics.size(); ++i) {
          StateRef from = reached.empty() ? node.state_ref : reached.back().state_ref;
          auto r = execute(from, tactics[i].text());
          if (r.status == EnvStatus::error) break;
          std::vector<std::string> executed;
          for (std::size_t j = 0; j <= i; ++j) executed.push_back(tactics[j].text());
          if (r.status == EnvStatus::proved) return {TransitionKind::proved, std::move(executed), 0, *r.pretty, 0, 0.0};
          reached.push_back({TransitionKind::advanced, std::move(executed), *r.state_ref, *r.pretty,
                             count_open_goals(*r.pretty), 0.0});
        }
        for (auto it = reached.rbegin(); it != reached.rend(); ++it)
          if (it->pretty != node.pretty) return std::move(*it);
        return Transition::failed();
      }
      case SearchMode::whole_proof: {
        StateRef at = node.state_ref;
        std::vector<std::string> executed;
        for (std::size_t i = 0; i < tactics.size(); ++i) {
          auto r = execute(at, tactics[i].text());
          if (r.status == EnvStatus::error) return Transition::failed();
          executed.push_back(tactics[i].text());
          if (r.status == EnvStatus::proved) {
            if (i + 1 != tactics.size()) return Transition::failed();
            return {TransitionKind::proved, std::move(executed), 0, *r.pretty, 0, 0.0};
          }
          at = *r.state_ref;
        }
        return Transition::failed();
      }
    }
    return Transition::failed();
  }

  /// Linear rollout from the state reached by a goal-count-changing step.
  /// Follows the top candidate for at most H steps, stopping early on failure
  /// (the failing tactic is dropped) or on a completed proof.
  Transition goal_aware_step(Transition triggered) {
    for (std::size_t h = 0; h < config_.rollout_horizon; ++h) {
      if (timed_out()) break;
      auto cands = generate(triggered.pretty, 1, json{{"rollout", true}});
      if (cands.empty()) break;
      const auto& c = cands.front();
      auto blocks = parse_proof_script(c.text);
      if (!blocks || blocks.value().size() != 1) break;
      const auto& a = blocks.value().front().text();
      auto r = execute(triggered.state_ref, a);
      if (r.status == EnvStatus::error) break;
      triggered.executed.push_back(a);
      triggered.rollout_score += c.score;
      if (r.status == EnvStatus::proved) {
        triggered.kind = TransitionKind::proved;
        triggered.pretty = *r.pretty;
        triggered.goal_count = 0;
        return triggered;
      }
      triggered.state_ref = *r.state_ref;
      triggered.pretty = *r.pretty;
      triggered.goal_count = count_open_goals(*r.pretty);
      log({SearchEventKind::rollout_state, triggered.pretty, 0.0, {}, 0});
    }
    return triggered;
  }

  SearchResult best_first_prove(const TheoremRef& theorem) {
    struct Entry {
      double priority;
      std::size_t seq;
      std::size_t index;
    };
    struct Worse {
      bool operator()(const Entry& a, const Entry& b) const {
        if (a.priority != b.priority) return a.priority < b.priority;
        return a.seq > b.seq;
      }
    };
    // Node storage; parent links give each node its ancestor texts.
    std::vector<SearchNode> nodes;
    std::vector<std::ptrdiff_t> parent;
    std::priority_queue<Entry, std::vector<Entry>, Worse> frontier;
    std::size_t seq = 0;

    auto push = [&](SearchNode n, std::ptrdiff_t from) {
      log({SearchEventKind::push, n.pretty, n.priority, n.path, 0});
      nodes.push_back(std::move(n));
      parent.push_back(from);
      frontier.push({nodes.back().priority, seq++, nodes.size() - 1});
    };
    auto repeats_ancestor = [&](std::size_t index, const std::string& pretty) {
      for (auto i = static_cast<std::ptrdiff_t>(index); i >= 0; i = parent[static_cast<std::size_t>(i)])
        if (nodes[static_cast<std::size_t>(i)].pretty == pretty) return true;
      return false;
    };

    try {
      auto root = start(theorem);
      if (!root) return finish(FailureKind::env_error);
      push(std::move(*root), -1);
      for (;;) {
        if (frontier.empty()) return finish(FailureKind::exhausted);
        if (result_.expansions >= config_.max_expansions) return finish(FailureKind::budget);
        if (timed_out()) return finish(FailureKind::timeout);
        auto index = frontier.top().index;
        frontier.pop();
        ++result_.expansions;
        SearchNode node = nodes[index];
        log({SearchEventKind::expand, node.pretty, node.priority, node.path, 0});
        for (const auto& c : generate(node.pretty, config_.beam)) {
          auto t = apply_candidate(node, c);
          if (t.kind == TransitionKind::failed) continue;
          auto path = node.path;
          path.insert(path.end(), t.executed.begin(), t.executed.end());
          if (t.kind == TransitionKind::proved) return finish_solved(std::move(path));
          if (repeats_ancestor(index, t.pretty)) continue;
          push(SearchNode{t.state_ref, std::move(t.pretty), t.goal_count, node.priority + c.score + t.rollout_score,
                          std::move(path)},
               static_cast<std::ptrdiff_t>(index));
        }
      }
    } catch (const PolicyError&) {
      throw;
    } catch (const TransportError& e) {
      result_.error_message = e.what();
      return finish(FailureKind::env_error);
    }
  }

  SearchResult finish(FailureKind kind) {
    result_.solved = false;
    result_.failure_kind = kind;
    result_.elapsed_s = clock_.elapsed();
    return result_;
  }

  SearchResult finish_solved(std::vector<std::string> proof) {
    result_.solved = true;
    result_.proof = std::move(proof);
    result_.failure_kind.reset();
    result_.elapsed_s = clock_.elapsed();
    return result_;
  }

  SearchResult& mutable_result() { return result_; }

  /// Continues the same attempt (clock, tokens) against another session.
  void rebind(E& env) { env_ = &env; }

 private:
  void log(SearchEvent e) {
    if (config_.record_trace) result_.trace.push_back(std::move(e));
  }

  P& policy_;
  E* env_;
  SearchConfig config_;
  Stopwatch clock_;
  SearchResult result_;
};

template <CandidatePolicy P, ProofEnvironment E>
SearchResult best_first_prove(const TheoremRef& theorem, P& policy, E& env, const SearchConfig& config) {
  return ProofSearch<P, E>(policy, env, config).best_first_prove(theorem);
}

/// Samples complete proofs from the initial state in batches of `beam` and
/// checks each in a fresh session; the first verified proof wins. The
/// expansions field counts verified attempts.
template <CandidatePolicy P, class EnvFactoryFn>
SearchResult whole_proof_prove(const TheoremRef& theorem, P& policy, EnvFactoryFn&& env_factory,
                               SearchConfig config) {
  config.mode = SearchMode::whole_proof;
  auto probe = env_factory();
  using Session = std::remove_reference_t<decltype(*probe)>;
  ProofSearch<P, Session> search(policy, *probe, config);
  try {
    auto root = search.start(theorem);
    if (!root) return search.finish(FailureKind::env_error);
    std::size_t attempts = 0, batch = 0;
    while (attempts < config.whole_proof_attempts) {
      if (search.timed_out()) return search.finish(FailureKind::timeout);
      std::size_t n = std::min(config.beam, config.whole_proof_attempts - attempts);
      auto cands = search.generate(root->pretty, n, json{{"batch", batch++}});
      if (cands.empty()) return search.finish(FailureKind::exhausted);
      for (const auto& c : cands) {
        if (attempts == config.whole_proof_attempts) break;
        ++attempts;
        ++search.mutable_result().expansions;
        auto session = env_factory();
        search.rebind(*session);
        auto fresh = search.start(theorem);
        if (!fresh) {
          search.rebind(*probe);
          return search.finish(FailureKind::env_error);
        }
        auto t = search.apply_candidate(*fresh, c);
        search.rebind(*probe);
        if (t.kind == TransitionKind::proved) return search.finish_solved(std::move(t.executed));
      }
    }
    return search.finish(FailureKind::budget);
  } catch (const PolicyError&) {
    throw;
  } catch (const TransportError& e) {
    search.mutable_result().error_message = e.what();
    return search.finish(FailureKind::env_error);
  }
}

inline json result_to_json(const SearchResult& r, std::size_t run_id, const std::string& config_digest) {
  json proof = r.proof ? json(*r.proof) : json(nullptr);
  return json{{"theorem_id", r.theorem_id},
              {"run_id", run_id},
              {"solved", r.solved},
              {"proof", std::move(proof)},
              {"elapsed_s", r.elapsed_s},
              {"output_tokens", r.output_tokens},
              {"expansions", r.expansions},
              {"failure_kind", r.failure_kind ? json(std::string(to_string(*r.failure_kind))) : json(nullptr)},
              {"config_digest", config_digest}};
}

inline SearchResult result_from_json(const json& j) {
  SearchResult r;
  r.theorem_id = required<std::string>(j, "theorem_id");
  r.solved = required<bool>(j, "solved");
  if (j.contains("proof") && !j["proof"].is_null()) r.proof = required<std::vector<std::string>>(j, "proof");
  r.elapsed_s = required<double>(j, "elapsed_s");
  r.output_tokens = required<std::size_t>(j, "output_tokens");
  r.expansions = required<std::size_t>(j, "expansions");
  if (j.contains("failure_kind") && !j["failure_kind"].is_null())
    r.failure_kind = parse_failure_kind(required<std::string>(j, "failure_kind"));
  if (r.solved && !r.proof) throw FormatError("solved result for " + r.theorem_id + " has no proof");
  return r;
}

}  // namespace segprover
