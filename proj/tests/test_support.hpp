#pragma once

// Fixture builders and independent oracles shared by the unit and acceptance
// suites. Nothing here calls into the code paths it is used to check.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "segprover/segprover.hpp"

namespace segprover::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("segprover_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Pretty text with `goals` single-target blocks; "no goals" for zero.
inline std::string pretty_with_goals(std::size_t goals, const std::string& tag) {
  if (goals == 0) return "no goals";
  std::string out;
  for (std::size_t i = 0; i < goals; ++i) {
    if (i) out += "\n\n";
    out += "case g" + std::to_string(i) + "\nx_" + tag + " : \xE2\x84\x95\n\xE2\x8A\xA2 P_" + tag + "_" + std::to_string(i);
  }
  return out;
}

/// Trajectory whose state goal counts are `counts` (last must be 0).
inline Trajectory trajectory_from_counts(const std::vector<std::size_t>& counts, const std::string& id = "thm",
                                         const std::vector<std::string>& tactic_text = {}) {
  std::vector<ProofState> states;
  for (std::size_t i = 0; i < counts.size(); ++i)
    states.push_back(ProofState::from_pretty(pretty_with_goals(counts[i], id + "_" + std::to_string(i))));
  std::vector<Tactic> tactics;
  for (std::size_t i = 1; i < counts.size(); ++i)
    tactics.emplace_back(tactic_text.empty() ? "tac_" + std::to_string(i) : tactic_text[i - 1]);
  return Trajectory(id, "theorem " + id, std::move(states), std::move(tactics));
}

/// Hand-written two-goal trajectory behind the serialization golden files.
inline Trajectory golden_trajectory() {
  const std::string T = "\xE2\x8A\xA2";
  std::vector<ProofState> states{
      ProofState::from_pretty(T + " p \xE2\x88\xA7 q"),
      ProofState::from_pretty("case left\n" + T + " p\n\ncase right\n" + T + " q"),
      ProofState::from_pretty("case left\nh : p\n" + T + " p\n\ncase right\n" + T + " q"),
      ProofState::from_pretty("case right\n" + T + " q"),
      ProofState::from_pretty("no goals"),
  };
  std::vector<Tactic> tactics{Tactic("constructor"), Tactic("intro h"), Tactic("exact h"), Tactic("exact\n  hq")};
  return Trajectory("golden", "theorem golden (p q : Prop) (hp : p) (hq : q) : p \xE2\x88\xA7 q", std::move(states),
                    std::move(tactics));
}

/// Lines of a JSONL file other than its header record.
inline std::vector<std::string> body_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.rfind("{\"_header\"", 0) != 0) out.push_back(line);
    start = end + 1;
  }
  return out;
}

/// Random goal-count sequence of T tactics: g_0 >= 1, g_T = 0, g_t >= 1 before.
inline std::vector<std::size_t> random_counts(std::mt19937_64& rng, std::size_t T) {
  std::uniform_int_distribution<std::size_t> g(1, 4);
  std::vector<std::size_t> counts;
  for (std::size_t t = 0; t < T; ++t) counts.push_back(g(rng));
  counts.push_back(0);
  return counts;
}

/// Direct evaluation of the goal-change rule: {0, T} plus every t in 1..T
/// where the count differs from the previous state's.
inline std::vector<std::size_t> goal_change_oracle(const std::vector<std::size_t>& counts) {
  const std::size_t T = counts.size() - 1;
  std::vector<bool> selected(T + 1, false);
  selected[0] = selected[T] = true;
  for (std::size_t t = 1; t <= T; ++t) selected[t] = selected[t] || counts[t] != counts[t - 1];
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t <= T; ++t)
    if (selected[t]) out.push_back(t);
  return out;
}

/// Full-matrix recursive-definition Levenshtein, for cross-checking.
template <class T>
std::size_t levenshtein_oracle(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

// ---------------------------------------------------------------------------
// Sim trees

inline void add_node(SimTree& t, const std::string& id, std::size_t goals) {
  t.nodes[id] = SimNode{pretty_with_goals(goals, id), goals, goals == 0};
}

inline void add_edge(SimTree& t, const std::string& from, const std::string& tactic, const std::string& to) {
  t.edges[from][tactic] = to;
}

/// root(1) -t1-> n1(1) -t2-> done(0)
inline SimTree chain_tree() {
  SimTree t;
  add_node(t, "root", 1);
  add_node(t, "n1", 1);
  add_node(t, "done", 0);
  add_edge(t, "root", "t1", "n1");
  add_edge(t, "n1", "t2", "done");
  t.roots["chain"] = "root";
  t.statements["chain"] = "theorem chain";
  t.validate();
  return t;
}

/// Two depth-2 proofs: root -a-> l -c-> done, root -b-> r -d-> done2.
inline SimTree diamond_tree() {
  SimTree t;
  add_node(t, "root", 2);
  add_node(t, "l", 1);
  add_node(t, "r", 1);
  add_node(t, "done", 0);
  add_node(t, "done2", 0);
  add_edge(t, "root", "a", "l");
  add_edge(t, "root", "b", "r");
  add_edge(t, "l", "c", "done");
  add_edge(t, "r", "d", "done2");
  t.roots["diamond"] = "root";
  t.validate();
  return t;
}

/// root(1) -split-> s(2) -r1-> c1(2) ... -rL-> cL(2), dead end.
inline SimTree linear_continuation_tree(std::size_t length) {
  SimTree t;
  add_node(t, "root", 1);
  add_node(t, "c0", 2);
  add_edge(t, "root", "split", "c0");
  for (std::size_t i = 1; i <= length; ++i) {
    add_node(t, "c" + std::to_string(i), 2);
    add_edge(t, "c" + std::to_string(i - 1), "r" + std::to_string(i), "c" + std::to_string(i));
  }
  t.roots["linear"] = "root";
  t.validate();
  return t;
}

struct RandomTree {
  SimTree tree;
  std::string theorem;
};

/// Random proper tree (every node has one parent) with unique state texts.
inline RandomTree random_tree(std::mt19937_64& rng, std::size_t max_nodes, const std::string& theorem) {
  RandomTree out{{}, theorem};
  auto& t = out.tree;
  std::uniform_int_distribution<std::size_t> fanout(0, 3), goals(0, 3), start(1, 3);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  add_node(t, "n0", start(rng));
  std::vector<std::string> open{"n0"};
  std::size_t next = 1;
  while (!open.empty() && next < max_nodes) {
    auto parent = open.front();
    open.erase(open.begin());
    std::size_t kids = fanout(rng);
    for (std::size_t k = 0; k < kids && next < max_nodes; ++k) {
      std::string id = "n" + std::to_string(next++);
      // Proved leaves are rarer so that some theorems have no proof at all.
      std::size_t g = coin(rng) < 0.12 ? 0 : 1 + goals(rng) % 3;
      add_node(t, id, g);
      add_edge(t, parent, "tac_" + id, id);
      if (g > 0) open.push_back(id);
    }
  }
  t.roots[theorem] = "n0";
  t.validate();
  return out;
}

/// Scripted policy offering every outgoing edge of every node, scored by a
/// deterministic pseudo-random log-probability. Dead ends get no candidates.
inline ScriptedPolicy all_edges_policy(const SimTree& tree, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(-3.0, 0.0);
  ScriptedPolicy p;
  for (const auto& [id, node] : tree.nodes) {
    if (node.proved) continue;
    CandidateList cands;
    for (const auto& [tactic, to] : tree.outgoing(id)) cands.push_back({tactic, score(rng), 1 + tactic.size() % 5, false});
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    p.add_state(node.pretty, std::move(cands));
  }
  p.set_default({});
  return p;
}

/// Replays `proof` in a fresh session; true iff it ends with status proved.
inline bool replays_to_proved(const std::shared_ptr<const SimTree>& tree, const std::string& theorem,
                              const std::vector<std::string>& proof) {
  SimSession s(tree);
  auto r = s.init(theorem, "");
  if (r.status != EnvStatus::ok) return false;
  StateRef ref = *r.state_ref;
  for (std::size_t i = 0; i < proof.size(); ++i) {
    auto step = s.run(ref, proof[i]);
    if (step.status == EnvStatus::error) return false;
    if (step.status == EnvStatus::proved) return i + 1 == proof.size();
    ref = *step.state_ref;
  }
  return false;
}

/// Independent enumeration by breadth-first search over (node, path) pairs.
inline std::set<std::vector<std::string>> bfs_proofs(const SimTree& tree, const std::string& theorem,
                                                     std::size_t depth_limit) {
  std::set<std::vector<std::string>> out;
  std::queue<std::pair<std::string, std::vector<std::string>>> q;
  q.push({tree.roots.at(theorem), {}});
  while (!q.empty()) {
    auto [id, path] = q.front();
    q.pop();
    if (tree.nodes.at(id).goal_count == 0) {
      out.insert(path);
      continue;
    }
    if (path.size() >= depth_limit) continue;
    auto it = tree.edges.find(id);
    if (it == tree.edges.end()) continue;
    for (const auto& [tactic, to] : it->second) {
      auto p = path;
      p.push_back(tactic);
      q.push({to, std::move(p)});
    }
  }
  return out;
}

/// Step-level best-first search written without any rollout path, emitting the
/// same push/expand/generate events as the engine's trace.
inline std::vector<SearchEvent> reference_step_search(ScriptedPolicy& policy, EnvSession& env, const std::string& theorem,
                                                      std::size_t beam, std::size_t max_expansions,
                                                      std::size_t max_tokens, bool* solved = nullptr) {
  struct Node {
    StateRef ref;
    std::string pretty;
    double priority;
    std::vector<std::string> path;
    std::vector<std::string> ancestors;  // pretty texts, including this node
  };
  std::vector<SearchEvent> events;
  std::vector<Node> nodes;
  using Key = std::pair<double, long long>;  // (priority, -insertion)
  std::priority_queue<std::pair<Key, std::size_t>> frontier;
  long long seq = 0;
  auto push = [&](Node n) {
    events.push_back({SearchEventKind::push, n.pretty, n.priority, n.path, 0});
    nodes.push_back(std::move(n));
    frontier.push({{nodes.back().priority, -seq++}, nodes.size() - 1});
  };
  if (solved) *solved = false;
  auto init = env.init(theorem, "");
  push({*init.state_ref, *init.pretty, 0.0, {}, {*init.pretty}});
  std::size_t expansions = 0;
  while (!frontier.empty() && expansions < max_expansions) {
    auto idx = frontier.top().second;
    frontier.pop();
    ++expansions;
    Node node = nodes[idx];
    events.push_back({SearchEventKind::expand, node.pretty, node.priority, node.path, 0});
    auto cands = policy.generate(instruction_prompt(node.pretty), beam, max_tokens, json::object());
    std::size_t tokens = 0;
    for (const auto& c : cands) tokens += c.token_count;
    events.push_back({SearchEventKind::generate, node.pretty, 0.0, {}, tokens});
    for (const auto& c : cands) {
      auto r = env.run(node.ref, c.text);
      if (r.status == EnvStatus::error) continue;
      auto path = node.path;
      path.push_back(c.text);
      if (r.status == EnvStatus::proved) {
        if (solved) *solved = true;
        return events;
      }
      if (std::find(node.ancestors.begin(), node.ancestors.end(), *r.pretty) != node.ancestors.end()) continue;
      auto anc = node.ancestors;
      anc.push_back(*r.pretty);
      push({*r.state_ref, *r.pretty, node.priority + c.score, std::move(path), std::move(anc)});
    }
  }
  return events;
}

// ---------------------------------------------------------------------------
// Protocol transcripts: "> request" lines each followed by "< response".

struct TranscriptStep {
  std::string request;
  std::string response;
};

inline std::vector<TranscriptStep> load_transcript(const std::string& path) {
  std::vector<TranscriptStep> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("> ", 0) == 0)
      out.push_back({line.substr(2), ""});
    else if (line.rfind("< ", 0) == 0 && !out.empty())
      out.back().response = line.substr(2);
  }
  return out;
}

/// Plays the transcript over `channel`; returns the index of the first
/// mismatching step, or -1 when every response matches byte for byte.
inline long play_transcript(LineChannel& channel, const std::vector<TranscriptStep>& steps) {
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (channel.exchange(steps[i].request) != steps[i].response) return static_cast<long>(i);
  return -1;
}

/// Channel that records requests and answers from a fixed reply queue.
class FakeChannel : public LineChannel {
 public:
  explicit FakeChannel(std::vector<std::string> replies) : replies_(replies.begin(), replies.end()) {}
  void send(std::string_view line) override { sent.emplace_back(line); }
  std::optional<std::string> receive() override {
    if (replies_.empty()) return std::nullopt;
    auto r = replies_.front();
    replies_.pop_front();
    return r;
  }
  std::vector<std::string> sent;

 private:
  std::deque<std::string> replies_;
};

// ---------------------------------------------------------------------------
// Parser fixtures

struct ScriptCase {
  std::string name;
  std::string script;
  bool ok;
  std::vector<std::string> blocks;
};

inline std::vector<ScriptCase> script_cases() {
  return {
      {"two plain lines", "intro h\nexact h", true, {"intro h", "exact h"}},
      {"combinator merge", "constructor <;>\n  simp", true, {"constructor <;>\n  simp"}},
      {"combinator at column zero", "constructor <;>\nsimp\nrfl", true, {"constructor <;>\nsimp", "rfl"}},
      {"unclosed paren", "have h : (1 +\n  1) = 2 := by norm_num\nexact h", true,
       {"have h : (1 +\n  1) = 2 := by norm_num", "exact h"}},
      {"unclosed bracket at column zero", "rw [foo,\nbar]\nsimp", true, {"rw [foo,\nbar]", "simp"}},
      {"brace continuation", "exact {\n  val := 1\n}\nrfl", true, {"exact {\n  val := 1\n}", "rfl"}},
      {"indentation continuation", "have h : 1 = 1 := by\n  rfl\nexact h", true, {"have h : 1 = 1 := by\n  rfl", "exact h"}},
      {"bullet block", "constructor\n\xC2\xB7 simp\n  ring\n\xC2\xB7 rfl", true,
       {"constructor", "\xC2\xB7 simp\n  ring", "\xC2\xB7 rfl"}},
      {"common indentation stripped", "  intro h\n  exact h", true, {"intro h", "exact h"}},
      {"common indent with nested", "    nlinarith [sq_nonneg (a - b),\n      sq_nonneg (a + b)]\n    linarith", true,
       {"nlinarith [sq_nonneg (a - b),\n  sq_nonneg (a + b)]", "linarith"}},
      {"empty lines removed", "intro h\n\n\nexact h\n", true, {"intro h", "exact h"}},
      {"trailing whitespace trimmed", "intro h   \nexact h\t", true, {"intro h", "exact h"}},
      {"line comment stripped", "intro h -- introduce\n-- a full comment line\nexact h", true, {"intro h", "exact h"}},
      {"block comment stripped", "/- setup\n   more -/\nintro h\nexact h /- done -/", true, {"intro h", "exact h"}},
      {"nested block comment", "/- outer /- inner -/ still -/\nsimp", true, {"simp"}},
      {"paren inside string ignored", "trace \"(\"\nsimp", true, {"trace \"(\"", "simp"}},
      {"comment marker inside string kept", "trace \"--x\"\nsimp", true, {"trace \"--x\"", "simp"}},
      {"case block", "cases h with\n| inl a => exact a\n| inr b => exact b.1", true,
       {"cases h with", "| inl a => exact a", "| inr b => exact b.1"}},
      {"calc block", "calc a = b := by rw [h]\n  _ = c := by rw [g]", true, {"calc a = b := by rw [h]\n  _ = c := by rw [g]"}},
      {"single tactic", "norm_num", true, {"norm_num"}},
      {"orphan indented line", "  exact h\nintro h", false, {}},
      {"unbalanced at end", "exact (foo\nbar", false, {}},
      {"mismatched closer", "exact (foo]", false, {}},
      {"stray closer", "exact foo)", false, {}},
      {"dangling combinator", "constructor <;>", false, {}},
      {"unterminated string", "trace \"abc\nsimp", false, {}},
      {"unterminated block comment", "/- never closed\nsimp", false, {}},
      {"empty script", "", false, {}},
      {"comments only", "-- nothing here\n/- nor here -/", false, {}},
  };
}

struct StateCase {
  std::string name;
  std::string pretty;
  std::size_t blocks;
  std::size_t goals;
};

inline std::vector<StateCase> state_cases() {
  const std::string T = "\xE2\x8A\xA2";
  return {
      {"two goals", "case h\nn : \xE2\x84\x95\n" + T + " n + 0 = n\n\ncase h2\n" + T + " 0 < 1", 2, 2},
      {"empty", "", 0, 0},
      {"single target", T + " True", 1, 1},
      {"two markers one block", T + " A\n" + T + " B", 1, 0},
      {"no goals literal", "no goals", 1, 0},
      {"no goals padded", "  No Goals \n", 1, 0},
      {"whitespace only", "  \n\t\n ", 0, 0},
      {"hypotheses only", "x : \xE2\x84\x95\nh : x > 0", 1, 0},
      {"three goals", T + " a\n\n" + T + " b\n\n" + T + " c", 3, 3},
      {"multi blank separator", T + " a\n\n\n\n" + T + " b", 2, 2},
      {"blank line with spaces", T + " a\n   \n" + T + " b", 2, 2},
      {"leading and trailing blanks", "\n\n" + T + " a\n\n", 1, 1},
      {"mixed valid and degenerate", T + " a\n\nx : \xE2\x84\x95\n\n" + T + " b\n" + T + " c", 3, 1},
      {"multi-line target", "h : p\n" + T + " a +\n    b = c", 1, 1},
      {"ascii turnstile not a marker", "|- a", 1, 0},
      {"case tag only", "case h", 1, 0},
      {"crlf endings", T + " a\r\n\r\n" + T + " b", 2, 2},
      {"four goals with hyps", "a : A\n" + T + " 1\n\nb : B\n" + T + " 2\n\nc : C\n" + T + " 3\n\nd : D\n" + T + " 4", 4, 4},
      {"marker in hypothesis line", "h : " + T + " x\n" + T + " y", 1, 0},
      {"goal then no goals text", T + " a\n\nno goals", 2, 1},
      {"unicode heavy", "\xCE\xB1 : Type\nf : \xCE\xB1 \xE2\x86\x92 \xCE\xB1\n" + T + " \xE2\x88\x80 x, f x = x", 1, 1},
  };
}

}  // namespace segprover::testing
