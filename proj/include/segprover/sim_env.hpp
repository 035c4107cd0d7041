#pragma once

// Deterministic simulated proof environment over an explicit state graph,
// plus an exhaustive proof enumerator used as a test oracle.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "segprover/goal_blocks.hpp"
#include "segprover/io.hpp"
#include "segprover/protocol.hpp"

namespace segprover {

struct SimNode {
  std::string pretty;
  std::size_t goal_count = 0;
  bool proved = false;
};

struct SimTree {
  std::map<std::string, SimNode> nodes;
  /// node -> tactic text -> successor node
  std::map<std::string, std::map<std::string, std::string>> edges;
  std::map<std::string, std::string> roots;
  std::map<std::string, std::string> statements;

  const SimNode& node(const std::string& id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw std::out_of_range("unknown sim node: " + id);
    return it->second;
  }

  const std::map<std::string, std::string>& outgoing(const std::string& id) const {
    static const std::map<std::string, std::string> none;
    auto it = edges.find(id);
    return it == edges.end() ? none : it->second;
  }

  /// Checks every structural invariant; throws FormatError naming the node.
  void validate() const {
    for (const auto& [id, n] : nodes) {
      if (n.proved != (n.goal_count == 0))
        throw FormatError("node " + id + ": proved flag disagrees with goal_count");
      if (count_open_goals(n.pretty) != n.goal_count)
        throw FormatError("node " + id + ": pretty text has " + std::to_string(count_open_goals(n.pretty)) +
                          " goal blocks but declares goal_count " + std::to_string(n.goal_count));
    }
    for (const auto& [from, out] : edges) {
      auto it = nodes.find(from);
      if (it == nodes.end()) throw FormatError("edge from unknown node " + from);
      if (it->second.proved && !out.empty()) throw FormatError("node " + from + ": proved node has outgoing edges");
      for (const auto& [tactic, to] : out) {
        if (!nodes.count(to)) throw FormatError("node " + from + ": edge '" + tactic + "' to unknown node " + to);
        if (detail::trim_right(tactic).empty()) throw FormatError("node " + from + ": empty tactic on edge");
      }
    }
    for (const auto& [thm, root] : roots) {
      auto it = nodes.find(root);
      if (it == nodes.end()) throw FormatError("theorem " + thm + ": unknown root node " + root);
      if (it->second.proved) throw FormatError("theorem " + thm + ": root node " + root + " is already proved");
    }
  }
};

/// Tree spec JSON:
///   {"nodes": {id: {"pretty": str, "goal_count": n, "proved"?: bool}},
///    "edges": [{"from": id, "tactic": str, "to": id}],
///    "roots": {theorem_id: id}, "statements"?: {theorem_id: str}}
inline SimTree tree_from_json(const json& spec) {
  SimTree tree;
  try {
    for (const auto& [id, n] : spec.at("nodes").items()) {
      SimNode node;
      node.pretty = n.at("pretty").get<std::string>();
      node.goal_count = n.at("goal_count").get<std::size_t>();
      node.proved = n.contains("proved") ? n["proved"].get<bool>() : node.goal_count == 0;
      tree.nodes.emplace(id, std::move(node));
    }
    if (spec.contains("edges")) {
      for (const auto& e : spec["edges"]) {
        auto from = e.at("from").get<std::string>();
        auto tactic = e.at("tactic").get<std::string>();
        if (!tree.edges[from].emplace(tactic, e.at("to").get<std::string>()).second)
          throw FormatError("node " + from + ": duplicate edge '" + tactic + "'");
      }
    }
    for (const auto& [thm, root] : spec.at("roots").items()) tree.roots.emplace(thm, root.get<std::string>());
    if (spec.contains("statements"))
      for (const auto& [thm, st] : spec["statements"].items()) tree.statements.emplace(thm, st.get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed tree spec: ") + e.what());
  }
  tree.validate();
  return tree;
}

inline json tree_to_json(const SimTree& tree) {
  json nodes = json::object(), edges = json::array();
  for (const auto& [id, n] : tree.nodes) nodes[id] = {{"pretty", n.pretty}, {"goal_count", n.goal_count}};
  for (const auto& [from, out] : tree.edges)
    for (const auto& [tactic, to] : out) edges.push_back({{"from", from}, {"tactic", tactic}, {"to", to}});
  json j{{"nodes", std::move(nodes)}, {"edges", std::move(edges)}, {"roots", tree.roots}};
  if (!tree.statements.empty()) j["statements"] = tree.statements;
  return j;
}

inline SimTree load_tree_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open tree spec " + path.string());
  json spec;
  try {
    spec = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return tree_from_json(spec);
}

struct SimTransition {
  EnvStatus status = EnvStatus::error;
  std::string target;  // successor node id, empty on error
  std::string pretty;
  std::string message;
};

inline SimTransition sim_step(const SimTree& tree, const std::string& node_id, std::string_view tactic) {
  tree.node(node_id);
  const auto& out = tree.outgoing(node_id);
  auto it = out.find(std::string(tactic));
  if (it == out.end()) return {EnvStatus::error, "", "", "unknown tactic"};
  const auto& next = tree.node(it->second);
  return {next.proved ? EnvStatus::proved : EnvStatus::ok, it->second, next.pretty, ""};
}

/// Every tactic sequence of length <= depth_limit that reaches a proved node,
/// in lexicographic order.
inline std::set<std::vector<std::string>> enumerate_proofs(const SimTree& tree, const std::string& theorem_id,
                                                           std::size_t depth_limit) {
  auto root = tree.roots.find(theorem_id);
  if (root == tree.roots.end()) throw std::out_of_range("unknown theorem: " + theorem_id);
  std::set<std::vector<std::string>> proofs;
  std::vector<std::string> path;
  std::function<void(const std::string&)> walk = [&](const std::string& id) {
    if (tree.node(id).proved) {
      proofs.insert(path);
      return;
    }
    if (path.size() == depth_limit) return;
    for (const auto& [tactic, to] : tree.outgoing(id)) {
      path.push_back(tactic);
      walk(to);
      path.pop_back();
    }
  };
  walk(root->second);
  return proofs;
}

/// In-process session. Every visit gets a fresh state_ref, so branching from
/// historical states goes through distinct refs exactly as against a server.
class SimSession : public EnvSession {
 public:
  explicit SimSession(std::shared_ptr<const SimTree> tree) : tree_(std::move(tree)) {}

  EnvResponse init(std::string_view theorem_id, std::string_view) override {
    refs_.clear();
    auto it = tree_->roots.find(std::string(theorem_id));
    if (it == tree_->roots.end()) return EnvResponse::error("unknown theorem: " + std::string(theorem_id));
    refs_.push_back(it->second);
    return EnvResponse::ok(0, tree_->node(it->second).pretty);
  }

  EnvResponse run(StateRef state_ref, std::string_view tactic) override {
    if (refs_.empty()) return EnvResponse::error("no theorem initialized");
    if (state_ref < 0 || static_cast<std::size_t>(state_ref) >= refs_.size())
      return EnvResponse::error("unknown state_ref " + std::to_string(state_ref));
    ++executions_;
    auto step = sim_step(*tree_, refs_[static_cast<std::size_t>(state_ref)], tactic);
    switch (step.status) {
      case EnvStatus::error: return EnvResponse::error(step.message);
      case EnvStatus::proved: return EnvResponse::proved(step.pretty);
      case EnvStatus::ok: break;
    }
    refs_.push_back(step.target);
    return EnvResponse::ok(static_cast<StateRef>(refs_.size() - 1), step.pretty);
  }

  void close() override { refs_.clear(); }

  /// Node behind a state_ref; test hook.
  const std::string& node_of(StateRef ref) const { return refs_.at(static_cast<std::size_t>(ref)); }
  std::size_t executions() const noexcept { return executions_; }

  /// Answers one protocol request.
  json handle(const json& request) {
    try {
      if (!request.is_object() || !request.contains("op") || !request["op"].is_string())
        return encode(EnvResponse::error("malformed request: missing op"));
      auto op = request["op"].get<std::string>();
      if (op == "init") {
        auto statement = request.contains("statement") ? request["statement"].get<std::string>() : std::string();
        return encode(init(request.at("theorem_id").get<std::string>(), statement));
      }
      if (op == "run") return encode(run(request.at("state_ref").get<StateRef>(), request.at("tactic").get<std::string>()));
      if (op == "close") {
        close();
        return encode(EnvResponse{EnvStatus::ok, {}, {}, {}});
      }
      return encode(EnvResponse::error("unknown op: " + op));
    } catch (const json::exception& e) {
      return encode(EnvResponse::error(std::string("malformed request: ") + e.what()));
    }
  }

 private:
  std::shared_ptr<const SimTree> tree_;
  std::vector<std::string> refs_;
  std::size_t executions_ = 0;
};

/// Serves one session over `channel` until end of stream.
inline void serve_sim_session(std::shared_ptr<const SimTree> tree, LineChannel& channel) {
  SimSession session(std::move(tree));
  while (auto line = channel.receive()) {
    if (detail::is_blank(*line)) continue;
    json reply;
    try {
      reply = session.handle(json::parse(*line));
    } catch (const json::parse_error&) {
      reply = encode(EnvResponse::error("malformed request: not a JSON record"));
    }
    channel.send(to_line(reply));
  }
}

/// Accepts connections forever, one independent session per connection.
inline void serve_sim_tcp(std::shared_ptr<const SimTree> tree, TcpListener& listener) {
  while (auto conn = listener.accept()) {
    std::thread([tree, c = std::shared_ptr<FdChannel>(std::move(conn))] {
      try {
        serve_sim_session(tree, *c);
      } catch (const TransportError&) {
      }
    }).detach();
  }
}

}  // namespace segprover
