#pragma once

// Line-delimited record files, stable digests and the trajectory record codec.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "segprover/core.hpp"

namespace segprover {

using json = nlohmann::json;

/// Key of the optional first-line header object in every record file.
inline constexpr std::string_view kHeaderKey = "_header";

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
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

/// Stable hash of a JSON value. Object keys are emitted sorted, so logically
/// equal configurations hash equally.
inline std::string digest_of(const json& value) { return hex64(fnv1a64(value.dump())); }

inline std::string to_line(const json& record) {
  return record.dump(-1, ' ', false, json::error_handler_t::strict);
}

inline json header_record(json header) {
  json rec = json::object();
  rec[std::string(kHeaderKey)] = std::move(header);
  return rec;
}

inline bool is_header(const json& rec) {
  return rec.is_object() && rec.contains(std::string(kHeaderKey));
}

/// Reads every record of a JSONL file, skipping blank lines. The header (if
/// any) is returned through `header`.
inline std::vector<json> read_jsonl(std::istream& in, std::optional<json>* header = nullptr,
                                    const std::string& name = "<stream>") {
  std::vector<json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::is_blank(line)) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(name + ":" + std::to_string(number) + ": " + e.what());
    }
    if (is_header(rec)) {
      if (header) *header = rec[std::string(kHeaderKey)];
      continue;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<json> read_jsonl_file(const std::filesystem::path& path,
                                         std::optional<json>* header = nullptr) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_jsonl(in, header, path.string());
}

/// Writes `records` behind an optional header line.
inline void write_jsonl_file(const std::filesystem::path& path, const std::optional<json>& header,
                             const std::vector<json>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  if (header) out << to_line(header_record(*header)) << '\n';
  for (const auto& r : records) out << to_line(r) << '\n';
  if (!out) throw FormatError("write failed: " + path.string());
}

template <class T>
T required(const json& rec, const char* key) {
  if (!rec.is_object() || !rec.contains(key)) throw FormatError(std::string("missing field: ") + key);
  try {
    return rec.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad field ") + key + ": " + e.what());
  }
}

// Trajectory records: {theorem_id, statement, states:[pretty…], tactics:[…], goal_counts:[…]}

inline json trajectory_to_json(const Trajectory& t) {
  json states = json::array(), counts = json::array(), tactics = json::array();
  for (const auto& s : t.states()) {
    states.push_back(s.pretty);
    counts.push_back(s.goal_count);
  }
  for (const auto& a : t.tactics()) tactics.push_back(a.text());
  return json{{"theorem_id", t.theorem_id()},
              {"statement", t.statement()},
              {"states", std::move(states)},
              {"tactics", std::move(tactics)},
              {"goal_counts", std::move(counts)}};
}

/// Rebuilds a trajectory; stored goal counts must agree with the texts except
/// for the terminal state, whose count is 0 by construction.
inline Trajectory trajectory_from_json(const json& rec) {
  auto states_text = required<std::vector<std::string>>(rec, "states");
  auto tactic_text = required<std::vector<std::string>>(rec, "tactics");
  auto counts = required<std::vector<std::size_t>>(rec, "goal_counts");
  if (counts.size() != states_text.size()) throw FormatError("goal_counts/states length mismatch");
  std::vector<ProofState> states;
  for (std::size_t i = 0; i < states_text.size(); ++i) {
    bool last = i + 1 == states_text.size();
    ProofState s = last ? ProofState::completed(states_text[i]) : ProofState::from_pretty(states_text[i]);
    if (s.goal_count != counts[i])
      throw FormatError("stored goal count " + std::to_string(counts[i]) + " disagrees with state text at position " +
                        std::to_string(i));
    states.push_back(std::move(s));
  }
  std::vector<Tactic> tactics;
  for (auto& a : tactic_text) tactics.emplace_back(std::move(a));
  try {
    return Trajectory(required<std::string>(rec, "theorem_id"), required<std::string>(rec, "statement"),
                      std::move(states), std::move(tactics));
  } catch (const InvariantError& e) {
    throw FormatError(std::string("invalid trajectory: ") + e.what());
  }
}

inline std::string corpus_hash(const std::vector<Trajectory>& trajectories) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : trajectories) {
    h = fnv1a64(to_line(trajectory_to_json(t)), h);
    h = fnv1a64("\n", h);
  }
  return hex64(h);
}

}  // namespace segprover
