#pragma once

// Boundary selection over verified trajectories and the supervision datasets
// it induces.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "segprover/core.hpp"
#include "segprover/edit_distance.hpp"
#include "segprover/io.hpp"
#include "segprover/script_parser.hpp"
#include "segprover/tokenizer.hpp"

namespace segprover {

/// Strictly increasing positions 0 = t_0 < ... < t_K = T with K >= 1.
class BoundarySet {
 public:
  BoundarySet(std::vector<std::size_t> positions, std::size_t length) : positions_(std::move(positions)) {
    if (positions_.size() < 2 || positions_.front() != 0 || positions_.back() != length)
      throw InvariantError("boundaries must start at 0 and end at T");
    for (std::size_t i = 1; i < positions_.size(); ++i)
      if (positions_[i] <= positions_[i - 1]) throw InvariantError("boundaries must be strictly increasing");
  }

  const std::vector<std::size_t>& positions() const noexcept { return positions_; }
  /// Number of segments (K).
  std::size_t segments() const noexcept { return positions_.size() - 1; }

 private:
  std::vector<std::size_t> positions_;
};

namespace detail {

inline BoundarySet from_cuts(std::set<std::size_t> cuts, std::size_t length) {
  cuts.insert(0);
  cuts.insert(length);
  return BoundarySet(std::vector<std::size_t>(cuts.begin(), cuts.end()), length);
}

}  // namespace detail

inline BoundarySet select_boundaries(const Trajectory& trajectory, const BoundaryStrategy& strategy,
                                     const Tokenizer& tokenizer) {
  const std::size_t T = trajectory.length();
  const auto& states = trajectory.states();
  const auto& tactics = trajectory.tactics();
  std::set<std::size_t> cuts;

  switch (strategy.kind()) {
    case BoundaryKind::step:
      for (std::size_t t = 1; t < T; ++t) cuts.insert(t);
      break;
    case BoundaryKind::whole:
      break;
    case BoundaryKind::goal_change:
      for (std::size_t t = 1; t <= T; ++t)
        if (states[t].goal_count != states[t - 1].goal_count) cuts.insert(t);
      break;
    case BoundaryKind::token_threshold: {
      // Close a segment before it would overflow; a lone oversized tactic
      // still gets its own segment.
      const auto limit = static_cast<std::size_t>(*strategy.threshold());
      std::size_t running = 0, held = 0;
      for (std::size_t i = 0; i < T; ++i) {
        std::size_t c = tokenizer.count(tactics[i].text());
        if (held > 0 && running + c > limit) {
          cuts.insert(i);
          running = held = 0;
        }
        running += c;
        ++held;
      }
      break;
    }
    case BoundaryKind::tactic_distance: {
      const double limit = *strategy.threshold();
      TokenList prev = tokenizer.tokenize(tactics[0].text());
      for (std::size_t t = 1; t < T; ++t) {
        TokenList next = tokenizer.tokenize(tactics[t].text());
        if (normalized_edit_distance(prev, next) > limit) cuts.insert(t);
        prev = std::move(next);
      }
      break;
    }
    case BoundaryKind::state_distance: {
      // The reference state resets at every boundary.
      const double limit = *strategy.threshold();
      TokenList start = tokenizer.tokenize(states[0].pretty);
      for (std::size_t t = 1; t < T; ++t) {
        TokenList here = tokenizer.tokenize(states[t].pretty);
        if (normalized_edit_distance(here, start) > limit) {
          cuts.insert(t);
          start = std::move(here);
        }
      }
      break;
    }
  }
  return detail::from_cuts(std::move(cuts), T);
}

inline std::vector<SupervisionExample> extract_segments(const Trajectory& trajectory, const BoundarySet& boundaries,
                                                        BoundaryKind granularity) {
  const auto& pos = boundaries.positions();
  if (pos.back() != trajectory.length()) throw InvariantError("boundaries do not fit the trajectory");
  std::vector<SupervisionExample> out;
  out.reserve(boundaries.segments());
  for (std::size_t k = 1; k < pos.size(); ++k) {
    std::vector<Tactic> target(trajectory.tactics().begin() + static_cast<std::ptrdiff_t>(pos[k - 1]),
                               trajectory.tactics().begin() + static_cast<std::ptrdiff_t>(pos[k]));
    out.push_back(SupervisionExample{trajectory.theorem_id(), k, trajectory.states()[pos[k - 1]].pretty,
                                     MacroAction(std::move(target)), granularity});
  }
  return out;
}

/// Identifies which of several near-identical datasets a file holds.
struct DatasetProvenance {
  BoundaryStrategy strategy = BoundaryStrategy::step();
  std::string tokenizer;
  std::string corpus_hash;

  json to_json() const {
    json j{{"strategy", std::string(to_string(strategy.kind()))},
           {"threshold", strategy.threshold() ? json(*strategy.threshold()) : json(nullptr)},
           {"tokenizer", tokenizer},
           {"corpus_hash", corpus_hash}};
    if (strategy.kind() == BoundaryKind::state_distance) j["state_distance_reference"] = "segment_start";
    return j;
  }
};

struct SupervisionDataset {
  std::vector<SupervisionExample> examples;
  DatasetProvenance provenance;
  /// Segment length (tactics per target) -> number of examples.
  std::map<std::size_t, std::size_t> segment_length_histogram;

  std::size_t size() const noexcept { return examples.size(); }
};

inline SupervisionDataset build_dataset(const std::vector<Trajectory>& trajectories, const BoundaryStrategy& strategy,
                                        const Tokenizer& tokenizer) {
  SupervisionDataset ds;
  ds.provenance = {strategy, tokenizer.spec().describe(), corpus_hash(trajectories)};
  for (const auto& t : trajectories) {
    auto examples = extract_segments(t, select_boundaries(t, strategy, tokenizer), strategy.kind());
    for (auto& e : examples) {
      ++ds.segment_length_histogram[e.target.size()];
      ds.examples.push_back(std::move(e));
    }
  }
  return ds;
}

inline std::string serialize_target_text(const MacroAction& target) {
  std::vector<std::string> parts;
  for (const auto& t : target.tactics()) parts.push_back(t.text());
  return detail::join(parts, kTacticSeparator);
}

inline SerializedTarget serialize_target(const MacroAction& target, const Tokenizer& tokenizer) {
  SerializedTarget s{serialize_target_text(target), 0};
  s.token_count = tokenizer.count(s.text);
  return s;
}

inline std::string instruction_prompt(std::string_view state) {
  std::string out = "[GOAL]\n";
  out += state;
  out += "\n[PROOFSTEP]\n";
  return out;
}

struct InstructionRecord {
  std::string instruction;
  std::string input;
  std::string output;
};

inline InstructionRecord serialize_example(const SupervisionExample& example) {
  return {instruction_prompt(example.input_state), "", serialize_target_text(example.target)};
}

inline json dataset_record(const SupervisionExample& example) {
  auto rec = serialize_example(example);
  return json{{"instruction", rec.instruction},
              {"input", rec.input},
              {"output", rec.output},
              {"theorem_id", example.theorem_id},
              {"boundary_index", example.boundary_index},
              {"granularity", std::string(to_string(example.granularity))}};
}

inline void write_dataset(const std::filesystem::path& path, const SupervisionDataset& ds, json header) {
  header["provenance"] = ds.provenance.to_json();
  json hist = json::object();
  for (auto [len, n] : ds.segment_length_histogram) hist[std::to_string(len)] = n;
  header["example_count"] = ds.size();
  header["segment_length_histogram"] = std::move(hist);
  std::vector<json> records;
  records.reserve(ds.size());
  for (const auto& e : ds.examples) records.push_back(dataset_record(e));
  write_jsonl_file(path, header, records);
}

/// Reads one dataset record back. The output is re-grouped into tactic blocks
/// with the script parser, which inverts newline joining for parsed blocks.
inline SupervisionExample example_from_record(const json& rec) {
  auto instruction = required<std::string>(rec, "instruction");
  constexpr std::string_view kHead = "[GOAL]\n", kTail = "\n[PROOFSTEP]\n";
  if (instruction.size() < kHead.size() + kTail.size() || instruction.compare(0, kHead.size(), kHead) != 0 ||
      instruction.compare(instruction.size() - kTail.size(), kTail.size(), kTail) != 0)
    throw FormatError("instruction field is not in [GOAL]/[PROOFSTEP] form");
  auto blocks = parse_proof_script(required<std::string>(rec, "output"));
  if (!blocks) throw FormatError("output field does not parse: " + blocks.error().message);
  return SupervisionExample{required<std::string>(rec, "theorem_id"), required<std::size_t>(rec, "boundary_index"),
                            instruction.substr(kHead.size(), instruction.size() - kHead.size() - kTail.size()),
                            MacroAction(std::move(blocks).value()),
                            parse_boundary_kind(required<std::string>(rec, "granularity"))};
}

inline std::vector<SupervisionExample> read_dataset(const std::filesystem::path& path,
                                                    std::optional<json>* header = nullptr) {
  std::vector<SupervisionExample> out;
  for (const auto& rec : read_jsonl_file(path, header)) out.push_back(example_from_record(rec));
  return out;
}

}  // namespace segprover
