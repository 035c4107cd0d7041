#pragma once

// Replays raw proof scripts through an environment to recover verified
// trajectories. Records that fail to parse, fail to execute, or never reach a
// proved state are rejected and counted.

#include <atomic>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <exception>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "segprover/core.hpp"
#include "segprover/io.hpp"
#include "segprover/protocol.hpp"
#include "segprover/script_parser.hpp"

namespace segprover {

struct RawRecord {
  std::string theorem_id;
  std::string statement;
  std::optional<std::string> proof_script;
  std::optional<std::vector<std::pair<std::string, std::string>>> state_tactic_pairs;

  /// The executable script: given directly, or the pair tactics in proof order.
  std::string script() const {
    if (proof_script) return *proof_script;
    std::vector<std::string> tactics;
    for (const auto& p : *state_tactic_pairs) tactics.push_back(p.second);
    return detail::join(tactics, "\n");
  }
};

inline RawRecord raw_record_from_json(const json& j) {
  RawRecord r;
  r.theorem_id = required<std::string>(j, "theorem_id");
  r.statement = j.contains("statement") ? required<std::string>(j, "statement") : std::string();
  bool has_script = j.contains("proof_script") && !j["proof_script"].is_null();
  bool has_pairs = j.contains("state_tactic_pairs") && !j["state_tactic_pairs"].is_null();
  if (has_script == has_pairs)
    throw FormatError("record " + r.theorem_id + ": exactly one of proof_script / state_tactic_pairs required");
  if (has_script) {
    r.proof_script = required<std::string>(j, "proof_script");
  } else {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& p : j["state_tactic_pairs"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
        throw FormatError("record " + r.theorem_id + ": state_tactic_pairs entries must be [state, tactic]");
      pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
    r.state_tactic_pairs = std::move(pairs);
  }
  return r;
}

inline json raw_record_to_json(const RawRecord& r) {
  json j{{"theorem_id", r.theorem_id}, {"statement", r.statement}};
  if (r.proof_script) j["proof_script"] = *r.proof_script;
  if (r.state_tactic_pairs) {
    json pairs = json::array();
    for (const auto& [s, t] : *r.state_tactic_pairs) pairs.push_back(json::array({s, t}));
    j["state_tactic_pairs"] = std::move(pairs);
  }
  return j;
}

enum class ReplayFailureKind { parse, exec, incomplete };

inline std::string_view to_string(ReplayFailureKind k) {
  switch (k) {
    case ReplayFailureKind::parse: return "parse";
    case ReplayFailureKind::exec: return "exec";
    case ReplayFailureKind::incomplete: return "incomplete";
  }
  return "?";
}

struct ReplayFailure {
  ReplayFailureKind kind;
  std::size_t step_index = 0;  // 1-based tactic index for exec failures
  std::string message;
};

struct ReplaySuccess {
  Trajectory trajectory;
  std::vector<std::string> warnings;
};

template <ProofEnvironment Env>
Outcome<ReplaySuccess, ReplayFailure> replay(const RawRecord& record, Env& session) {
  auto blocks = parse_proof_script(record.script());
  if (!blocks) return ReplayFailure{ReplayFailureKind::parse, 0, blocks.error().message};
  const auto& tactics = blocks.value();

  auto init = session.init(record.theorem_id, record.statement);
  if (init.status != EnvStatus::ok)
    return ReplayFailure{ReplayFailureKind::exec, 0, "init failed: " + init.message.value_or("")};

  std::vector<ProofState> states{ProofState::from_pretty(*init.pretty)};
  std::vector<std::string> warnings;
  StateRef ref = *init.state_ref;
  for (std::size_t i = 0; i < tactics.size(); ++i) {
    auto r = session.run(ref, tactics[i].text());
    if (r.status == EnvStatus::error) return ReplayFailure{ReplayFailureKind::exec, i + 1, r.message.value_or("")};
    if (r.status == EnvStatus::proved) {
      if (i + 1 != tactics.size())
        return ReplayFailure{ReplayFailureKind::exec, i + 2, "tactic after the proof was already complete"};
      std::string text = r.pretty.value_or("no goals");
      if (count_open_goals(text) != 0)
        warnings.push_back(record.theorem_id + ": proved response still prints open goals");
      states.push_back(ProofState::completed(std::move(text)));
      return ReplaySuccess{Trajectory(record.theorem_id, record.statement, std::move(states), tactics),
                           std::move(warnings)};
    }
    states.push_back(ProofState::from_pretty(*r.pretty));
    ref = *r.state_ref;
  }
  return ReplayFailure{ReplayFailureKind::incomplete, 0, "script ended before the proof was complete"};
}

struct RejectionReport {
  std::size_t total = 0;
  std::size_t verified = 0;
  std::map<std::string, std::size_t> rejections;  // failure kind -> count
  std::vector<json> rejected;                     // per-record detail, input order
  std::vector<std::string> warnings;

  json to_json() const {
    return json{{"total", total},   {"verified", verified}, {"rejections", rejections},
                {"rejected", rejected}, {"warnings", warnings}};
  }
};

struct CorpusResult {
  std::vector<Trajectory> trajectories;
  RejectionReport report;
};

using EnvFactory = std::function<std::unique_ptr<EnvSession>()>;

/// Replays every record in its own session. `worker_setup` runs once per
/// worker thread and returns that worker's session factory. Output order
/// follows input order regardless of `workers`.
inline CorpusResult verify_corpus_with(const std::vector<RawRecord>& records,
                                       const std::function<EnvFactory()>& worker_setup, std::size_t workers) {
  std::vector<std::optional<Outcome<ReplaySuccess, ReplayFailure>>> results(records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto work = [&] {
    try {
      std::size_t i = next++;
      if (i >= records.size()) return;
      auto env_factory = worker_setup();
      for (; i < records.size(); i = next++) {
        auto session = env_factory();
        results[i] = replay(records[i], *session);
        session->close();
      }
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
      next = records.size();
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, records.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  CorpusResult out;
  out.report.total = records.size();
  for (auto kind : {ReplayFailureKind::parse, ReplayFailureKind::exec, ReplayFailureKind::incomplete})
    out.report.rejections[std::string(to_string(kind))] = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto& r = *results[i];
    if (r.ok()) {
      auto& ok = r.value();
      for (auto& w : ok.warnings) out.report.warnings.push_back(std::move(w));
      out.trajectories.push_back(std::move(ok.trajectory));
      continue;
    }
    const auto& f = r.error();
    ++out.report.rejections[std::string(to_string(f.kind))];
    json detail{{"theorem_id", records[i].theorem_id}, {"kind", std::string(to_string(f.kind))}, {"message", f.message}};
    if (f.kind == ReplayFailureKind::exec) detail["step_index"] = f.step_index;
    out.report.rejected.push_back(std::move(detail));
  }
  out.report.verified = out.trajectories.size();
  return out;
}

inline CorpusResult verify_corpus(const std::vector<RawRecord>& records, const EnvFactory& env_factory,
                                  std::size_t workers = 1) {
  return verify_corpus_with(records, [&] { return env_factory; }, workers);
}

}  // namespace segprover
