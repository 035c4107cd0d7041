#pragma once

// Candidate generation over scripted tables (tests) and remote generation
// servers (real provers). Decoding happens behind this interface; the search
// engine only sees ranked candidates.
//
// Policy wire protocol (one JSON record per line):
//   {"op":"generate","prompt":…,"num_candidates":k,"max_tokens":m,"extensions":{…}}
//     -> {"status":"ok","candidates":[{"text":…,"score":…,"token_count":…},…]}
//      | {"status":"error","message":…}

#include <cmath>
#include <concepts>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "segprover/boundary.hpp"
#include "segprover/io.hpp"
#include "segprover/tokenizer.hpp"
#include "segprover/transport.hpp"

namespace segprover {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PolicyCandidate {
  std::string text;
  double score = 0.0;  // log-probability, higher is better
  std::size_t token_count = 1;
  /// True when the server omitted token_count and it was estimated from text.
  bool token_count_estimated = false;

  friend bool operator==(const PolicyCandidate&, const PolicyCandidate&) = default;
};

using CandidateList = std::vector<PolicyCandidate>;

inline std::size_t whitespace_token_count(std::string_view text) {
  return Tokenizer(TokenizerSpec::whitespace()).count(text);
}

/// Rejects lists that are not sorted by descending score or carry bad counts.
inline void check_candidate_order(const CandidateList& cands, std::string_view where) {
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i].token_count < 1)
      throw PolicyError(std::string(where) + ": candidate " + std::to_string(i) + " has token_count 0");
    if (!std::isfinite(cands[i].score) && !(std::isinf(cands[i].score) && cands[i].score < 0))
      throw PolicyError(std::string(where) + ": candidate " + std::to_string(i) + " has a non-finite score");
    if (i > 0 && cands[i].score > cands[i - 1].score)
      throw PolicyError(std::string(where) + ": candidates not sorted by descending score");
  }
}

inline PolicyCandidate candidate_from_json(const json& c) {
  if (!c.is_object() || !c.contains("text") || !c["text"].is_string())
    throw PolicyError("candidate without text");
  if (!c.contains("score") || !c["score"].is_number()) throw PolicyError("candidate without numeric score");
  PolicyCandidate p;
  p.text = c["text"].get<std::string>();
  p.score = c["score"].get<double>();
  if (c.contains("token_count") && !c["token_count"].is_null()) {
    if (!c["token_count"].is_number_integer() || c["token_count"].get<long long>() < 1)
      throw PolicyError("token_count must be a positive integer");
    p.token_count = c["token_count"].get<std::size_t>();
  } else {
    p.token_count = std::max<std::size_t>(1, whitespace_token_count(p.text));
    p.token_count_estimated = true;
  }
  return p;
}

inline json candidate_to_json(const PolicyCandidate& c) {
  return json{{"text", c.text}, {"score", c.score}, {"token_count", c.token_count}};
}

template <class P>
concept CandidatePolicy = requires(P& p, std::string_view prompt, std::size_t n, const json& ext) {
  { p.generate(prompt, n, n, ext) } -> std::same_as<CandidateList>;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual CandidateList generate(std::string_view prompt, std::size_t num_candidates, std::size_t max_tokens,
                                 const json& extensions) = 0;
};

static_assert(CandidatePolicy<Policy>);

/// Prompt-keyed lookup table. Entries longer than max_tokens whitespace tokens
/// come back truncated, as a length-limited decoder would produce them.
class ScriptedPolicy : public Policy {
 public:
  ScriptedPolicy() = default;

  void add(std::string prompt, CandidateList candidates) {
    check_candidate_order(candidates, "scripted entry");
    table_[std::move(prompt)] = std::move(candidates);
  }
  void add_state(std::string_view pretty, CandidateList candidates) {
    add(instruction_prompt(pretty), std::move(candidates));
  }
  void set_default(CandidateList candidates) {
    check_candidate_order(candidates, "scripted default");
    default_ = std::move(candidates);
  }

  CandidateList generate(std::string_view prompt, std::size_t num_candidates, std::size_t max_tokens,
                         const json& = json::object()) override {
    auto it = table_.find(std::string(prompt));
    const CandidateList* src = nullptr;
    if (it != table_.end())
      src = &it->second;
    else if (default_)
      src = &*default_;
    else
      throw PolicyError("scripted policy has no entry for prompt");
    CandidateList out;
    for (std::size_t i = 0; i < src->size() && i < num_candidates; ++i) out.push_back(truncate((*src)[i], max_tokens));
    return out;
  }

  /// {"entries":[{"state"|"prompt": str, "candidates":[…]}], "default"?: […]}
  static ScriptedPolicy from_json(const json& spec) {
    ScriptedPolicy p;
    auto read_list = [](const json& arr) {
      if (!arr.is_array()) throw FormatError("candidate list must be an array");
      CandidateList out;
      for (const auto& c : arr) out.push_back(candidate_from_json(c));
      return out;
    };
    try {
      if (spec.contains("entries")) {
        for (const auto& e : spec["entries"]) {
          auto cands = read_list(e.at("candidates"));
          if (e.contains("prompt"))
            p.add(e["prompt"].get<std::string>(), std::move(cands));
          else
            p.add_state(e.at("state").get<std::string>(), std::move(cands));
        }
      }
      if (spec.contains("default") && !spec["default"].is_null()) p.set_default(read_list(spec["default"]));
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed scripted policy: ") + e.what());
    } catch (const PolicyError& e) {
      throw FormatError(std::string("malformed scripted policy: ") + e.what());
    }
    return p;
  }

  static ScriptedPolicy load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open scripted policy " + path.string());
    try {
      return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }

 private:
  static PolicyCandidate truncate(PolicyCandidate c, std::size_t max_tokens) {
    if (c.token_count <= max_tokens) return c;
    // Keep the text up to the end of the max_tokens-th whitespace token.
    std::size_t seen = 0, i = 0;
    while (i < c.text.size() && seen < max_tokens) {
      while (i < c.text.size() && detail::is_space(c.text[i])) ++i;
      if (i == c.text.size()) break;
      while (i < c.text.size() && !detail::is_space(c.text[i])) ++i;
      ++seen;
    }
    c.text.resize(i);
    c.token_count = max_tokens;
    return c;
  }

  std::map<std::string, CandidateList> table_;
  std::optional<CandidateList> default_;
};

inline json generate_request(std::string_view prompt, std::size_t num_candidates, std::size_t max_tokens,
                             const json& extensions) {
  return json{{"op", "generate"},
              {"prompt", prompt},
              {"num_candidates", num_candidates},
              {"max_tokens", max_tokens},
              {"extensions", extensions.is_null() ? json::object() : extensions}};
}

/// Parses and validates a generate response. Contract breaches (unsorted
/// scores, too many candidates, bad counts) are errors, never repaired.
inline CandidateList decode_generate_response(std::string_view line, std::size_t num_candidates) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw PolicyError(std::string("malformed policy response: ") + e.what());
  }
  if (!j.is_object() || !j.contains("status") || !j["status"].is_string())
    throw PolicyError("policy response without status");
  if (j["status"] == "error")
    throw PolicyError("policy server error: " + (j.contains("message") && j["message"].is_string()
                                                     ? j["message"].get<std::string>()
                                                     : std::string("(no message)")));
  if (j["status"] != "ok") throw PolicyError("unknown policy status");
  if (!j.contains("candidates") || !j["candidates"].is_array()) throw PolicyError("policy response without candidates");
  CandidateList out;
  for (const auto& c : j["candidates"]) out.push_back(candidate_from_json(c));
  if (out.size() > num_candidates) throw PolicyError("policy returned more candidates than requested");
  check_candidate_order(out, "policy response");
  return out;
}

/// Forwards requests verbatim over a line channel.
class RemotePolicy : public Policy {
 public:
  explicit RemotePolicy(std::shared_ptr<LineChannel> channel) : channel_(std::move(channel)) {}

  CandidateList generate(std::string_view prompt, std::size_t num_candidates, std::size_t max_tokens,
                         const json& extensions) override {
    auto line = channel_->exchange(to_line(generate_request(prompt, num_candidates, max_tokens, extensions)));
    return decode_generate_response(line, num_candidates);
  }

 private:
  std::shared_ptr<LineChannel> channel_;
};

}  // namespace segprover
