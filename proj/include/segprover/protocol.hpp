#pragma once

// Environment wire protocol: single-line JSON requests and responses.
//
//   {"op":"init","theorem_id":…,"statement":…} -> {"status":"ok","state_ref":0,"pretty":…}
//   {"op":"run","state_ref":n,"tactic":…}      -> ok (new state_ref) | proved | error
//   {"op":"close"}                             -> {"status":"ok"}
//
// state_refs are session-local and stay runnable for the whole session.

#include <concepts>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "segprover/io.hpp"
#include "segprover/transport.hpp"

namespace segprover {

enum class EnvStatus { ok, proved, error };

inline std::string_view to_string(EnvStatus s) {
  switch (s) {
    case EnvStatus::ok: return "ok";
    case EnvStatus::proved: return "proved";
    case EnvStatus::error: return "error";
  }
  return "?";
}

using StateRef = std::int64_t;

struct EnvResponse {
  EnvStatus status = EnvStatus::error;
  std::optional<StateRef> state_ref;
  std::optional<std::string> pretty;
  std::optional<std::string> message;

  static EnvResponse ok(StateRef ref, std::string pretty) { return {EnvStatus::ok, ref, std::move(pretty), {}}; }
  static EnvResponse proved(std::string pretty) { return {EnvStatus::proved, {}, std::move(pretty), {}}; }
  static EnvResponse error(std::string message) { return {EnvStatus::error, {}, {}, std::move(message)}; }

  friend bool operator==(const EnvResponse&, const EnvResponse&) = default;
};

/// Raised when a peer sends something that is not a valid protocol record.
class ProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};

inline json encode(const EnvResponse& r) {
  json j{{"status", std::string(to_string(r.status))}};
  if (r.state_ref) j["state_ref"] = *r.state_ref;
  if (r.pretty) j["pretty"] = *r.pretty;
  if (r.message) j["message"] = *r.message;
  return j;
}

/// Validates the response shape; field order and unknown fields are ignored.
inline EnvResponse decode_env_response(const json& j) {
  if (!j.is_object() || !j.contains("status") || !j["status"].is_string())
    throw ProtocolError("response without status");
  EnvResponse r;
  auto status = j["status"].get<std::string>();
  auto opt_string = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) throw ProtocolError(std::string("field ") + key + " must be a string");
    return j[key].get<std::string>();
  };
  r.pretty = opt_string("pretty");
  r.message = opt_string("message");
  if (j.contains("state_ref") && !j["state_ref"].is_null()) {
    if (!j["state_ref"].is_number_integer()) throw ProtocolError("state_ref must be an integer");
    r.state_ref = j["state_ref"].get<StateRef>();
  }
  if (status == "ok") {
    r.status = EnvStatus::ok;
  } else if (status == "proved") {
    r.status = EnvStatus::proved;
    if (!r.pretty) r.pretty = "no goals";
  } else if (status == "error") {
    r.status = EnvStatus::error;
    if (!r.message) throw ProtocolError("error response without message");
  } else {
    throw ProtocolError("unknown status: " + status);
  }
  return r;
}

inline EnvResponse decode_env_response_line(std::string_view line) {
  try {
    return decode_env_response(json::parse(line));
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  }
}

inline json init_request(std::string_view theorem_id, std::string_view statement) {
  return json{{"op", "init"}, {"theorem_id", theorem_id}, {"statement", statement}};
}

inline json run_request(StateRef ref, std::string_view tactic) {
  return json{{"op", "run"}, {"state_ref", ref}, {"tactic", tactic}};
}

/// Anything that can host a proof attempt: init a theorem, then run tactics at
/// any previously returned state.
template <class S>
concept ProofEnvironment = requires(S& s, std::string_view text, StateRef ref) {
  { s.init(text, text) } -> std::same_as<EnvResponse>;
  { s.run(ref, text) } -> std::same_as<EnvResponse>;
};

/// Runtime-polymorphic session. `init` may be called again to start over.
class EnvSession {
 public:
  virtual ~EnvSession() = default;
  virtual EnvResponse init(std::string_view theorem_id, std::string_view statement) = 0;
  virtual EnvResponse run(StateRef state_ref, std::string_view tactic) = 0;
  virtual void close() {}
};

static_assert(ProofEnvironment<EnvSession>);

/// Session over a line channel. Several sessions may share one channel in
/// sequence; each `init` resets the peer's state table.
class RemoteEnvSession : public EnvSession {
 public:
  explicit RemoteEnvSession(std::shared_ptr<LineChannel> channel) : channel_(std::move(channel)) {}

  EnvResponse init(std::string_view theorem_id, std::string_view statement) override {
    auto r = call(init_request(theorem_id, statement));
    if (r.status == EnvStatus::ok && (!r.state_ref || !r.pretty))
      throw ProtocolError("init response lacks state_ref or pretty");
    return r;
  }

  EnvResponse run(StateRef state_ref, std::string_view tactic) override {
    auto r = call(run_request(state_ref, tactic));
    if (r.status == EnvStatus::ok && (!r.state_ref || !r.pretty))
      throw ProtocolError("run response lacks state_ref or pretty");
    return r;
  }

  void close() override {
    if (!channel_) return;
    auto ch = std::move(channel_);
    try {
      ch->exchange(to_line(json{{"op", "close"}}));
    } catch (const TransportError&) {
    }
  }

 private:
  EnvResponse call(const json& request) {
    if (!channel_) throw TransportError("session already closed");
    return decode_env_response_line(channel_->exchange(to_line(request)));
  }

  std::shared_ptr<LineChannel> channel_;
};

}  // namespace segprover
