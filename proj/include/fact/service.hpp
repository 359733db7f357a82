// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fact/acquire.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>

namespace httplib {
class Server;
}

namespace fact {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::size_t kMaxSuggestions = 10;

struct ServiceConfig {
  std::chrono::seconds idle_timeout{3600};
  /// Append-only JSONL log of creations, acquisitions and deletions.
  std::optional<std::filesystem::path> event_log;
  /// Fixes the session-id generator; random when unset.
  std::optional<std::uint64_t> id_seed;
};

/// Transport-independent result: HTTP status plus JSON body.
struct Response {
  int status = 200;
  nlohmann::json body;
};

/// In-memory session store over one immutable bundle. Calls on different
/// sessions run in parallel; calls on one session are serialized.
class SessionService {
 public:
  using Clock = std::chrono::steady_clock;

  explicit SessionService(const ModelBundle& bundle, ServiceConfig config = {});
  ~SessionService();
  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  Response health() const;
  Response model() const;
  Response list_sessions();
  /// Body: {"values": {name: raw value | [raw values] | category}}; optional.
  Response create_session(const nlohmann::json& body);
  Response get_session(const std::string& id);
  Response get_suggestion(const std::string& id);
  /// Body: {"id": name, "value": v} or {"group": name, "values": [...]}.
  Response post_feature(const std::string& id, const nlohmann::json& body);
  Response delete_session(const std::string& id);

  /// Drops sessions idle for longer than the configured timeout.
  std::size_t evict_idle();
  std::size_t session_count() const;

  /// Rebuilds sessions from an event log written by a previous service.
  /// Returns the number of live sessions restored.
  std::size_t replay(const std::filesystem::path& log);

  /// Test hook for eviction.
  void set_clock(std::function<Clock::time_point()> now) { now_ = std::move(now); }

 private:
  struct Entry;

  std::shared_ptr<Entry> find(const std::string& id);
  std::string new_id();
  void log_event(const nlohmann::json& event);
  nlohmann::json state_json(const Entry& entry) const;
  nlohmann::json prediction_json(const AcquisitionSession& session) const;
  nlohmann::json suggestion_json(const AcquisitionSession& session) const;

  const ModelBundle* bundle_;
  ServiceConfig config_;
  std::function<Clock::time_point()> now_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;

  std::mutex id_mutex_;
  std::mt19937_64 id_rng_;

  std::mutex log_mutex_;
  std::ofstream log_;
};

/// Registers the /v1 routes on `server`.
void mount(httplib::Server& server, SessionService& service);

}  // namespace fact
