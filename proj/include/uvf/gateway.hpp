#pragma once

// Live simulation sessions and the HTTP/WebSocket service in front of them.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "uvf/simkit.hpp"

namespace uvf::gateway {

using sim::json;

inline constexpr int kApiVersion = 1;

/// Sim-minutes per wall-second. 0 pauses; infinity runs as fast as possible.
using Pace = double;

struct SetMode {
  mcc::OperationMode mode;
};
struct SetPattern {
  topo::PatternLabel pattern;
};
struct InjectFailure {
  fleet::UvId uv;
};
struct SetPace {
  Pace pace;
};
struct Step {
  int count = 1;
};
struct AdvanceTo {
  SimDuration at;
};

using Command = std::variant<SetMode, SetPattern, InjectFailure, SetPace, Step, AdvanceTo>;

/// Raised for payloads that do not describe a command (HTTP 400).
class MalformedCommand : public Error {
 public:
  using Error::Error;
};

/// Accepted forms:
///   {"set_mode": "automatic"} | {"set_mode": "manual", "pattern": "Central"}
///   {"set_pattern": "Holonic"}
///   {"inject_failure": "UGV2"}
///   {"set_pace": 2.5} | {"set_pace": "max"}
///   {"step": true} | {"step": 3}
///   {"advance_to": 14}
Command parse_command(const json& payload);

struct CommandResult {
  int status = 200;  // 200, 400 or 409
  json body;
};

/// One simulation driven by a dedicated loop thread. Commands go through a
/// queue that the loop drains between iterations; reads return the state
/// published after the last iteration.
class Session {
 public:
  Session(sim::Scenario scenario, std::uint64_t seed, Pace pace);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  std::future<CommandResult> submit(Command command);
  /// Parses and submits; malformed payloads resolve immediately with 400.
  std::future<CommandResult> submit(const json& payload);

  json state() const;
  /// Serialized trace events with index >= from.
  std::vector<std::string> trace_from(std::size_t from) const;
  std::size_t trace_size() const;
  /// The scenario with every command accepted so far folded in as events.
  json exported_scenario() const;
  std::string session_id() const { return session_id_; }
  Pace pace() const;

  /// Called from the loop thread after new trace events are published.
  /// Returns a token for unsubscribe.
  std::size_t subscribe(std::function<void()> on_new_events);
  void unsubscribe(std::size_t token);

  /// Blocks until the simulation has processed every time point (or the
  /// timeout expires). Returns whether it finished.
  bool wait_finished(std::chrono::milliseconds timeout) const;

  void stop();

 private:
  struct Pending {
    Command command;
    std::promise<CommandResult> promise;
  };

  void loop();
  CommandResult apply(const Command& command);
  CommandResult inject(sim::EventAction action, const json& echo);
  mcc::OperationMode mode_at(SimDuration t) const;
  void publish();

  std::string session_id_;
  std::unique_ptr<sim::Simulator> sim_;  // loop thread only
  Pace pace_;                            // loop thread only

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Pending> queue_;
  bool stopping_ = false;

  mutable std::mutex published_mutex_;
  mutable std::condition_variable published_cv_;
  json state_;
  std::vector<std::string> trace_;
  json scenario_json_;
  Pace published_pace_;
  bool finished_ = false;

  std::mutex subscribers_mutex_;
  std::vector<std::pair<std::size_t, std::function<void()>>> subscribers_;
  std::size_t next_token_ = 1;

  std::thread thread_;
};

/// HTTP + WebSocket front end on one port.
///   GET  /state                 current state
///   GET  /trace?from=N          trace events from index N
///   POST /command               command payload, see parse_command
///   GET  /session/scenario      session exported as a scenario file
///   GET  /metrics               traffic and utilization tables so far
///   GET  /events?from=N         WebSocket: pushes trace events, accepts commands
class Server {
 public:
  Server(std::shared_ptr<Session> session, std::string address, std::uint16_t port, int threads = 4);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Bound port; useful when constructed with port 0.
  std::uint16_t port() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uvf::gateway
