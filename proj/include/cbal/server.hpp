#pragma once

// WebSocket front end for one tracking session.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "cbal/experiment.hpp"

namespace cbal {

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  std::string session_code;
  SessionConfig config;
  std::filesystem::path output_dir = ".";
  /// Lockstep: tick k is computed only after every client acknowledged
  /// tick k-1. For scripted clients; humans get real-time pacing.
  bool lockstep = false;
  double ack_timeout = 10.0;  // s without progress in lockstep -> client lost
  std::size_t writer_queue = 1024;
};

struct ServeResult {
  std::optional<std::filesystem::path> trial_path;  // empty when no session started
  std::optional<TrialRecord> record;
};

class TrackingServer {
 public:
  /// Binds immediately; throws std::system_error when the port is busy.
  explicit TrackingServer(ServeOptions options);
  ~TrackingServer();
  TrackingServer(const TrackingServer&) = delete;
  TrackingServer& operator=(const TrackingServer&) = delete;

  unsigned short port() const;
  std::string url() const;

  /// Waits for the subjects, runs the session, writes the trial file.
  ServeResult run();

  /// Async-signal-safe: ends a running session as aborted-by-subject, or
  /// stops waiting for clients.
  void request_abort() noexcept;

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

/// Returns a fresh, unused trial path in `dir` for the session.
std::filesystem::path trial_path_for(const std::filesystem::path& dir, const std::string& session_code,
                                     SessionMode mode);

// ---------------------------------------------------------------- client

struct ClientOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;
  std::string session_code;
  std::string subject = "scripted";
  /// "track": put the own base under the own tip line each tick.
  /// "hold": never move. "replay": send the mouse column of a trial file.
  std::string strategy = "track";
  std::filesystem::path replay_file;
  std::size_t replay_subject = 1;
  bool send_abort_at_tick = false;
  std::uint64_t abort_tick = 0;
};

struct ClientResult {
  int subject_index = 0;
  std::uint64_t states = 0;
  std::uint64_t last_tick = 0;
  std::optional<TerminationCause> cause;
  int min_tip_separation = 0;  // coupled only
  int max_tip_separation = 0;
  bool ticks_monotone = true;
};

/// Runs one scripted participant until the server sends end.
ClientResult run_scripted_client(const ClientOptions& options);

}  // namespace cbal
