#pragma once

// Deterministic tick engine for the tracking experiment. Network, pacing
// and persistence are supplied by the caller through SessionHooks.

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbal/experiment.hpp"
#include "cbal/model.hpp"

namespace cbal {

/// What the screen shows at one tick.
struct StateFrame {
  std::uint64_t tick = 0;
  std::vector<int> thick;  // tip lines, left to right
  std::vector<int> thin;   // base lines, subject order
};

class SessionEngine {
 public:
  SessionEngine(SessionConfig config, std::vector<std::string> subjects, std::string session_code);

  const SessionConfig& config() const noexcept { return config_; }
  std::uint64_t tick() const noexcept { return tick_; }
  bool finished() const noexcept { return record_.cause.has_value(); }

  /// Row and frame of the current tick (tick 0 is the initial state).
  const TickRow& row() const { return record_.rows.back(); }
  StateFrame frame() const;

  /// Advances one tick. `px[i]` is the latest mouse column of subject i or
  /// nullopt to keep the previous input. Returns the termination cause when
  /// the new row ends the session.
  std::optional<TerminationCause> advance(const std::vector<std::optional<int>>& px);

  /// Ends the session from outside (abort, lost client). No-op when already
  /// finished.
  void terminate(TerminationCause cause);

  const TrialRecord& record() const noexcept { return record_; }
  TrialRecord take_record() { return std::move(record_); }

 private:
  void push_row();
  std::optional<TerminationCause> check() const;

  SessionConfig config_;
  std::variant<SingleState, CoupledState> state_;
  std::vector<double> base_hold_;  // zero-order-held base positions
  std::vector<int> last_px_;
  std::vector<double> prev_bases_;
  std::uint64_t tick_ = 0;
  TrialRecord record_;
};

/// Tip-line columns for a tip coordinate. Coupled sessions draw two lines
/// a rod length apart, kept on screen as a rigid pair.
std::vector<int> tip_columns(double tip, const SessionConfig& config);

struct SessionHooks {
  std::function<void(int remaining)> on_countdown;
  /// Called once per tick before it is computed; returns the latest input
  /// per subject. This is where a real-time caller paces the loop.
  std::function<std::vector<std::optional<int>>(std::uint64_t tick)> inputs;
  /// Polled every tick; a value ends the session with that cause.
  std::function<std::optional<TerminationCause>()> interrupt;
  std::function<void(const StateFrame&)> on_state;
  std::function<void(const TickRow&)> on_row;
  std::function<void(TerminationCause)> on_end;
};

/// Countdown, then ticks until a termination predicate holds.
TrialRecord run_session(const SessionConfig& config, std::vector<std::string> subjects,
                        std::string session_code, const SessionHooks& hooks);

}  // namespace cbal
