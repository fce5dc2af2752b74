#pragma once

// Tracking-experiment data model: session configuration, screen mapping,
// trial records and their JSON-lines persistence.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbal/model.hpp"
#include "cbal/params.hpp"
#include "cbal/series.hpp"

namespace cbal {

enum class SessionMode { single, coupled };

SessionMode parse_session_mode(std::string_view name);
std::string_view to_string(SessionMode mode);

enum class TerminationCause { completed, out_of_range, aborted_by_subject, client_lost };

TerminationCause parse_termination_cause(std::string_view name);
std::string_view to_string(TerminationCause cause);

inline constexpr int kTrialFormatVersion = 1;

struct SessionConfig {
  SessionMode mode = SessionMode::single;
  ModelParams params = default_experiment_params();
  double rod_length = 1.0;      // model units, display only
  double tick_rate = 50.0;      // Hz
  double max_duration = 600.0;  // s
  double visible_lo = -3.0;
  double visible_hi = 3.0;
  int screen_width = 1200;      // px
  int countdown = 3;            // s

  static ModelParams default_experiment_params();

  /// Throws ValidationError on a bad combination (non-integral substeps,
  /// asymmetric range, ...).
  void validate() const;

  std::size_t subjects() const noexcept { return mode == SessionMode::single ? 1 : 2; }
  std::size_t substeps() const;         // integration steps per tick
  std::uint64_t max_ticks() const;      // ticks in a full-length session
  double px_per_unit() const noexcept {
    return static_cast<double>(screen_width - 1) / (visible_hi - visible_lo);
  }
};

/// Model position -> screen column. Positions outside the visible range
/// are clamped; rounding is half away from zero.
int model_to_px(double x, const SessionConfig& config);
/// Screen column -> model position (no clamping beyond the px range check).
double px_to_model(int px, const SessionConfig& config);

/// One tick of a session, all positions in model units.
struct TickRow {
  std::uint64_t tick = 0;
  double t = 0;
  double tip = 0;                 // x_T or the shared q_T
  double tip_velocity = 0;
  std::vector<double> bases;      // x_M or (q_M1, q_M2)
  std::vector<double> base_velocities;
  std::vector<double> errors;     // tip - base_i
  std::vector<int> mouse_px;      // raw input per subject
};

struct TrialRecord {
  int format_version = kTrialFormatVersion;
  SessionConfig config;
  std::string session_code;
  std::vector<std::string> subjects;
  std::vector<TickRow> rows;
  std::optional<TerminationCause> cause;  // absent when the file was truncated

  double duration() const;
};

// ---------------------------------------------------------------- persistence

/// Append-only writer: header on construction, one flushed line per row.
class TrialWriter {
 public:
  TrialWriter(const std::filesystem::path& path, const TrialRecord& header_source);
  ~TrialWriter();
  TrialWriter(const TrialWriter&) = delete;
  TrialWriter& operator=(const TrialWriter&) = delete;

  void append(const TickRow& row);
  void finish(TerminationCause cause);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string header_line(const TrialRecord& record);
std::string row_line(const TickRow& row);
std::string end_line(TerminationCause cause, std::uint64_t ticks);

/// Writes header, rows and end marker.
void persist(const TrialRecord& record, const std::filesystem::path& path);
void persist(const TrialRecord& record, std::ostream& out);

struct LoadResult {
  TrialRecord record;
  std::vector<std::string> warnings;  // e.g. truncation
};

/// Parses a trial file. A damaged final line or a missing end marker yields
/// the valid prefix plus a warning; damage before the last line throws
/// TrialFormatError naming the line.
LoadResult load(const std::filesystem::path& path);
LoadResult load(std::istream& in);

class TrialFormatError : public std::runtime_error {
 public:
  TrialFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------- replay

/// Channels: "tip", "base<i>", "error<i>", "v_tip", "v_base<i>" with i = 1
/// or 2 (1 only for single sessions). Velocities are backward differences
/// of the recorded positions at dt_sample = 1 / tick_rate.
std::vector<TimeSeries> replay(const TrialRecord& record, const std::vector<std::string>& channels);
TimeSeries replay(const TrialRecord& record, std::string_view channel);

/// Wraps positions sampled at the tick rate (e.g. a downsampled numerical
/// run) into a completed record, mouse columns derived from the bases.
TrialRecord record_from_positions(const SessionConfig& config, std::vector<std::string> subjects,
                                  const TimeSeries& tip, const std::vector<TimeSeries>& bases);

}  // namespace cbal
