#pragma once

// Per-trial correlation time and RMS, per-subject averages and group
// summaries for recorded tracking sessions.

#include <optional>
#include <string>
#include <vector>

#include "cbal/analysis.hpp"
#include "cbal/experiment.hpp"

namespace cbal {

enum class Grouping { none, mode, subject };

Grouping parse_grouping(std::string_view name);
std::string_view to_string(Grouping grouping);

struct TrialReportOptions {
  double window = 5.0;      // s; trials shorter than 2 * window are excluded
  LagRange lags{0.0, 0.5};  // s
  double prominence = 0.8;
  Grouping grouping = Grouping::mode;
};

/// One (trial, subject) pair.
struct TrialStat {
  std::string source;  // file name or caller label
  std::string session;
  std::string subject;
  std::size_t subject_index = 1;
  SessionMode mode = SessionMode::single;
  std::optional<double> tau_hat;  // absent when no dominant peak
  double rms = 0;
  double duration = 0;
  TerminationCause cause = TerminationCause::completed;
};

struct Exclusion {
  std::string source;
  std::string reason;
};

struct SubjectAverage {
  std::string subject;
  SessionMode mode = SessionMode::single;
  std::size_t trials = 0;
  std::size_t tau_trials = 0;  // trials with a peak
  double tau_hat = 0;
  double rms = 0;
};

struct GroupSummary {
  std::string group;
  std::size_t n = 0;
  double tau_mean = 0, tau_std = 0;
  double rms_mean = 0, rms_std = 0;
};

struct TrialReport {
  std::vector<TrialStat> trials;
  std::vector<Exclusion> excluded;
  std::vector<SubjectAverage> subjects;
  std::vector<GroupSummary> groups;
};

/// Correlation time from the STCC of (tip velocity, base velocity) over the
/// whole trial and RMS of the balancing error, for every subject of a record.
std::vector<TrialStat> analyze_trial(const TrialRecord& record, const std::string& source,
                                     const TrialReportOptions& options = {});

struct LabeledRecord {
  std::string source;
  TrialRecord record;
};

TrialReport trial_report(const std::vector<LabeledRecord>& records, const TrialReportOptions& options = {});

/// Averages and group statistics from already computed rows.
TrialReport aggregate_trials(std::vector<TrialStat> trials, Grouping grouping);

}  // namespace cbal
