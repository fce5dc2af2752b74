#include "cbal/trial_report.hpp"

#include <cmath>
#include <map>

namespace cbal {

Grouping parse_grouping(std::string_view name) {
  if (name == "none") return Grouping::none;
  if (name == "mode") return Grouping::mode;
  if (name == "subject") return Grouping::subject;
  throw ValidationError("unknown grouping '" + std::string(name) + "'");
}

std::string_view to_string(Grouping g) {
  switch (g) {
    case Grouping::none: return "none";
    case Grouping::mode: return "mode";
    case Grouping::subject: return "subject";
  }
  return "unknown";
}

std::vector<TrialStat> analyze_trial(const TrialRecord& record, const std::string& source,
                                     const TrialReportOptions& opt) {
  if (record.rows.empty()) throw ValidationError("record has no rows");
  const double dt = 1.0 / record.config.tick_rate;
  const auto n = static_cast<long>(record.rows.size());
  const long lo = std::lround(opt.lags.min / dt), hi = std::lround(opt.lags.max / dt);
  // full-trial window, shortened so that every lag stays inside the record;
  // one extra lag on each side lets the range ends count as local maxima
  const long pad_lo = lo - 1 < 0 ? 1 - lo : 0;
  const long length = n - (hi + 1) - pad_lo;
  if (length < 2) throw ValidationError("record too short for the lag range");

  const TimeSeries v_tip = replay(record, "v_tip");
  std::vector<TrialStat> out;
  for (std::size_t i = 0; i < record.subjects.size(); ++i) {
    const std::string k = std::to_string(i + 1);
    const TimeSeries v_base = replay(record, "v_base" + k);
    const TimeSeries error = replay(record, "error" + k);

    TrialStat s;
    s.source = source;
    s.session = record.session_code;
    s.subject = record.subjects[i];
    s.subject_index = i + 1;
    s.mode = record.config.mode;
    s.duration = record.duration();
    s.cause = record.cause.value_or(TerminationCause::aborted_by_subject);
    s.rms = rms(error);

    StccResult r;
    r.t = static_cast<double>(pad_lo) * dt;
    r.window = static_cast<double>(length) * dt;
    for (long j = lo - 1; j <= hi + 1; ++j) r.lag.push_back(static_cast<double>(j) * dt);
    try {
      r.coefficient = stcc_samples(v_tip.samples, v_base.samples, static_cast<std::size_t>(pad_lo),
                                   static_cast<std::size_t>(length), lo - 1, hi + 1);
      s.tau_hat = first_dominant_peak(r, opt.lags.min, opt.lags.max, opt.prominence);
    } catch (const ValidationError&) {
      s.tau_hat = std::nullopt;  // constant velocity over the trial
    }
    out.push_back(std::move(s));
  }
  return out;
}

TrialReport trial_report(const std::vector<LabeledRecord>& records, const TrialReportOptions& opt) {
  std::vector<TrialStat> rows;
  std::vector<Exclusion> excluded;
  for (const auto& [source, rec] : records) {
    if (!rec.cause) {
      excluded.push_back({source, "truncated record (no end marker)"});
      continue;
    }
    if (*rec.cause != TerminationCause::completed && *rec.cause != TerminationCause::out_of_range) {
      excluded.push_back({source, "terminated: " + std::string(to_string(*rec.cause))});
      continue;
    }
    if (rec.duration() < 2.0 * opt.window) {
      excluded.push_back({source, "shorter than two STCC windows"});
      continue;
    }
    try {
      auto stats = analyze_trial(rec, source, opt);
      rows.insert(rows.end(), stats.begin(), stats.end());
    } catch (const ValidationError& e) {
      excluded.push_back({source, e.what()});
    }
  }
  TrialReport report = aggregate_trials(std::move(rows), opt.grouping);
  report.excluded = std::move(excluded);
  return report;
}

namespace {

struct Moments {
  double sum = 0, sum2 = 0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    sum2 += v * v;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : std::nan(""); }
  double std() const {
    if (n < 2) return 0.0;
    const double m = mean();
    return std::sqrt(std::max(0.0, (sum2 - static_cast<double>(n) * m * m) / static_cast<double>(n - 1)));
  }
};

}  // namespace

TrialReport aggregate_trials(std::vector<TrialStat> trials, Grouping grouping) {
  TrialReport report;
  // keyed by (mode, subject) in first-seen order
  std::vector<std::pair<SessionMode, std::string>> order;
  std::map<std::pair<SessionMode, std::string>, std::pair<Moments, Moments>> per_subject;
  std::vector<std::string> group_order;
  std::map<std::string, std::pair<Moments, Moments>> per_group;

  for (const auto& t : trials) {
    const auto key = std::make_pair(t.mode, t.subject);
    if (!per_subject.count(key)) order.push_back(key);
    auto& [tau, rms] = per_subject[key];
    if (t.tau_hat) tau.add(*t.tau_hat);
    rms.add(t.rms);
  }
  for (const auto& key : order) {
    const auto& [tau, rms] = per_subject[key];
    SubjectAverage a;
    a.mode = key.first;
    a.subject = key.second;
    a.trials = rms.n;
    a.tau_trials = tau.n;
    a.tau_hat = tau.mean();
    a.rms = rms.mean();
    report.subjects.push_back(a);
  }

  // group statistics over trial points
  for (const auto& t : trials) {
    std::string g;
    switch (grouping) {
      case Grouping::none: g = "all"; break;
      case Grouping::mode: g = std::string(to_string(t.mode)); break;
      case Grouping::subject: g = t.subject; break;
    }
    if (!per_group.count(g)) group_order.push_back(g);
    auto& [gt, gr] = per_group[g];
    if (t.tau_hat) gt.add(*t.tau_hat);
    gr.add(t.rms);
  }
  for (const auto& g : group_order) {
    const auto& [gt, gr] = per_group[g];
    report.groups.push_back({g, gr.n, gt.mean(), gt.std(), gr.mean(), gr.std()});
  }
  report.trials = std::move(trials);
  return report;
}

}  // namespace cbal
