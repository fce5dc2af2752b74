#pragma once

// CSV output: header row, one record per line, shortest round-trip numbers.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cbal/analysis.hpp"
#include "cbal/stability.hpp"
#include "cbal/trial_report.hpp"

namespace cbal::csv {

std::string number(double v);
std::string field(const std::string& s);  // quotes when needed

class Writer {
 public:
  Writer(std::ostream& out, const std::vector<std::string>& header);
  Writer& operator<<(double v);
  Writer& operator<<(std::uint64_t v);
  Writer& operator<<(const std::string& s);
  Writer& operator<<(const std::optional<double>& v);  // empty cell when absent
  void end_row();

 private:
  std::ostream& out_;
  std::size_t columns_;
  std::size_t column_ = 0;
  void separator();
};

/// t plus one column per series; series must share length and sampling.
void write_series(std::ostream& out, const std::vector<TimeSeries>& series);
void write_spectrum(std::ostream& out, const PowerSpectrum& spectrum);
void write_histogram(std::ostream& out, const Histogram& histogram);
void write_density_ratio(std::ostream& out, const DensityRatio& ratio);
void write_ensemble(std::ostream& out, const EnsembleRms& ensemble);
void write_sweep(std::ostream& out, const std::vector<SweepPoint>& sweep);
void write_calibration_trace(std::ostream& out, const BetaCalibration& calibration);
void write_stcc(std::ostream& out, const StccResult& stcc);
void write_peak_series(std::ostream& out, const PeakSeries& peaks);
void write_trials(std::ostream& out, const std::vector<TrialStat>& trials);
void write_subject_averages(std::ostream& out, const std::vector<SubjectAverage>& averages);
void write_groups(std::ostream& out, const std::vector<GroupSummary>& groups);
void write_exclusions(std::ostream& out, const std::vector<Exclusion>& excluded);

}  // namespace cbal::csv
