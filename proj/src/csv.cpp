#include "cbal/csv.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace cbal::csv {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

Writer::Writer(std::ostream& out, const std::vector<std::string>& header)
    : out_(out), columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << field(header[i]);
  out_ << '\n';
}

void Writer::separator() {
  if (column_ >= columns_) throw std::logic_error("CSV row has too many cells");
  if (column_++) out_ << ',';
}

Writer& Writer::operator<<(double v) {
  separator();
  out_ << number(v);
  return *this;
}

Writer& Writer::operator<<(std::uint64_t v) {
  separator();
  out_ << v;
  return *this;
}

Writer& Writer::operator<<(const std::string& s) {
  separator();
  out_ << field(s);
  return *this;
}

Writer& Writer::operator<<(const std::optional<double>& v) {
  separator();
  if (v) out_ << number(*v);
  return *this;
}

void Writer::end_row() {
  if (column_ != columns_) throw std::logic_error("CSV row has too few cells");
  out_ << '\n';
  column_ = 0;
}

void write_series(std::ostream& out, const std::vector<TimeSeries>& series) {
  std::vector<std::string> header{"t"};
  for (const auto& s : series) {
    if (s.size() != series.front().size()) throw ValidationError("series lengths differ");
    header.push_back(s.label);
  }
  Writer w(out, header);
  if (series.empty()) return;
  for (std::size_t i = 0; i < series.front().size(); ++i) {
    w << series.front().time(i);
    for (const auto& s : series) w << s.samples[i];
    w.end_row();
  }
}

void write_spectrum(std::ostream& out, const PowerSpectrum& s) {
  Writer w(out, {"frequency", "power"});
  for (std::size_t k = 0; k < s.frequency.size(); ++k) {
    w << s.frequency[k] << s.power[k];
    w.end_row();
  }
}

void write_histogram(std::ostream& out, const Histogram& h) {
  Writer w(out, {"lag", "density"});
  for (std::size_t i = 0; i < h.density.size(); ++i) {
    w << h.center(i) << h.density[i];
    w.end_row();
  }
}

void write_density_ratio(std::ostream& out, const DensityRatio& r) {
  Writer w(out, {"velocity", "density_coupled", "density_single", "ratio", "count_coupled", "count_single"});
  for (const auto& b : r.bins) {
    w << b.center << b.density_a << b.density_b << b.ratio << std::uint64_t{b.count_a}
      << std::uint64_t{b.count_b};
    w.end_row();
  }
}

void write_ensemble(std::ostream& out, const EnsembleRms& e) {
  Writer w(out, {"seed", "rms", "log10_rms"});
  for (std::size_t i = 0; i < e.rms.size(); ++i) {
    w << e.seeds[i] << e.rms[i] << std::log10(e.rms[i]);
    w.end_row();
  }
}

void write_sweep(std::ostream& out, const std::vector<SweepPoint>& sweep) {
  Writer w(out, {"beta", "lambda1", "std_error", "failure"});
  for (const auto& p : sweep) {
    w << p.beta;
    if (p.failure)
      w << std::optional<double>{} << std::optional<double>{} << *p.failure;
    else
      w << p.lambda1 << p.std_error << std::string{};
    w.end_row();
  }
}

void write_calibration_trace(std::ostream& out, const BetaCalibration& c) {
  Writer w(out, {"beta", "lambda1", "std_error"});
  for (const auto& s : c.trace) {
    w << s.beta << s.lambda1 << s.std_error;
    w.end_row();
  }
}

void write_stcc(std::ostream& out, const StccResult& r) {
  Writer w(out, {"lag", "coefficient"});
  for (std::size_t i = 0; i < r.lag.size(); ++i) {
    w << r.lag[i] << r.coefficient[i];
    w.end_row();
  }
}

void write_peak_series(std::ostream& out, const PeakSeries& p) {
  Writer w(out, {"t", "tau_hat"});
  for (std::size_t i = 0; i < p.t.size(); ++i) {
    w << p.t[i] << p.peak[i];
    w.end_row();
  }
}

void write_trials(std::ostream& out, const std::vector<TrialStat>& trials) {
  Writer w(out, {"source", "session", "subject", "subject_index", "mode", "tau_hat", "rms", "duration", "cause"});
  for (const auto& t : trials) {
    w << t.source << t.session << t.subject << std::uint64_t{t.subject_index}
      << std::string(to_string(t.mode)) << t.tau_hat << t.rms << t.duration
      << std::string(to_string(t.cause));
    w.end_row();
  }
}

void write_subject_averages(std::ostream& out, const std::vector<SubjectAverage>& averages) {
  Writer w(out, {"subject", "mode", "trials", "tau_trials", "tau_hat_mean", "rms_mean"});
  for (const auto& a : averages) {
    w << a.subject << std::string(to_string(a.mode)) << std::uint64_t{a.trials}
      << std::uint64_t{a.tau_trials} << a.tau_hat << a.rms;
    w.end_row();
  }
}

void write_groups(std::ostream& out, const std::vector<GroupSummary>& groups) {
  Writer w(out, {"group", "n", "tau_mean", "tau_std", "rms_mean", "rms_std"});
  for (const auto& g : groups) {
    w << g.group << std::uint64_t{g.n} << g.tau_mean << g.tau_std << g.rms_mean << g.rms_std;
    w.end_row();
  }
}

void write_exclusions(std::ostream& out, const std::vector<Exclusion>& excluded) {
  Writer w(out, {"source", "reason"});
  for (const auto& e : excluded) {
    w << e.source << e.reason;
    w.end_row();
  }
}

}  // namespace cbal::csv
