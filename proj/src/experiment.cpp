#include "cbal/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>

namespace cbal {

using ojson = nlohmann::ordered_json;

SessionMode parse_session_mode(std::string_view name) {
  if (name == "single") return SessionMode::single;
  if (name == "coupled") return SessionMode::coupled;
  throw ValidationError("unknown session mode '" + std::string(name) + "'");
}

std::string_view to_string(SessionMode mode) {
  return mode == SessionMode::single ? "single" : "coupled";
}

TerminationCause parse_termination_cause(std::string_view name) {
  if (name == "completed") return TerminationCause::completed;
  if (name == "out-of-range") return TerminationCause::out_of_range;
  if (name == "aborted-by-subject") return TerminationCause::aborted_by_subject;
  if (name == "client-lost") return TerminationCause::client_lost;
  throw ValidationError("unknown termination cause '" + std::string(name) + "'");
}

std::string_view to_string(TerminationCause cause) {
  switch (cause) {
    case TerminationCause::completed: return "completed";
    case TerminationCause::out_of_range: return "out-of-range";
    case TerminationCause::aborted_by_subject: return "aborted-by-subject";
    case TerminationCause::client_lost: return "client-lost";
  }
  return "unknown";
}

ModelParams SessionConfig::default_experiment_params() {
  ModelParams p;
  p.alpha = 21.0;
  p.beta = 21.0;
  p.gamma = 50.0;
  p.tau = 0.1;
  p.nu = 0.6;
  p.dt = 1e-3;
  return p;
}

void SessionConfig::validate() const {
  params.validate();
  if (!(tick_rate > 0)) throw ValidationError("tick rate must be > 0");
  if (!(max_duration > 0)) throw ValidationError("max duration must be > 0");
  if (!(visible_hi > visible_lo) || std::abs(visible_hi + visible_lo) > 1e-12 * visible_hi)
    throw ValidationError("visible range must be symmetric and nonempty");
  if (screen_width < 2) throw ValidationError("screen width must be >= 2");
  if (countdown < 0) throw ValidationError("countdown must be >= 0");
  if (!(rod_length >= 0)) throw ValidationError("rod length must be >= 0");
  if (rod_length * px_per_unit() > screen_width - 2) throw ValidationError("rod does not fit on the screen");
  const double per_tick = 1.0 / (tick_rate * params.dt);
  if (std::abs(per_tick - std::round(per_tick)) > 1e-9 * per_tick || std::round(per_tick) < 1)
    throw ValidationError("1/tick_rate must be an integer multiple of dt");
}

std::size_t SessionConfig::substeps() const {
  return static_cast<std::size_t>(std::llround(1.0 / (tick_rate * params.dt)));
}

std::uint64_t SessionConfig::max_ticks() const {
  return static_cast<std::uint64_t>(std::llround(max_duration * tick_rate));
}

int model_to_px(double x, const SessionConfig& c) {
  if (std::isnan(x)) throw ValidationError("cannot map NaN to a pixel");
  const double clamped = std::clamp(x, c.visible_lo, c.visible_hi);
  return static_cast<int>(std::round((clamped - c.visible_lo) * c.px_per_unit() + 1.0));
}

double px_to_model(int px, const SessionConfig& c) {
  if (px < 1 || px > c.screen_width) throw ValidationError("pixel outside the screen");
  return static_cast<double>(px - 1) / c.px_per_unit() + c.visible_lo;
}

double TrialRecord::duration() const {
  return rows.empty() ? 0.0 : static_cast<double>(rows.size()) / config.tick_rate;
}

// ---------------------------------------------------------------- JSON lines

namespace {

ojson config_json(const SessionConfig& c) {
  ojson j;
  j["mode"] = to_string(c.mode);
  j["gamma"] = c.params.gamma;
  j["alpha"] = c.params.alpha;
  j["beta"] = c.params.beta;
  j["nu"] = c.params.nu;
  j["tau"] = c.params.tau;
  j["dt"] = c.params.dt;
  j["seed"] = c.params.seed;
  j["rod_length"] = c.rod_length;
  j["tick_rate"] = c.tick_rate;
  j["max_duration"] = c.max_duration;
  j["visible_lo"] = c.visible_lo;
  j["visible_hi"] = c.visible_hi;
  j["screen_width"] = c.screen_width;
  j["countdown"] = c.countdown;
  return j;
}

SessionConfig config_from_json(const ojson& j) {
  SessionConfig c;
  c.mode = parse_session_mode(j.at("mode").get<std::string>());
  c.params.gamma = j.at("gamma").get<double>();
  c.params.alpha = j.at("alpha").get<double>();
  c.params.beta = j.at("beta").get<double>();
  c.params.nu = j.at("nu").get<double>();
  c.params.tau = j.at("tau").get<double>();
  c.params.dt = j.at("dt").get<double>();
  c.params.seed = j.at("seed").get<std::uint64_t>();
  c.rod_length = j.at("rod_length").get<double>();
  c.tick_rate = j.at("tick_rate").get<double>();
  c.max_duration = j.at("max_duration").get<double>();
  c.visible_lo = j.at("visible_lo").get<double>();
  c.visible_hi = j.at("visible_hi").get<double>();
  c.screen_width = j.at("screen_width").get<int>();
  c.countdown = j.at("countdown").get<int>();
  c.validate();
  return c;
}

TickRow row_from_json(const ojson& j, std::size_t subjects) {
  TickRow r;
  r.tick = j.at("tick").get<std::uint64_t>();
  r.t = j.at("t").get<double>();
  r.tip = j.at("tip").get<double>();
  r.tip_velocity = j.at("v_tip").get<double>();
  r.bases = j.at("bases").get<std::vector<double>>();
  r.base_velocities = j.at("v_bases").get<std::vector<double>>();
  r.errors = j.at("errors").get<std::vector<double>>();
  r.mouse_px = j.at("px").get<std::vector<int>>();
  if (r.bases.size() != subjects || r.base_velocities.size() != subjects ||
      r.errors.size() != subjects || r.mouse_px.size() != subjects)
    throw ValidationError("row width does not match the subject count");
  return r;
}

}  // namespace

std::string header_line(const TrialRecord& record) {
  ojson j;
  j["type"] = "header";
  j["format_version"] = record.format_version;
  j["session"] = record.session_code;
  j["subjects"] = record.subjects;
  j["config"] = config_json(record.config);
  return j.dump();
}

std::string row_line(const TickRow& row) {
  ojson j;
  j["type"] = "tick";
  j["tick"] = row.tick;
  j["t"] = row.t;
  j["tip"] = row.tip;
  j["v_tip"] = row.tip_velocity;
  j["bases"] = row.bases;
  j["v_bases"] = row.base_velocities;
  j["errors"] = row.errors;
  j["px"] = row.mouse_px;
  return j.dump();
}

std::string end_line(TerminationCause cause, std::uint64_t ticks) {
  ojson j;
  j["type"] = "end";
  j["cause"] = to_string(cause);
  j["ticks"] = ticks;
  return j.dump();
}

struct TrialWriter::Impl {
  std::ofstream out;
  std::uint64_t rows = 0;
  bool finished = false;
};

TrialWriter::TrialWriter(const std::filesystem::path& path, const TrialRecord& header_source)
    : impl_(std::make_unique<Impl>()) {
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) throw std::runtime_error("cannot open trial file " + path.string());
  impl_->out << header_line(header_source) << '\n' << std::flush;
}

TrialWriter::~TrialWriter() = default;

void TrialWriter::append(const TickRow& row) {
  impl_->out << row_line(row) << '\n' << std::flush;
  ++impl_->rows;
}

void TrialWriter::finish(TerminationCause cause) {
  if (impl_->finished) return;
  impl_->out << end_line(cause, impl_->rows) << '\n' << std::flush;
  impl_->finished = true;
}

void persist(const TrialRecord& record, std::ostream& out) {
  out << header_line(record) << '\n';
  for (const auto& r : record.rows) out << row_line(r) << '\n';
  if (record.cause) out << end_line(*record.cause, record.rows.size()) << '\n';
}

void persist(const TrialRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open trial file " + path.string());
  persist(record, out);
  if (!out) throw std::runtime_error("failed writing trial file " + path.string());
}

LoadResult load(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw TrialFormatError(1, "empty trial file");

  LoadResult out;
  TrialRecord& rec = out.record;
  bool ended = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const bool last = i + 1 == lines.size();
    ojson j;
    try {
      j = ojson::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      if (last && i > 0) {
        out.warnings.push_back("line " + std::to_string(line_no) +
                               ": incomplete final line ignored (truncated file)");
        break;
      }
      throw TrialFormatError(line_no, std::string("malformed JSON: ") + e.what());
    }
    if (ended) throw TrialFormatError(line_no, "content after the end marker");
    try {
      const std::string type = j.at("type").get<std::string>();
      if (i == 0) {
        if (type != "header") throw ValidationError("first line must be the header");
        rec.format_version = j.at("format_version").get<int>();
        if (rec.format_version != kTrialFormatVersion)
          throw ValidationError("unsupported format_version " + std::to_string(rec.format_version));
        rec.session_code = j.at("session").get<std::string>();
        rec.subjects = j.at("subjects").get<std::vector<std::string>>();
        rec.config = config_from_json(j.at("config"));
        if (rec.subjects.size() != rec.config.subjects())
          throw ValidationError("subject list does not match the session mode");
      } else if (type == "tick") {
        TickRow r = row_from_json(j, rec.subjects.size());
        if (r.tick != rec.rows.size()) throw ValidationError("tick indices are not contiguous from 0");
        rec.rows.push_back(std::move(r));
      } else if (type == "end") {
        rec.cause = parse_termination_cause(j.at("cause").get<std::string>());
        if (j.at("ticks").get<std::uint64_t>() != rec.rows.size())
          throw ValidationError("end marker tick count disagrees with the rows");
        ended = true;
      } else {
        throw ValidationError("unknown line type '" + type + "'");
      }
    } catch (const TrialFormatError&) {
      throw;
    } catch (const std::exception& e) {
      if (last && i > 0 && dynamic_cast<const nlohmann::json::exception*>(&e)) {
        out.warnings.push_back("line " + std::to_string(line_no) +
                               ": incomplete final line ignored (truncated file)");
        break;
      }
      throw TrialFormatError(line_no, e.what());
    }
  }
  if (!ended) out.warnings.push_back("no end marker: record is truncated");
  return out;
}

LoadResult load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trial file " + path.string());
  return load(in);
}

// ---------------------------------------------------------------- replay

TimeSeries replay(const TrialRecord& record, std::string_view channel) {
  if (record.rows.empty()) throw ValidationError("cannot replay an empty record");
  const double dt = 1.0 / record.config.tick_rate;
  const std::size_t n = record.subjects.size();
  auto subject_index = [&](std::string_view prefix) -> std::optional<std::size_t> {
    if (channel.size() != prefix.size() + 1 || channel.substr(0, prefix.size()) != prefix)
      return std::nullopt;
    const char c = channel.back();
    if (c < '1' || static_cast<std::size_t>(c - '0') > n)
      throw ValidationError("no subject " + std::string(1, c) + " in this record");
    return static_cast<std::size_t>(c - '1');
  };

  TimeSeries out{{}, dt, std::string(channel), 0.0};
  out.samples.reserve(record.rows.size());
  auto collect = [&](auto get) {
    for (const auto& r : record.rows) out.samples.push_back(get(r));
  };
  if (channel == "tip") {
    collect([](const TickRow& r) { return r.tip; });
  } else if (channel == "v_tip") {
    collect([](const TickRow& r) { return r.tip; });
    out = finite_difference(out, std::string(channel));
  } else if (auto i = subject_index("base")) {
    collect([&](const TickRow& r) { return r.bases[*i]; });
  } else if (auto i = subject_index("error")) {
    collect([&](const TickRow& r) { return r.errors[*i]; });
  } else if (auto i = subject_index("v_base")) {
    collect([&](const TickRow& r) { return r.bases[*i]; });
    out = finite_difference(out, std::string(channel));
  } else {
    throw ValidationError("unknown replay channel '" + std::string(channel) + "'");
  }
  return out;
}

std::vector<TimeSeries> replay(const TrialRecord& record, const std::vector<std::string>& channels) {
  std::vector<TimeSeries> out;
  for (const auto& c : channels) out.push_back(replay(record, c));
  return out;
}

TrialRecord record_from_positions(const SessionConfig& config, std::vector<std::string> subjects,
                                  const TimeSeries& tip, const std::vector<TimeSeries>& bases) {
  config.validate();
  if (subjects.size() != config.subjects() || bases.size() != config.subjects())
    throw ValidationError("subject count does not match the session mode");
  const double dt = 1.0 / config.tick_rate;
  if (std::abs(tip.dt_sample - dt) > 1e-9 * dt) throw ValidationError("series must be sampled at the tick rate");
  for (const auto& b : bases)
    if (b.size() != tip.size() || std::abs(b.dt_sample - dt) > 1e-9 * dt)
      throw ValidationError("base series must match the tip series");

  TrialRecord rec;
  rec.config = config;
  rec.subjects = std::move(subjects);
  rec.session_code = "synthetic";
  const TimeSeries v_tip = finite_difference(tip, "v_tip");
  std::vector<TimeSeries> v_bases;
  for (const auto& b : bases) v_bases.push_back(finite_difference(b, "v_base"));
  for (std::size_t k = 0; k < tip.size(); ++k) {
    TickRow r;
    r.tick = k;
    r.t = static_cast<double>(k) / config.tick_rate;
    r.tip = tip.samples[k];
    r.tip_velocity = v_tip.samples[k];
    for (std::size_t i = 0; i < bases.size(); ++i) {
      r.bases.push_back(bases[i].samples[k]);
      r.base_velocities.push_back(v_bases[i].samples[k]);
      r.errors.push_back(tip.samples[k] - bases[i].samples[k]);
      r.mouse_px.push_back(model_to_px(bases[i].samples[k], config));
    }
    rec.rows.push_back(std::move(r));
  }
  rec.cause = TerminationCause::completed;
  return rec;
}

}  // namespace cbal
