#include "cbal/session.hpp"

#include <algorithm>
#include <cmath>

namespace cbal {

std::vector<int> tip_columns(double tip, const SessionConfig& c) {
  if (c.mode == SessionMode::single) return {model_to_px(tip, c)};
  const int sep = static_cast<int>(std::lround(c.rod_length * c.px_per_unit()));
  const int left = std::clamp(model_to_px(tip - 0.5 * c.rod_length, c), 1, c.screen_width - sep);
  return {left, left + sep};
}

namespace {

std::variant<SingleState, CoupledState> initial_state(const SessionConfig& c) {
  c.validate();
  if (c.mode == SessionMode::single) return init_state(c.params, experiment_single_init());
  return init_state(c.params, experiment_coupled_init());
}

}  // namespace

SessionEngine::SessionEngine(SessionConfig config, std::vector<std::string> subjects,
                             std::string session_code)
    : config_(std::move(config)), state_(initial_state(config_)) {
  if (subjects.size() != config_.subjects())
    throw ValidationError("session needs " + std::to_string(config_.subjects()) + " subject(s)");
  if (const auto* s = std::get_if<SingleState>(&state_))
    base_hold_ = {s->x_base};
  else
    base_hold_ = {std::get<CoupledState>(state_).q_base1, std::get<CoupledState>(state_).q_base2};
  for (double b : base_hold_) last_px_.push_back(model_to_px(b, config_));
  prev_bases_ = base_hold_;
  record_.config = config_;
  record_.subjects = std::move(subjects);
  record_.session_code = std::move(session_code);
  push_row();
  if (auto cause = check()) record_.cause = cause;
}

void SessionEngine::push_row() {
  TickRow r;
  r.tick = tick_;
  r.t = static_cast<double>(tick_) / config_.tick_rate;
  const double tick_dt = 1.0 / config_.tick_rate;
  if (const auto* s = std::get_if<SingleState>(&state_)) {
    r.tip = s->x_tip;
    r.tip_velocity = s->v_tip;
    r.bases = {s->x_base};
  } else {
    const auto& c = std::get<CoupledState>(state_);
    r.tip = c.q_tip;
    r.tip_velocity = c.v_tip;
    r.bases = {c.q_base1, c.q_base2};
  }
  for (std::size_t i = 0; i < r.bases.size(); ++i) {
    r.base_velocities.push_back(tick_ == 0 ? 0.0 : (r.bases[i] - prev_bases_[i]) / tick_dt);
    r.errors.push_back(r.tip - r.bases[i]);
  }
  r.mouse_px = last_px_;
  prev_bases_ = r.bases;
  record_.rows.push_back(std::move(r));
}

std::optional<TerminationCause> SessionEngine::check() const {
  const TickRow& r = row();
  auto outside = [&](double x) { return !(x >= config_.visible_lo && x <= config_.visible_hi); };
  const double half = config_.mode == SessionMode::coupled ? 0.5 * config_.rod_length : 0.0;
  bool out = outside(r.tip - half) || outside(r.tip + half);
  for (double b : r.bases) out = out || outside(b);
  if (out) return TerminationCause::out_of_range;
  if (record_.rows.size() >= config_.max_ticks()) return TerminationCause::completed;
  return std::nullopt;
}

StateFrame SessionEngine::frame() const {
  const TickRow& r = row();
  StateFrame f;
  f.tick = r.tick;
  f.thick = tip_columns(r.tip, config_);
  for (double b : r.bases) f.thin.push_back(model_to_px(b, config_));
  return f;
}

std::optional<TerminationCause> SessionEngine::advance(const std::vector<std::optional<int>>& px) {
  if (finished()) throw std::logic_error("session already finished");
  if (px.size() != base_hold_.size()) throw ValidationError("one input per subject expected");
  for (std::size_t i = 0; i < px.size(); ++i) {
    if (!px[i]) continue;
    base_hold_[i] = px_to_model(*px[i], config_);
    last_px_[i] = *px[i];
  }
  bool diverged = false;
  try {
    for (std::size_t k = 0; k < config_.substeps(); ++k) {
      if (auto* s = std::get_if<SingleState>(&state_))
        drive_base(*s, config_.params, base_hold_[0]);
      else
        drive_base(std::get<CoupledState>(state_), config_.params, base_hold_[0], base_hold_[1]);
    }
  } catch (const DivergenceError&) {
    diverged = true;  // far outside any visible range
  }
  ++tick_;
  push_row();
  record_.cause = diverged ? TerminationCause::out_of_range : check();
  return record_.cause;
}

void SessionEngine::terminate(TerminationCause cause) {
  if (!finished()) record_.cause = cause;
}

TrialRecord run_session(const SessionConfig& config, std::vector<std::string> subjects,
                        std::string session_code, const SessionHooks& hooks) {
  SessionEngine engine(config, std::move(subjects), std::move(session_code));
  auto interrupted = [&] {
    if (!hooks.interrupt) return false;
    if (auto cause = hooks.interrupt()) {
      engine.terminate(*cause);
      return true;
    }
    return false;
  };

  for (int n = config.countdown; n > 0 && !interrupted(); --n)
    if (hooks.on_countdown) hooks.on_countdown(n);

  if (hooks.on_row) hooks.on_row(engine.row());
  if (hooks.on_state) hooks.on_state(engine.frame());
  const std::vector<std::optional<int>> hold(config.subjects());
  while (!engine.finished()) {
    if (interrupted()) break;
    auto px = hooks.inputs ? hooks.inputs(engine.tick() + 1) : hold;
    if (interrupted()) break;
    engine.advance(px);
    if (hooks.on_row) hooks.on_row(engine.row());
    if (hooks.on_state) hooks.on_state(engine.frame());
  }
  if (hooks.on_end) hooks.on_end(*engine.record().cause);
  return engine.take_record();
}

}  // namespace cbal
