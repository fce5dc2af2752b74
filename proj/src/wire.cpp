#include "cbal/wire.hpp"

#include <json.hpp>

namespace cbal::wire {

using ojson = nlohmann::ordered_json;

namespace {

template <class... F>
struct overloaded : F... {
  using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

}  // namespace

std::string_view type_name(const Message& m) {
  static constexpr std::string_view names[] = {"hello",     "mouse", "abort", "welcome",
                                               "countdown", "state", "end",   "error"};
  return names[m.index()];
}

std::string encode(const Message& message) {
  ojson j;
  j["type"] = type_name(message);
  std::visit(overloaded{
                 [&](const Hello& h) {
                   j["subject"] = h.subject;
                   j["session"] = h.session;
                 },
                 [&](const Mouse& m) {
                   j["tick"] = m.tick;
                   j["px"] = m.px;
                 },
                 [&](const Abort&) {},
                 [&](const Welcome& w) {
                   j["subject_index"] = w.subject_index;
                   j["mode"] = to_string(w.mode);
                   j["screen_width"] = w.screen_width;
                   j["tick_rate"] = w.tick_rate;
                 },
                 [&](const Countdown& c) { j["n"] = c.n; },
                 [&](const State& s) {
                   j["tick"] = s.tick;
                   j["thick"] = s.thick;
                   j["thin"] = s.thin;
                 },
                 [&](const End& e) { j["cause"] = to_string(e.cause); },
                 [&](const Error& e) { j["message"] = e.message; },
             },
             message);
  return j.dump();
}

Message decode(std::string_view text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("message is not a JSON object");
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "hello") return Hello{j.at("subject").get<std::string>(), j.at("session").get<std::string>()};
    if (type == "mouse") return Mouse{j.at("tick").get<std::uint64_t>(), j.at("px").get<int>()};
    if (type == "abort") return Abort{};
    if (type == "welcome")
      return Welcome{j.at("subject_index").get<int>(), parse_session_mode(j.at("mode").get<std::string>()),
                     j.at("screen_width").get<int>(), j.at("tick_rate").get<double>()};
    if (type == "countdown") return Countdown{j.at("n").get<int>()};
    if (type == "state")
      return State{j.at("tick").get<std::uint64_t>(), j.at("thick").get<std::vector<int>>(),
                   j.at("thin").get<std::vector<int>>()};
    if (type == "end") return End{parse_termination_cause(j.at("cause").get<std::string>())};
    if (type == "error") return Error{j.at("message").get<std::string>()};
    throw ProtocolError("unknown message type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("bad message fields: ") + e.what());
  } catch (const ValidationError& e) {
    throw ProtocolError(e.what());
  }
}

}  // namespace cbal::wire
