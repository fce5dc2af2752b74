#pragma once

// WebSocket messages between the session server and its display clients.
// Each message is one JSON object in one text frame, tagged by "type".

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cbal/experiment.hpp"

namespace cbal::wire {

// client -> server
struct Hello {
  std::string subject;
  std::string session;
};
struct Mouse {
  std::uint64_t tick = 0;  // last state tick the client has seen
  int px = 0;
};
struct Abort {};

// server -> client
struct Welcome {
  int subject_index = 0;  // 1-based
  SessionMode mode = SessionMode::single;
  int screen_width = 0;
  double tick_rate = 0;
};
struct Countdown {
  int n = 0;
};
struct State {
  std::uint64_t tick = 0;
  std::vector<int> thick;
  std::vector<int> thin;
};
struct End {
  TerminationCause cause = TerminationCause::completed;
};
struct Error {
  std::string message;
};

using Message = std::variant<Hello, Mouse, Abort, Welcome, Countdown, State, End, Error>;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode(const Message& message);
/// Throws ProtocolError on malformed JSON, unknown type or missing fields.
Message decode(std::string_view text);

std::string_view type_name(const Message& message);

}  // namespace cbal::wire
