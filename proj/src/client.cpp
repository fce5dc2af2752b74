#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>

#include "cbal/server.hpp"
#include "cbal/wire.hpp"

namespace cbal {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

ClientResult run_scripted_client(const ClientOptions& opt) {
  if (opt.strategy != "track" && opt.strategy != "hold" && opt.strategy != "replay")
    throw ValidationError("unknown client strategy '" + opt.strategy + "'");
  std::vector<int> replay_px;
  if (opt.strategy == "replay") {
    const auto loaded = load(opt.replay_file);
    if (opt.replay_subject < 1 || opt.replay_subject > loaded.record.subjects.size())
      throw ValidationError("replay subject out of range");
    for (const auto& r : loaded.record.rows) replay_px.push_back(r.mouse_px[opt.replay_subject - 1]);
  }

  net::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  net::connect(ws.next_layer(), resolver.resolve(opt.host, std::to_string(opt.port)));
  ws.handshake(opt.host + ":" + std::to_string(opt.port), "/");
  ws.text(true);
  auto send = [&](const wire::Message& m) { ws.write(net::buffer(wire::encode(m))); };
  send(wire::Hello{opt.subject, opt.session_code});

  ClientResult result;
  std::optional<int> hold_px;
  beast::flat_buffer buffer;
  for (;;) {
    try {
      ws.read(buffer);
    } catch (const boost::system::system_error& e) {
      if (result.cause) break;  // server closed after end
      throw;
    }
    const auto msg = wire::decode(beast::buffers_to_string(buffer.data()));
    buffer.consume(buffer.size());

    if (const auto* w = std::get_if<wire::Welcome>(&msg)) {
      result.subject_index = w->subject_index;
    } else if (const auto* e = std::get_if<wire::Error>(&msg)) {
      throw ValidationError("server refused: " + e->message);
    } else if (const auto* st = std::get_if<wire::State>(&msg)) {
      if (result.states > 0 && st->tick <= result.last_tick) result.ticks_monotone = false;
      ++result.states;
      result.last_tick = st->tick;
      if (st->thick.size() == 2) {
        const int sep = st->thick[1] - st->thick[0];
        if (result.states == 1) result.min_tip_separation = result.max_tip_separation = sep;
        result.min_tip_separation = std::min(result.min_tip_separation, sep);
        result.max_tip_separation = std::max(result.max_tip_separation, sep);
      }
      if (opt.send_abort_at_tick && st->tick >= opt.abort_tick) {
        send(wire::Abort{});
        continue;
      }
      const auto me = static_cast<std::size_t>(std::max(result.subject_index, 1) - 1);
      int px;
      if (opt.strategy == "track") {
        px = st->thick[std::min(me, st->thick.size() - 1)];
      } else if (opt.strategy == "hold") {
        if (!hold_px) hold_px = st->thin.at(me);
        px = *hold_px;
      } else {
        // input sent after state k is applied while computing tick k + 1
        const auto k = std::min<std::size_t>(st->tick + 1, replay_px.size() - 1);
        px = replay_px[k];
      }
      send(wire::Mouse{st->tick, px});
    } else if (const auto* end = std::get_if<wire::End>(&msg)) {
      result.cause = end->cause;
    }
  }
  return result;
}

}  // namespace cbal
