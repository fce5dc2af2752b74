#include "cbal/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <future>
#include <mutex>
#include <system_error>
#include <thread>

#include "cbal/session.hpp"
#include "cbal/wire.hpp"

namespace cbal {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

std::filesystem::path trial_path_for(const std::filesystem::path& dir, const std::string& session_code,
                                     SessionMode mode) {
  const std::string stem = (session_code.empty() ? std::string("session") : session_code) + "-" +
                           std::string(to_string(mode));
  auto path = dir / (stem + ".trial.jsonl");
  for (int k = 1; std::filesystem::exists(path); ++k)
    path = dir / (stem + "-" + std::to_string(k) + ".trial.jsonl");
  return path;
}

namespace {

// Bounded FIFO between the tick loop and the trial writer.
template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    std::unique_lock lock(m_);
    not_full_.wait(lock, [&] { return q_.size() < capacity_; });
    q_.push_back(std::move(v));
    not_empty_.notify_one();
  }
  std::optional<T> pop() {
    std::unique_lock lock(m_);
    not_empty_.wait(lock, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }
  void close() {
    std::lock_guard lock(m_);
    closed_ = true;
    not_empty_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> q_;
  bool closed_ = false;
  std::mutex m_;
  std::condition_variable not_full_, not_empty_;
};

}  // namespace

namespace net_detail {
class Connection;
}
using net_detail::Connection;

struct TrackingServer::Impl : std::enable_shared_from_this<TrackingServer::Impl> {
  explicit Impl(ServeOptions o) : opt(std::move(o)), acceptor(ioc), poll(ioc) {}

  void accept();
  void on_message(const std::shared_ptr<Connection>& c, const std::string& text);
  void on_disconnect(const std::shared_ptr<Connection>& c);
  void broadcast(std::string text, bool close_after = false);
  void arm_poll();

  ServeOptions opt;
  net::io_context ioc;
  tcp::acceptor acceptor;
  net::steady_timer poll;

  // io thread only
  std::vector<std::weak_ptr<Connection>> everyone;
  int open = 0;
  std::vector<std::shared_ptr<Connection>> slots;
  std::vector<std::string> subject_ids;
  bool started = false;

  // shared with the tick loop
  std::mutex m;
  std::condition_variable cv;
  bool all_joined = false;
  bool stop_waiting = false;
  bool lost = false;
  bool abort_requested = false;
  std::vector<std::optional<int>> mailbox;
  std::vector<std::optional<std::uint64_t>> acked;
  std::atomic<bool> abort_signal{false};
};

namespace net_detail {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::weak_ptr<TrackingServer::Impl> server)
      : ws_(std::move(socket)), server_(std::move(server)) {}

  int subject = 0;  // 1-based once joined

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      if (auto server = self->server_.lock()) ++server->open;
      self->read();
    });
  }

  void send(std::string text) {
    if (closed_ || closing_) return;
    outbox_.push_back(std::move(text));
    if (outbox_.size() == 1) write();
  }

  void close_after_flush() {
    if (closing_) return;
    closing_ = true;
    if (outbox_.empty()) close();
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      auto server = self->server_.lock();
      if (ec) {
        self->closed_ = true;
        if (server) server->on_disconnect(self);
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (server) server->on_message(self, text);
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->closed_ = true;
                        self->outbox_.clear();
                        return;
                      }
                      self->outbox_.pop_front();
                      if (!self->outbox_.empty())
                        self->write();
                      else if (self->closing_)
                        self->close();
                    });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<tcp::socket> ws_;
  std::weak_ptr<TrackingServer::Impl> server_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  bool closing_ = false;
  bool closed_ = false;
};

}  // namespace net_detail

void TrackingServer::Impl::accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    auto c = std::make_shared<Connection>(std::move(socket), self);
    self->everyone.push_back(c);
    c->start();
    self->accept();
  });
}

void TrackingServer::Impl::arm_poll() {
  poll.expires_after(std::chrono::milliseconds(50));
  poll.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    if (self->abort_signal.load()) {
      std::lock_guard lock(self->m);
      self->stop_waiting = true;
      self->cv.notify_all();
      if (!self->started) return;
    }
    self->arm_poll();
  });
}

void TrackingServer::Impl::on_message(const std::shared_ptr<Connection>& c, const std::string& text) {
  wire::Message msg;
  try {
    msg = wire::decode(text);
  } catch (const wire::ProtocolError& e) {
    c->send(wire::encode(wire::Error{e.what()}));
    return;
  }
  if (const auto* h = std::get_if<wire::Hello>(&msg)) {
    if (c->subject != 0) {
      c->send(wire::encode(wire::Error{"already joined"}));
      return;
    }
    if (!opt.session_code.empty() && h->session != opt.session_code) {
      c->send(wire::encode(wire::Error{"unknown session code"}));
      c->close_after_flush();
      return;
    }
    auto free = std::find(slots.begin(), slots.end(), nullptr);
    if (started || free == slots.end()) {
      c->send(wire::encode(wire::Error{"session is full"}));
      c->close_after_flush();
      return;
    }
    const auto index = static_cast<std::size_t>(free - slots.begin());
    *free = c;
    c->subject = static_cast<int>(index) + 1;
    subject_ids[index] = h->subject.empty() ? "subject" + std::to_string(index + 1) : h->subject;
    c->send(wire::encode(wire::Welcome{c->subject, opt.config.mode, opt.config.screen_width,
                                       opt.config.tick_rate}));
    if (std::find(slots.begin(), slots.end(), nullptr) == slots.end()) {
      started = true;
      std::lock_guard lock(m);
      all_joined = true;
      cv.notify_all();
    }
    return;
  }
  if (c->subject == 0) {
    c->send(wire::encode(wire::Error{"say hello first"}));
    return;
  }
  const auto i = static_cast<std::size_t>(c->subject - 1);
  if (const auto* mouse = std::get_if<wire::Mouse>(&msg)) {
    if (mouse->px < 1 || mouse->px > opt.config.screen_width) {
      c->send(wire::encode(wire::Error{"px outside the screen"}));
      return;
    }
    std::lock_guard lock(m);
    mailbox[i] = mouse->px;
    if (!acked[i] || *acked[i] < mouse->tick) acked[i] = mouse->tick;
    cv.notify_all();
  } else if (std::holds_alternative<wire::Abort>(msg)) {
    std::lock_guard lock(m);
    abort_requested = true;
    cv.notify_all();
  } else {
    c->send(wire::encode(wire::Error{"unexpected message type"}));
  }
}

void TrackingServer::Impl::on_disconnect(const std::shared_ptr<Connection>& c) {
  --open;
  if (c->subject == 0) return;
  const auto i = static_cast<std::size_t>(c->subject - 1);
  if (slots[i] != c) return;
  if (!started) {
    slots[i] = nullptr;  // someone else may take the seat
    return;
  }
  std::lock_guard lock(m);
  lost = true;
  cv.notify_all();
}

void TrackingServer::Impl::broadcast(std::string text, bool close_after) {
  net::post(ioc, [self = shared_from_this(), text = std::move(text), close_after] {
    for (auto& c : self->slots)
      if (c) {
        c->send(text);
        if (close_after) c->close_after_flush();
      }
  });
}

TrackingServer::TrackingServer(ServeOptions options)
    : impl_(std::make_shared<Impl>(std::move(options))) {
  impl_->opt.config.validate();
  const auto n = impl_->opt.config.subjects();
  impl_->slots.assign(n, nullptr);
  impl_->subject_ids.assign(n, "");
  impl_->mailbox.assign(n, std::nullopt);
  impl_->acked.assign(n, std::nullopt);

  boost::system::error_code ec;
  const auto address = net::ip::make_address(impl_->opt.address, ec);
  if (ec) throw ValidationError("bad listen address '" + impl_->opt.address + "'");
  const tcp::endpoint ep(address, impl_->opt.port);
  auto& a = impl_->acceptor;
  auto check = [&](const char* what) {
    if (ec)
      throw std::system_error(ec.value(), std::system_category(),
                              std::string(what) + " " + impl_->opt.address + ":" + std::to_string(impl_->opt.port));
  };
  a.open(ep.protocol(), ec);
  check("cannot open");
  a.set_option(net::socket_base::reuse_address(true), ec);
  check("cannot configure");
  a.bind(ep, ec);
  check("cannot bind");
  a.listen(net::socket_base::max_listen_connections, ec);
  check("cannot listen on");
}

TrackingServer::~TrackingServer() = default;

unsigned short TrackingServer::port() const { return impl_->acceptor.local_endpoint().port(); }

std::string TrackingServer::url() const {
  return "ws://" + impl_->opt.address + ":" + std::to_string(port()) + "/";
}

void TrackingServer::request_abort() noexcept { impl_->abort_signal.store(true); }

ServeResult TrackingServer::run() {
  Impl& s = *impl_;
  auto work = net::make_work_guard(s.ioc);
  s.accept();
  s.arm_poll();
  std::thread io([&] { s.ioc.run(); });

  // Close every socket, then stop once they are gone or after a grace period.
  auto shutdown = [&] {
    const auto give_up = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    auto timer = std::make_shared<net::steady_timer>(s.ioc);
    auto check = std::make_shared<std::function<void()>>();
    *check = [&s, timer, check, give_up] {
      if (s.open <= 0 || std::chrono::steady_clock::now() >= give_up) {
        s.ioc.stop();
        *check = nullptr;  // break the self-reference
        return;
      }
      timer->expires_after(std::chrono::milliseconds(10));
      timer->async_wait([check](beast::error_code) {
        if (*check) (*check)();
      });
    };
    net::post(s.ioc, [&s, check] {
      beast::error_code ec;
      s.acceptor.close(ec);
      s.poll.cancel();
      for (auto& w : s.everyone)
        if (auto c = w.lock()) c->close_after_flush();
      (*check)();
    });
    work.reset();
    io.join();
  };

  {
    std::unique_lock lock(s.m);
    s.cv.wait(lock, [&] { return s.all_joined || s.stop_waiting; });
    if (!s.all_joined) {
      lock.unlock();
      shutdown();
      return {};
    }
  }

  // subject ids are final once everyone joined
  std::vector<std::string> subjects;
  {
    std::promise<std::vector<std::string>> ids;
    auto fut = ids.get_future();
    net::post(s.ioc, [&] { ids.set_value(s.subject_ids); });
    subjects = fut.get();
  }

  ServeResult result;
  TrialRecord header;
  header.config = s.opt.config;
  header.subjects = subjects;
  header.session_code = s.opt.session_code;
  std::filesystem::create_directories(s.opt.output_dir);
  result.trial_path = trial_path_for(s.opt.output_dir, s.opt.session_code, s.opt.config.mode);
  TrialWriter writer(*result.trial_path, header);

  BoundedQueue<TickRow> rows(s.opt.writer_queue);
  std::thread writer_thread([&] {
    while (auto r = rows.pop()) writer.append(*r);
  });

  const auto& cfg = s.opt.config;
  const auto tick_period = std::chrono::duration<double>(1.0 / cfg.tick_rate);
  std::chrono::steady_clock::time_point t0;

  SessionHooks hooks;
  hooks.on_countdown = [&](int n) {
    s.broadcast(wire::encode(wire::Countdown{n}));
    if (!s.opt.lockstep) {
      // sleep in short slices so an abort is noticed promptly
      const auto until = std::chrono::steady_clock::now() + std::chrono::seconds(1);
      while (std::chrono::steady_clock::now() < until && !s.abort_signal.load())
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  };
  hooks.interrupt = [&]() -> std::optional<TerminationCause> {
    if (s.abort_signal.load()) return TerminationCause::aborted_by_subject;
    std::lock_guard lock(s.m);
    if (s.abort_requested) return TerminationCause::aborted_by_subject;
    if (s.lost) return TerminationCause::client_lost;
    return std::nullopt;
  };
  hooks.inputs = [&](std::uint64_t tick) {
    std::unique_lock lock(s.m);
    if (s.opt.lockstep) {
      const auto all_acked = [&] {
        for (const auto& a : s.acked)
          if (!a || *a + 1 < tick) return false;
        return true;
      };
      auto deadline = std::chrono::steady_clock::now() +
                      std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(s.opt.ack_timeout));
      while (!all_acked() && !s.lost && !s.abort_requested && !s.abort_signal.load()) {
        if (s.cv.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() +
                                                         std::chrono::milliseconds(50))) ==
                std::cv_status::timeout &&
            std::chrono::steady_clock::now() >= deadline) {
          s.lost = true;
          break;
        }
      }
    } else {
      lock.unlock();
      std::this_thread::sleep_until(
          t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(tick_period * static_cast<double>(tick)));
      lock.lock();
    }
    std::vector<std::optional<int>> px(s.mailbox.size());
    std::swap(px, s.mailbox);
    return px;
  };
  hooks.on_row = [&](const TickRow& r) {
    if (r.tick == 0) t0 = std::chrono::steady_clock::now();
    rows.push(r);
  };
  hooks.on_state = [&](const StateFrame& f) {
    s.broadcast(wire::encode(wire::State{f.tick, f.thick, f.thin}));
  };
  hooks.on_end = [&](TerminationCause cause) {
    s.broadcast(wire::encode(wire::End{cause}), true);
  };

  TrialRecord record;
  try {
    record = run_session(cfg, subjects, s.opt.session_code, hooks);
  } catch (...) {
    rows.close();
    writer_thread.join();
    writer.finish(TerminationCause::aborted_by_subject);
    shutdown();
    throw;
  }
  rows.close();
  writer_thread.join();
  writer.finish(*record.cause);
  shutdown();
  result.record = std::move(record);
  return result;
}

}  // namespace cbal
