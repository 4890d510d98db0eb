#include "phrc/bridge/server.hpp"

#include "phrc/core/error.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <list>
#include <mutex>
#include <optional>
#include <thread>

namespace phrc::bridge {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

// Outgoing frames beyond this are dropped while a slow client catches up.
constexpr std::size_t kMaxOutbox = 64;

}  // namespace

struct BridgeServer::Impl {
  struct Conn : std::enable_shared_from_this<Conn> {
    explicit Conn(Impl& s) : server(s) {}

    Impl& server;
    net::io_context ioc;
    std::optional<websocket::stream<tcp::socket>> ws;
    net::steady_timer timer{ioc};
    beast::flat_buffer buf;
    std::deque<std::string> outbox;
    bool writing = false;
    bool closing = false;
    bool counted = false;
    std::unique_ptr<BridgeSession> session;
    Clock::time_point t0, next;
    std::thread thread;
    std::atomic<bool> done{false};

    double now() const { return std::chrono::duration<double>(Clock::now() - t0).count(); }

    void start(tcp::socket sock) {
      ws.emplace(std::move(sock));
      // Beast's own idle timer outlives a closed socket, so the liveness
      // window doubles as the handshake deadline instead.
      timer.expires_after(std::chrono::duration_cast<Clock::duration>(
          std::chrono::duration<double>(server.opt.bridge.liveness_s)));
      timer.async_wait([self = shared_from_this()](beast::error_code ec) {
        if (!ec && !self->session) self->finish();
      });
      ws->async_accept([self = shared_from_this()](beast::error_code ec) { self->on_handshake(ec); });
    }

    void on_handshake(beast::error_code ec) {
      if (ec || closing) return finish();
      try {
        t0 = Clock::now();
        session = std::make_unique<BridgeSession>(server.predictors, server.opt.controller, server.opt.scenario,
                                                  server.opt.bridge, 0.0);
      } catch (const std::exception& e) {
        send(error_frame(e.what()));
        return close();
      }
      timer.cancel();
      counted = true;
      ++server.active;
      ws->text(true);
      next = Clock::now();
      read();
      schedule();
    }

    void read() {
      ws->async_read(buf, [self = shared_from_this()](beast::error_code ec, std::size_t n) {
        if (ec) return self->finish();
        const std::string text = beast::buffers_to_string(self->buf.data());
        self->buf.consume(n);
        if (auto reply = self->session->on_message(text, self->now())) self->send(*reply);
        self->read();
      });
    }

    void schedule() {
      const auto period = std::chrono::duration_cast<Clock::duration>(
          std::chrono::duration<double>(1.0 / server.opt.controller.control_hz));
      next += period;
      // After a long stall, drop the missed ticks rather than bursting.
      if (next < Clock::now() - 10 * period) next = Clock::now();
      timer.expires_at(next);
      timer.async_wait([self = shared_from_this()](beast::error_code ec) {
        if (ec || self->closing) return;
        self->on_tick();
      });
    }

    void on_tick() {
      const double t = now();
      if (session->expired(t)) {
        send(error_frame("liveness timeout"));
        return close();
      }
      if (auto frame = session->tick(t)) send(*frame);
      schedule();
    }

    void send(std::string msg) {
      if (closing || outbox.size() >= kMaxOutbox) return;
      outbox.push_back(std::move(msg));
      if (!writing) write_next();
    }

    void write_next() {
      writing = true;
      ws->async_write(net::buffer(outbox.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->writing = false;
        self->outbox.pop_front();
        if (ec) return self->finish();
        if (!self->outbox.empty()) self->write_next();
      });
    }

    void close() {
      if (closing) return;
      closing = true;
      ws->async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) { self->finish(); });
      // A silent client never answers the close frame.
      timer.expires_after(std::chrono::seconds(1));
      timer.async_wait([self = shared_from_this()](beast::error_code ec) {
        if (!ec) self->finish();
      });
    }

    void finish() {
      if (done.exchange(true)) return;
      closing = true;
      timer.cancel();
      if (ws) {
        beast::error_code ec;
        ws->next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws->next_layer().close(ec);
      }
      if (counted) --server.active;
    }
  };

  Impl(ServeOptions o, sim::Predictors p) : opt(std::move(o)), predictors(std::move(p)), acceptor(ioc) {
    opt.controller.validate();
    opt.scenario.validate();
    opt.bridge.validate();
    beast::error_code ec;
    const auto addr = net::ip::make_address(opt.address, ec);
    if (ec) throw ConfigError("invalid bind address '" + opt.address + "'");
    const tcp::endpoint ep(addr, opt.port);
    acceptor.open(ep.protocol(), ec);
    if (!ec) acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor.bind(ep, ec);
    if (!ec) acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw IoError("cannot listen on " + opt.address + ":" + std::to_string(opt.port) + ": " + ec.message());
  }

  void accept() {
    auto c = std::make_shared<Conn>(*this);
    acceptor.async_accept(c->ioc, [this, c](beast::error_code ec, tcp::socket sock) {
      if (ec || stopping) return;
      reap();
      c->start(std::move(sock));
      c->thread = std::thread([p = c.get()] { p->ioc.run(); });
      {
        std::lock_guard lk(mu);
        conns.push_back(c);
      }
      accept();
    });
  }

  void reap() {
    std::lock_guard lk(mu);
    for (auto it = conns.begin(); it != conns.end();) {
      if ((*it)->done && (*it)->ioc.stopped()) {
        if ((*it)->thread.joinable()) (*it)->thread.join();
        it = conns.erase(it);
      } else {
        ++it;
      }
    }
  }

  void join_all() {
    std::lock_guard lk(mu);
    for (auto& c : conns)
      if (c->thread.joinable()) c->thread.join();
    conns.clear();
  }

  ServeOptions opt;
  sim::Predictors predictors;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::mutex mu;
  std::list<std::shared_ptr<Conn>> conns;
  std::atomic<std::size_t> active{0};
  std::atomic<bool> stopping{false};
  std::atomic<bool> ran{false};
};

BridgeServer::BridgeServer(ServeOptions opt, sim::Predictors predictors)
    : impl_(std::make_unique<Impl>(std::move(opt), std::move(predictors))) {}

BridgeServer::~BridgeServer() {
  stop();
  if (!impl_->ran) return;
  impl_->join_all();
}

std::uint16_t BridgeServer::port() const noexcept {
  beast::error_code ec;
  return impl_->acceptor.local_endpoint(ec).port();
}

std::size_t BridgeServer::active_sessions() const noexcept { return impl_->active; }

void BridgeServer::run() {
  impl_->ran = true;
  impl_->accept();
  impl_->ioc.run();
  impl_->join_all();
}

void BridgeServer::stop() {
  Impl* s = impl_.get();
  net::post(s->ioc, [s] {
    if (s->stopping.exchange(true)) return;
    beast::error_code ec;
    s->acceptor.close(ec);
    std::lock_guard lk(s->mu);
    for (auto& c : s->conns) net::post(c->ioc, [c] { c->finish(); });
  });
}

}  // namespace phrc::bridge
