#include "hrc/ws_server.hpp"

#include <atomic>
#include <chrono>
#include <deque>
#include <iostream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace hrc {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using Clock = std::chrono::steady_clock;

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::string id, const ServerOptions& opts)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), session_(std::move(id), make_options(opts)) {}

  void open() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->epoch_ = Clock::now();
      self->arm_timer();
      self->read();
    });
  }

 private:
  static SessionOptions make_options(const ServerOptions& o) {
    SessionOptions s;
    s.setup = o.setup;
    s.out_dir = o.out_dir;
    s.inactivity_timeout = o.inactivity_timeout;
    return s;
  }

  Seconds session_now() const {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - epoch_).count();
    return from_ms(ms);
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        self->timer_.cancel();
        return;
      }
      const auto text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (!self->guarded([&] { self->send(self->session_.handle(text, self->session_now())); })) return;
      self->arm_timer();
      self->read();
    });
  }

  // A failure inside one session closes that connection only.
  template <class Fn>
  bool guarded(Fn&& fn) {
    try {
      fn();
      return true;
    } catch (const std::exception& ex) {
      std::cerr << "hrcsim serve: " << session_.id() << ": " << ex.what() << "\n";
      closed_ = true;
      timer_.cancel();
      beast::error_code ec;
      beast::get_lowest_layer(ws_).socket().close(ec);
      return false;
    }
  }

  void arm_timer() {
    if (closed_) return;
    const auto wake = session_.next_wakeup();
    if (!wake) {
      timer_.cancel();
      return;
    }
    timer_.expires_at(epoch_ + std::chrono::milliseconds(to_ms(*wake)));
    timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      // The timer can fire a hair early relative to the ms clock.
      const Seconds now = std::max(self->session_now(), self->session_.next_wakeup().value_or(0.0));
      if (!self->guarded([&] { self->send(self->session_.tick(now)); })) return;
      self->arm_timer();
    });
  }

  void send(std::vector<std::string> frames) {
    if (closed_) return;
    const bool idle = outbox_.empty();
    for (auto& f : frames) outbox_.push_back(std::move(f));
    if (idle) write_next();
  }

  void write_next() {
    if (outbox_.empty() || closed_) return;
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->closed_ = true;
        return;
      }
      self->outbox_.pop_front();
      self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  asio::steady_timer timer_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  LiveSession session_;
  Clock::time_point epoch_ = Clock::now();
  bool closed_ = false;
};

}  // namespace

struct WsServer::Impl {
  ServerOptions opts;
  asio::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  asio::signal_set signals{ioc};
  std::atomic<std::uint64_t> next_id{1};

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      const auto wall = std::chrono::system_clock::now().time_since_epoch();
      const auto stamp = std::chrono::duration_cast<std::chrono::seconds>(wall).count();
      std::string id = "session-" + std::to_string(stamp) + "-" + std::to_string(next_id++);
      try {
        std::make_shared<Connection>(std::move(socket), std::move(id), opts)->open();
      } catch (const std::exception& ex) {
        std::cerr << "hrcsim serve: " << ex.what() << "\n";
      }
      accept();
    });
  }
};

WsServer::WsServer(ServerOptions opts) : impl_(std::make_unique<Impl>()) {
  impl_->opts = std::move(opts);
  validate_config(impl_->opts.setup.task).require();
  validate_policies(impl_->opts.setup.policies, impl_->opts.setup.task).require();
  const tcp::endpoint endpoint(asio::ip::make_address(impl_->opts.address), impl_->opts.port);
  auto& a = impl_->acceptor;
  a.open(endpoint.protocol());
  a.set_option(asio::socket_base::reuse_address(true));
  a.bind(endpoint);
  a.listen(asio::socket_base::max_listen_connections);
  impl_->accept();
  if (impl_->opts.stop_on_signal) {
    impl_->signals.add(SIGINT);
    impl_->signals.add(SIGTERM);
    impl_->signals.async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }
}

WsServer::~WsServer() = default;

std::uint16_t WsServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void WsServer::run() {
  impl_->ioc.restart();
  impl_->ioc.run();
}

void WsServer::stop() {
  asio::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->ioc.stop();
  });
}

}  // namespace hrc
