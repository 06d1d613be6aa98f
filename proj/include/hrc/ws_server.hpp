#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>

#include "hrc/live_session.hpp"

namespace hrc {

struct ServerOptions {
  std::string address = "0.0.0.0";
  std::uint16_t port = 8765;  // 0 picks a free port
  ExperimentSetup setup;
  std::optional<std::filesystem::path> out_dir;
  Seconds inactivity_timeout = 120.0;
  bool stop_on_signal = false;  // SIGINT/SIGTERM end run()
};

// Websocket front end: one LiveSession per connection, one JSON message per
// text frame. Session time starts when the connection is accepted.
class WsServer {
 public:
  explicit WsServer(ServerOptions opts);
  ~WsServer();
  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  std::uint16_t port() const;
  // Blocks until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hrc
