#pragma once

#include "phrc/bridge/session.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

namespace phrc::bridge {

struct ServeOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;  // 0 picks a free port
  control::ControllerConfig controller;
  sim::Scenario scenario = sim::Scenario::standard(0);
  BridgeConfig bridge;
};

/// Websocket front end. Each connection gets its own BridgeSession running
/// on its own thread at the control rate; sessions share only the
/// predictors, which must be safe to call concurrently.
class BridgeServer {
 public:
  BridgeServer(ServeOptions opt, sim::Predictors predictors);
  ~BridgeServer();
  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  /// Bound port (useful with port 0).
  std::uint16_t port() const noexcept;
  /// Accepts connections until stop(). Blocks.
  void run();
  /// Thread-safe. Closes the listener and every session.
  void stop();
  std::size_t active_sessions() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace phrc::bridge
