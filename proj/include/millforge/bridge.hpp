#pragma once

#include "millforge/env.hpp"

#include "json.hpp"

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace millforge {

// Frames are a 4-byte big-endian payload length followed by UTF-8 JSON.
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;
inline constexpr int kProtocolVersion = 1;
inline constexpr int kDefaultBridgePort = 7463;

/// Throws Error on a short read/write or an oversized frame.
void write_frame(int fd, const nlohmann::json& msg);
/// Returns false on a clean end of stream before the first header byte.
bool read_frame(int fd, nlohmann::json& msg);

/// Handles one request against one environment; used by the server and
/// directly by tests. Never throws: failures become {"kind": "error"}.
class BridgeSession {
 public:
  explicit BridgeSession(EnvConfig cfg);
  nlohmann::json handle(const nlohmann::json& request);
  bool closed() const { return closed_; }

 private:
  nlohmann::json spec() const;
  MillingEnv env_;
  bool closed_ = false;
};

/// TCP endpoint, one thread and one environment per connection.
class BridgeServer {
 public:
  BridgeServer(EnvConfig cfg, std::string host = "127.0.0.1", int port = kDefaultBridgePort);
  ~BridgeServer();
  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  /// Binds and starts accepting in the background; port 0 picks a free port.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  void accept_loop();
  void serve(int fd);

  EnvConfig cfg_;
  std::string host_;
  int port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

/// Synchronous client for tests and tooling.
class BridgeClient {
 public:
  BridgeClient(const std::string& host, int port);
  ~BridgeClient();
  BridgeClient(const BridgeClient&) = delete;
  BridgeClient& operator=(const BridgeClient&) = delete;

  nlohmann::json request(const nlohmann::json& msg);

 private:
  int fd_ = -1;
};

}  // namespace millforge
