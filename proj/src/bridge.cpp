#include "millforge/bridge.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace millforge {

using nlohmann::json;

namespace {

void write_all(int fd, const char* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("bridge write failed: ") + std::strerror(errno));
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns bytes read; fewer than n only at end of stream.
std::size_t read_all(int fd, char* p, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, p + got, n - got, 0);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("bridge read failed: ") + std::strerror(errno));
    }
    if (r == 0) break;
    got += static_cast<std::size_t>(r);
  }
  return got;
}

json vec_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json error_reply(const std::string& type, const std::string& message) {
  return {{"kind", "error"}, {"error", type}, {"message", message}};
}

std::string error_name(const Error& e) {
  if (dynamic_cast<const EpisodeFinished*>(&e)) return "EpisodeFinished";
  if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  if (dynamic_cast<const OutOfBounds*>(&e)) return "OutOfBounds";
  return "Error";
}

}  // namespace

void write_frame(int fd, const json& msg) {
  const std::string body = msg.dump();
  if (body.size() > kMaxFrameBytes) throw Error("bridge frame too large");
  const std::uint32_t n = static_cast<std::uint32_t>(body.size());
  const unsigned char hdr[4] = {static_cast<unsigned char>(n >> 24), static_cast<unsigned char>(n >> 16),
                                static_cast<unsigned char>(n >> 8), static_cast<unsigned char>(n)};
  write_all(fd, reinterpret_cast<const char*>(hdr), 4);
  write_all(fd, body.data(), body.size());
}

bool read_frame(int fd, json& msg) {
  unsigned char hdr[4];
  const std::size_t h = read_all(fd, reinterpret_cast<char*>(hdr), 4);
  if (h == 0) return false;
  if (h < 4) throw Error("bridge stream ended inside a frame header");
  const std::uint32_t n = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) |
                          (std::uint32_t{hdr[2]} << 8) | std::uint32_t{hdr[3]};
  if (n > kMaxFrameBytes) throw Error("bridge frame exceeds the size limit");
  std::string body(n, '\0');
  if (read_all(fd, body.data(), n) < n) throw Error("bridge stream ended inside a frame");
  msg = json::parse(body, nullptr, false);
  return true;
}

// ---------------------------------------------------------------------------

BridgeSession::BridgeSession(EnvConfig cfg) : env_(std::move(cfg)) {}

json BridgeSession::spec() const {
  return {{"kind", "spec"},
          {"protocol_version", kProtocolVersion},
          {"observation_dim", env_.observation_dim()},
          {"action_dim", env_.action_dim()},
          {"observation_names", env_.layout().names()},
          {"action_names", {"k_x", "k_y", "k_z", "t_rate", "n_rate_mm_per_s"}},
          {"action_low", vec_json(env_.action_low())},
          {"action_high", vec_json(env_.action_high())},
          {"control_dt_s", env_.config().control_dt}};
}

json BridgeSession::handle(const json& req) {
  if (req.is_discarded() || !req.is_object()) return error_reply("BadRequest", "frame is not a JSON object");
  if (!req.contains("kind") || !req["kind"].is_string())
    return error_reply("BadRequest", "request needs a string 'kind'");
  const std::string kind = req["kind"].get<std::string>();
  if (closed_) return error_reply("EpisodeFinished", "session is closed");
  try {
    if (kind == "spec") return spec();
    if (kind == "reset") {
      std::uint64_t seed = 0;
      if (req.contains("seed")) {
        if (!req["seed"].is_number_unsigned() && !(req["seed"].is_number_integer() && req["seed"].get<long long>() >= 0))
          return error_reply("BadRequest", "seed must be a non-negative integer");
        seed = req["seed"].get<std::uint64_t>();
      }
      const VecX obs = env_.reset(seed);
      return {{"kind", "reset"}, {"observation", vec_json(obs)}};
    }
    if (kind == "step") {
      if (!req.contains("action") || !req["action"].is_array())
        return error_reply("BadRequest", "step needs an 'action' array");
      const json& a = req["action"];
      VecX action(static_cast<Eigen::Index>(a.size()));
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) return error_reply("BadRequest", "action entries must be numbers");
        action[static_cast<Eigen::Index>(i)] = a[i].get<double>();
      }
      const EnvStep s = env_.step(action);
      return {{"kind", "step"},
              {"observation", vec_json(s.observation)},
              {"reward",
               {{"total", s.reward.total},
                {"mrv", s.reward.mrv_term},
                {"time", s.reward.time_term},
                {"deviation", s.reward.deviation_term},
                {"force", s.reward.force_term}}},
              {"done", s.done},
              {"info",
               {{"action_clipped", s.info.action_clipped},
                {"termination", to_string(s.info.termination)},
                {"safety", to_string(s.info.safety)},
                {"tank_depleted", s.info.tank_depleted},
                {"law", to_string(s.info.last_law)},
                {"mrv_volume_mm3", s.info.mrv_volume},
                {"removed_volume_mm3", s.info.removed_volume},
                {"control_step", s.info.control_step}}}};
    }
    if (kind == "close") {
      env_.close();
      closed_ = true;
      return {{"kind", "close"}};
    }
  } catch (const Error& e) {
    return error_reply(error_name(e), e.what());
  }
  return error_reply("BadRequest", "unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

BridgeServer::BridgeServer(EnvConfig cfg, std::string host, int port)
    : cfg_(std::move(cfg)), host_(std::move(host)), port_(port) {
  cfg_.validate();
}

BridgeServer::~BridgeServer() { stop(); }

void BridgeServer::start() {
  if (running_) return;
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port_));
  if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw InvalidArgument("bridge host must be an IPv4 address: " + host_);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 16) < 0) {
    const std::string msg = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error("bridge bind " + host_ + ":" + std::to_string(port_) + ": " + msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void BridgeServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 100);
    if (r <= 0 || !running_) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard<std::mutex> lock(mu_);
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void BridgeServer::serve(int fd) {
  BridgeSession session(cfg_);
  try {
    json req;
    while (read_frame(fd, req)) write_frame(fd, session.handle(req));
  } catch (const Error&) {
    // Peer vanished or sent a malformed frame; drop the connection.
  }
  ::shutdown(fd, SHUT_RDWR);
}

void BridgeServer::stop() {
  const bool was = running_.exchange(false);
  if (acceptor_.joinable() && acceptor_.get_id() != std::this_thread::get_id()) acceptor_.join();
  if (!was && listen_fd_ < 0) return;
  std::vector<std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& w : workers)
    if (w.joinable()) w.join();
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (int fd : client_fds_) ::close(fd);
    client_fds_.clear();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
}

// ---------------------------------------------------------------------------

BridgeClient::BridgeClient(const std::string& host, int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw InvalidArgument("bridge host must be an IPv4 address: " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string msg = std::strerror(errno);
    ::close(fd_);
    throw Error("bridge connect " + host + ":" + std::to_string(port) + ": " + msg);
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

BridgeClient::~BridgeClient() {
  if (fd_ >= 0) ::close(fd_);
}

json BridgeClient::request(const json& msg) {
  write_frame(fd_, msg);
  json reply;
  if (!read_frame(fd_, reply)) throw Error("bridge server closed the connection");
  return reply;
}

}  // namespace millforge
