#include "millforge/bridge.hpp"
#include "millforge/policy.hpp"

#include "doctest.h"

#include <sys/socket.h>
#include <unistd.h>

using namespace millforge;
using nlohmann::json;

namespace {

EnvConfig small_env() {
  EnvConfig c;
  c.path_length_mm = 20.0;
  return c;
}

json action_json(const VecX& a) {
  json j = json::array();
  for (int i = 0; i < a.size(); ++i) j.push_back(a[i]);
  return j;
}

}  // namespace

TEST_CASE("frames carry a big-endian length prefix") {
  int fds[2];
  REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  const json msg = {{"kind", "spec"}, {"x", 1.5}};
  write_frame(fds[0], msg);
  unsigned char hdr[4];
  REQUIRE(read(fds[1], hdr, 4) == 4);
  const std::string body = msg.dump();
  CHECK(((hdr[0] << 24) | (hdr[1] << 16) | (hdr[2] << 8) | hdr[3]) == static_cast<int>(body.size()));
  std::string got(body.size(), '\0');
  REQUIRE(read(fds[1], got.data(), got.size()) == static_cast<ssize_t>(got.size()));
  CHECK(json::parse(got) == msg);

  write_frame(fds[0], msg);
  json back;
  CHECK(read_frame(fds[1], back));
  CHECK(back == msg);
  close(fds[0]);
  CHECK_FALSE(read_frame(fds[1], back));
  close(fds[1]);
}

TEST_CASE("oversized frames are refused") {
  int fds[2];
  REQUIRE(socketpair(AF_UNIX, SOCK_STREAM, 0, fds) == 0);
  const unsigned char hdr[4] = {0x7f, 0xff, 0xff, 0xff};
  REQUIRE(write(fds[0], hdr, 4) == 4);
  json j;
  CHECK_THROWS_AS(read_frame(fds[1], j), Error);
  close(fds[0]);
  close(fds[1]);
}

TEST_CASE("session replies follow the message schema") {
  BridgeSession s(small_env());
  const json spec = s.handle({{"kind", "spec"}});
  CHECK(spec["kind"] == "spec");
  CHECK(spec["protocol_version"] == kProtocolVersion);
  CHECK(spec["observation_dim"] == 17);
  CHECK(spec["action_dim"] == 5);
  CHECK(spec["observation_names"].size() == 17);
  CHECK(spec["action_low"].size() == 5);

  CHECK(s.handle({{"kind", "step"}, {"action", {800, 800, 800, 0, 0}}})["error"] == "EpisodeFinished");
  const json r = s.handle({{"kind", "reset"}, {"seed", 3}});
  CHECK(r["kind"] == "reset");
  CHECK(r["observation"].size() == 17);

  const json st = s.handle({{"kind", "step"}, {"action", {5000, 800, 800, 0, 0}}});
  CHECK(st["kind"] == "step");
  CHECK(st["info"]["action_clipped"] == true);
  for (const char* k : {"total", "mrv", "time", "deviation", "force"}) CHECK(st["reward"].contains(k));
  CHECK(st["done"] == false);

  CHECK(s.handle({{"kind", "step"}, {"action", {1, 2}}})["error"] == "DimensionMismatch");
  CHECK(s.handle({{"kind", "step"}, {"action", "x"}})["error"] == "BadRequest");
  CHECK(s.handle({{"kind", "dance"}})["error"] == "BadRequest");
  CHECK(s.handle(json::array())["error"] == "BadRequest");
  CHECK(s.handle({{"kind", "reset"}, {"seed", -1}})["error"] == "BadRequest");

  CHECK(s.handle({{"kind", "close"}})["kind"] == "close");
  CHECK(s.closed());
  CHECK(s.handle({{"kind", "reset"}, {"seed", 1}})["error"] == "EpisodeFinished");
}

TEST_CASE("TCP episode is bit-identical to a direct rollout") {
  const EnvConfig cfg = small_env();
  BridgeServer server(cfg, "127.0.0.1", 0);
  server.start();
  REQUIRE(server.port() > 0);

  MillingEnv env(cfg);
  auto pol = baseline_policy(cfg);
  VecX obs = env.reset(11);

  BridgeClient client("127.0.0.1", server.port());
  json reply = client.request({{"kind", "reset"}, {"seed", 11}});
  int steps = 0;
  bool done = false;
  while (!done) {
    REQUIRE(reply["observation"].size() == static_cast<std::size_t>(obs.size()));
    for (int i = 0; i < obs.size(); ++i) CHECK(reply["observation"][i].get<double>() == obs[i]);
    const VecX a = pol->act(obs);
    const EnvStep s = env.step(a);
    reply = client.request({{"kind", "step"}, {"action", action_json(a)}});
    REQUIRE(reply["kind"] == "step");
    CHECK(reply["reward"]["total"].get<double>() == s.reward.total);
    CHECK(reply["done"].get<bool>() == s.done);
    obs = s.observation;
    done = s.done;
    ++steps;
  }
  CHECK(steps == env.control_steps());
  CHECK(client.request({{"kind", "step"}, {"action", {800, 800, 800, 0, 0}}})["error"] == "EpisodeFinished");

  // A second connection gets its own environment.
  BridgeClient other("127.0.0.1", server.port());
  CHECK(other.request({{"kind", "reset"}, {"seed", 11}})["observation"] ==
        client.request({{"kind", "reset"}, {"seed", 11}})["observation"]);
  CHECK(client.request({{"kind", "close"}})["kind"] == "close");
  server.stop();
}
