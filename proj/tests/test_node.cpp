#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <thread>

#include "rsu/error.hpp"
#include "rsu/network.hpp"
#include "rsu/node.hpp"
#include "rsu/node_runtime.hpp"
#include "support.hpp"

using namespace rsu;
using namespace rsu::test;
using nlohmann::json;

namespace {

// Replies with fixed text and remembers every prompt; can be told to fail.
class ScriptedBackend final : public Backend {
 public:
  std::string narration;
  std::string reasoning;
  bool fail = false;
  std::vector<std::string> prompts;

  std::string name() const override { return "scripted"; }
  BackendResponse infer(const BackendRequest& request) override {
    prompts.push_back(request.prompt_text);
    if (fail) throw Error(ErrorCode::backend_unavailable, "scripted failure", request.request_id);
    return {request.request_id, narration, reasoning, 1.0};
  }
};

std::string alert_message(const std::string& id, std::int64_t ts, std::uint64_t seq = 1) {
  Envelope e{MessageType::alert, "rsu-2", seq, to_json(Alert{id, "rsu-2", "speeding", "vehicle speeding", ts}), ts};
  return serialize(e);
}

RsuNode make_node(const std::string& id = "rsu-1") { return RsuNode(id, default_taxonomy(), NodeConfig{}); }

}  // namespace

TEST_CASE("detect_hazard examples") {
  const auto& tax = *default_taxonomy();
  const std::vector<std::string> set{"speeding", "accident"};
  const std::vector<std::string> a{"vehicle speeding on lane 2"}, b{""}, c{"accident ahead, vehicle speeding"};
  CHECK(detect_hazard(a, set, tax) == std::vector<std::string>{"speeding"});
  CHECK(detect_hazard(b, set, tax).empty());
  CHECK(detect_hazard(c, set, tax) == std::vector<std::string>{"speeding", "accident"});
}

TEST_CASE("hazard set must name agent or motion keywords") {
  NodeConfig cfg;
  cfg.hazard_set = {"fog"};
  CHECK_THROWS_AS(RsuNode("x", default_taxonomy(), cfg), Error);
  cfg.hazard_set = {"flying saucer"};
  CHECK_THROWS_AS(RsuNode("x", default_taxonomy(), cfg), Error);
}

TEST_CASE("process_segment raises one alert per hazard label") {
  auto node = make_node();
  ScriptedBackend be;
  const auto& seg = fixture_segments().front();
  SUBCASE("speeding once") {
    be.narration = "1 vehicle speeding near the intersection";
    const auto alerts = node.process_segment(seg, be, 500);
    REQUIRE(alerts.size() == 1);
    CHECK(alerts[0].hazard_label == "speeding");
    CHECK(alerts[0].origin == "rsu-1");
    CHECK(alerts[0].timestamp == 500);
    CHECK(alerts[0].evidence == "1 vehicle speeding near the intersection");
  }
  SUBCASE("no hazard") {
    be.narration = "3 pedestrians, rainy weather";
    CHECK(node.process_segment(seg, be, 0).empty());
  }
  SUBCASE("speeding twice") {
    be.narration = "vehicle speeding, another vehicle speeding";
    be.reasoning = "sudden braking because speeding.";
    const auto alerts = node.process_segment(seg, be, 0);
    REQUIRE(alerts.size() == 2);
    CHECK(alerts[0].hazard_label == "speeding");
    CHECK(alerts[1].hazard_label == "sudden braking");
    CHECK(alerts[0].alert_id != alerts[1].alert_id);
  }
  CHECK(node.state().outputs.size() == 1);
}

TEST_CASE("outputs record scores for annotated segments") {
  auto node = make_node();
  ScriptedBackend be;
  const auto& seg = fixture_segments().front();
  be.narration = "nothing relevant";
  node.process_segment(seg, be, 0);
  const auto& out = node.state().outputs.back();
  CHECK(out.narration_score == 0.0);
  CHECK(out.reasoning_score == 0.0);
  CHECK(out.request_id == "rsu-1/" + seg.id + "/1");
  CHECK(node.state().assigned_part->id == seg.id);
}

TEST_CASE("alerts surface exactly once") {
  auto node = make_node();
  CHECK(node.handle_message(alert_message("rsu-2-a1", 10)));
  CHECK_FALSE(node.handle_message(alert_message("rsu-2-a1", 10, 2)));
  CHECK(node.state().alerts_seen.size() == 1);
  CHECK(node.state().duplicate_alerts == 1);
  CHECK(node.query_state("alerts")["alerts"].size() == 1);
}

TEST_CASE("malformed and unknown messages are counted and dropped") {
  auto node = make_node();
  CHECK_FALSE(node.handle_message(std::string("{garbage")));
  json unknown{{"msg_type", "gossip"}, {"origin", "x"}, {"seq", 1}, {"payload", json::object()}, {"sent_at", 0}};
  CHECK_FALSE(node.handle_message(unknown));
  json bad_alert{{"msg_type", "alert"}, {"origin", "x"}, {"seq", 1}, {"payload", {{"nope", 1}}}, {"sent_at", 0}};
  CHECK_FALSE(node.handle_message(bad_alert));
  CHECK(node.state().dropped_messages == 3);
  CHECK(node.state().alerts.empty());
}

TEST_CASE("observation relay and status messages") {
  auto node = make_node();
  Envelope relay{MessageType::observation_relay, "rsu-2", 1,
                 to_json(Observation{"", "user-7", Category::agent, "stroller near crossing", 0}), 0};
  CHECK(node.handle_message(serialize(relay)));
  CHECK(node.state().pending_observations.size() == 1);
  Envelope status{MessageType::status, "rsu-3", 1, {{"event", "joined"}}, 0};
  CHECK(node.handle_message(serialize(status)));
  CHECK(node.state().peers.count("rsu-3") == 1);
}

TEST_CASE("accepted observations reach exactly one prompt in arrival order") {
  auto node = make_node();
  ScriptedBackend be;
  const auto id1 = node.accept_observation({"", "u1", Category::agent, "stroller near crossing", 0}, 5);
  const auto id2 = node.accept_observation({"", "u2", Category::agent, "child on a scooter", 0}, 6);
  CHECK(id1 != id2);
  CHECK_THROWS_AS(node.accept_observation({"", "u3", Category::motion, "  ", 0}, 7), Error);
  const auto& seg = fixture_segments().front();
  node.process_segment(seg, be, 10);
  node.process_segment(seg, be, 20);
  REQUIRE(be.prompts.size() == 2);
  const auto a = be.prompts[0].find("stroller near crossing"), b = be.prompts[0].find("child on a scooter");
  REQUIRE(a != std::string::npos);
  REQUIRE(b != std::string::npos);
  CHECK(a < b);
  CHECK(a > be.prompts[0].find("[AGENT]"));
  CHECK(a < be.prompts[0].find("[MOTION]"));
  CHECK(be.prompts[1].find("stroller near crossing") == std::string::npos);
  CHECK(node.state().pending_observations.empty());
}

TEST_CASE("queries") {
  auto node = make_node();
  CHECK(node.query_state("latest")["outputs"].empty());
  node.handle_message(alert_message("rsu-2-a1", 10, 1));
  node.handle_message(alert_message("rsu-2-a2", 20, 2));
  const auto alerts = node.query_state("alerts")["alerts"];
  REQUIRE(alerts.size() == 2);
  CHECK(alerts[0]["alert_id"] == "rsu-2-a2");
  CHECK(alerts[1]["alert_id"] == "rsu-2-a1");
  ScriptedBackend be;
  be.narration = "3 pedestrians";
  node.process_segment(fixture_segments().front(), be, 30);
  const auto outputs = node.query_state("outputs")["outputs"];
  REQUIRE(outputs.size() == 1);
  CHECK(outputs[0]["narration"] == "3 pedestrians");
  CHECK_THROWS_AS(node.query_state("everything"), Error);
}

TEST_CASE("backend failure leaves the node live") {
  auto node = make_node();
  ScriptedBackend be;
  be.fail = true;
  be.narration = "vehicle speeding";
  const auto& seg = fixture_segments().front();
  CHECK(node.process_segment(seg, be, 0).empty());
  CHECK(node.state().outputs.back().failed);
  be.fail = false;
  CHECK(node.process_segment(seg, be, 1).size() == 1);
  CHECK_FALSE(node.state().outputs.back().failed);
}

TEST_CASE("alert and observation documents round-trip") {
  const Alert a{"rsu-1-a1", "rsu-1", "speeding", "vehicle speeding", 42};
  CHECK(parse_alert(to_json(a)) == a);
  const auto o = parse_observation(json{{"category", "agent"}, {"text", "dog"}});
  CHECK(o.reporter == "anonymous");
  CHECK_THROWS_AS(parse_observation(json{{"category", "smell"}, {"text", "x"}}), Error);
}

TEST_CASE("runtime serializes work and serves snapshots") {
  auto backend = std::make_unique<ScriptedBackend>();
  backend->narration = "vehicle speeding";
  std::atomic<std::int64_t> clock{0};
  NodeRuntime rt(std::make_unique<RsuNode>(make_node()), std::move(backend), [&] { return clock.load(); });
  std::vector<Alert> sunk;
  std::mutex m;
  rt.set_alert_sink([&](const std::string&, const std::vector<Alert>& a) {
    std::lock_guard lk(m);
    sunk.insert(sunk.end(), a.begin(), a.end());
  });
  rt.start();
  const auto id = rt.submit_observation({"", "u", Category::agent, "stroller near crossing", 0});
  CHECK(id == "rsu-1-o1");
  auto fut = rt.submit_segment(fixture_segments().front());
  CHECK(fut.get().size() == 1);
  rt.post_message(alert_message("rsu-2-a1", 5));
  rt.barrier().get();
  const auto snap = rt.snapshot();
  CHECK(snap->outputs.size() == 1);
  CHECK(snap->outputs[0].prompt.find("stroller near crossing") != std::string::npos);
  CHECK(snap->alerts.size() == 2);
  CHECK(rt.query("alerts")["alerts"].size() == 2);
  {
    std::lock_guard lk(m);
    CHECK(sunk.size() == 1);
  }
  rt.stop();
}

TEST_CASE("runtime http endpoints") {
  auto backend = std::make_unique<ScriptedBackend>();
  backend->narration = "3 pedestrians";
  NodeRuntime rt(std::make_unique<RsuNode>(make_node()), std::move(backend), [] { return std::int64_t{7}; });
  rt.start();
  const int port = rt.serve_http("127.0.0.1", 0, default_taxonomy());
  httplib::Client cli("127.0.0.1", port);

  auto res = cli.Get("/state?kind=alerts");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(res->body)["alerts"].empty());

  res = cli.Get("/state?kind=bogus");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = cli.Options("/observe");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

  res = cli.Post("/observe", json{{"category", "agent"}, {"text", "stroller near crossing"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["observation_id"] == "rsu-1-o1");

  res = cli.Post("/observe", json{{"category", "agent"}, {"text", ""}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Post("/observe", "{", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = cli.Post("/ingest", to_json(fixture_segments().front()).dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto body = json::parse(res->body);
  CHECK(body["output"]["prompt"].get<std::string>().find("stroller near crossing") != std::string::npos);

  res = cli.Get("/state?kind=latest");
  REQUIRE(res);
  CHECK(json::parse(res->body)["processed"] == 1);

  CHECK_THROWS_AS(rt.serve_http("127.0.0.1", port, default_taxonomy()), Error);
  rt.stop();
}
