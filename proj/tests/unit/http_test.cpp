#include "consensus_lens/http_service.hpp"
#include "consensus_lens/verify.hpp"
#include "test_support.hpp"

#include <boost/asio/connect.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <doctest.h>

#include <thread>

using namespace clens;
using namespace std::chrono_literals;
namespace beast = boost::beast;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

namespace {

struct reply {
    int status = 0;
    json body;
    std::string raw;
    std::string allow_origin;
};

reply call(std::uint16_t port, http::verb verb, const std::string& target, const std::string& body = {})
{
    asio::io_context ioc;
    tcp::resolver resolver(ioc);
    beast::tcp_stream stream(ioc);
    stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
    http_request req(verb, target, 11);
    req.set(http::field::host, "127.0.0.1");
    if (!body.empty()) {
        req.set(http::field::content_type, "application/json");
        req.body() = body;
    }
    req.prepare_payload();
    http::write(stream, req);
    beast::flat_buffer buf;
    http_response res;
    http::read(stream, buf, res);
    beast::error_code ec;
    stream.socket().shutdown(tcp::socket::shutdown_both, ec);

    reply r;
    r.status = res.result_int();
    r.raw = res.body();
    r.allow_origin = std::string(res[http::field::access_control_allow_origin]);
    if (!r.raw.empty()) r.body = json::parse(r.raw);
    return r;
}

reply get(std::uint16_t port, const std::string& target)
{
    return call(port, http::verb::get, target);
}

reply post(std::uint16_t port, const std::string& target, const json& body)
{
    return call(port, http::verb::post, target, body.dump());
}

// Reads every frame until the server closes the stream.
std::vector<std::string> read_stream(std::uint16_t port, const std::string& target = "/api/v1/stream")
{
    asio::io_context ioc;
    tcp::resolver resolver(ioc);
    beast::websocket::stream<tcp::socket> ws(ioc);
    asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", target);
    std::vector<std::string> frames;
    for (;;) {
        beast::flat_buffer buf;
        beast::error_code ec;
        ws.read(buf, ec);
        if (ec == beast::websocket::error::closed) break;
        REQUIRE_FALSE(ec);
        frames.push_back(beast::buffers_to_string(buf.data()));
    }
    return frames;
}

bool eventually(const std::function<bool()>& pred)
{
    auto deadline = std::chrono::steady_clock::now() + 5s;
    while (std::chrono::steady_clock::now() < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(5ms);
    }
    return false;
}

} // namespace

TEST_CASE("endpoint parsing")
{
    auto ep = parse_endpoint("127.0.0.1:8080");
    CHECK(ep.host == "127.0.0.1");
    CHECK(ep.port == 8080);
    CHECK(parse_endpoint("[::1]:0").host == "::1");
    CHECK_THROWS_AS(parse_endpoint("localhost"), config_error);
    CHECK_THROWS_AS(parse_endpoint("localhost:"), config_error);
    CHECK_THROWS_AS(parse_endpoint("localhost:99999"), config_error);
    CHECK_THROWS_AS(parse_endpoint(":80"), config_error);
}

TEST_CASE("live service end to end")
{
    auto cfg = test::demo_config(6);
    live_session s(cfg, std::nullopt, 0.0, true);
    http_service svc(s, {"127.0.0.1", 0});
    svc.start();
    s.start();
    const auto port = svc.port();
    REQUIRE(port != 0);

    auto meta = get(port, "/api/v1/meta");
    CHECK(meta.status == 200);
    CHECK(meta.allow_origin == "*");
    CHECK(meta.body["mode"] == "live");
    CHECK(meta.body["paused"] == true);
    CHECK(meta.body["live"] == false);
    CHECK(meta.body["current_slot"].is_null());
    CHECK(meta.body["config"] == encode(cfg));

    auto stepped = post(port, "/api/v1/control", {{"cmd", "step_slot"}});
    CHECK(stepped.status == 200);
    REQUIRE(eventually([&] { return get(port, "/api/v1/meta").body["current_slot"] == 0; }));
    post(port, "/api/v1/control", {{"cmd", "step_slot"}});
    REQUIRE(eventually([&] { return get(port, "/api/v1/meta").body["current_slot"] == 1; }));

    SUBCASE("queries")
    {
        auto outcomes = get(port, "/api/v1/events?kinds=slot_outcome");
        CHECK(outcomes.status == 200);
        CHECK(outcomes.body["count"] == 1);
        CHECK(outcomes.body["events"][0]["body"]["slot"] == 0);

        auto both = get(port, "/api/v1/events?kinds=slot_outcome%2Crole_assignment&from_ms=0&to_ms=1000");
        CHECK(both.body["count"] == 3); // roles 0, outcome 0 and roles 1 all fall in range

        auto node = get(port, "/api/v1/events?node=7&slot=0");
        CHECK(node.status == 200);
        for (const auto& e : node.body["events"]) CHECK(e["body"]["slot"] == 0);

        CHECK(get(port, "/api/v1/events?from_ms=5&to_ms=1").status == 400);
        CHECK(get(port, "/api/v1/events?kinds=bogus").status == 400);
        CHECK(get(port, "/api/v1/events?slot=x").status == 400);
        CHECK(get(port, "/api/v1/events?colour=red").status == 400);
        CHECK(get(port, "/api/v1/events?slot=1&slot=2").status == 400);

        auto snap = get(port, "/api/v1/snapshot/0");
        CHECK(snap.status == 200);
        CHECK(snap.body["topology"]["assignment"].size() == 30);
        CHECK(snap.body["outcome"]["kind"] == "finalized");
        CHECK(get(port, "/api/v1/snapshot/1").body["outcome"].is_null());
        CHECK(get(port, "/api/v1/snapshot/5").status == 404);
        CHECK(get(port, "/api/v1/snapshot/abc").status == 400);

        CHECK(get(port, "/api/v1/nothing").status == 404);
        CHECK(get(port, "/elsewhere").status == 404);
        CHECK(get(port, "/api/v1/control").status == 405);
        CHECK(call(port, http::verb::post, "/api/v1/meta", "{}").status == 405);
        CHECK(get(port, "/api/v1/stream").status == 426);
        CHECK(call(port, http::verb::options, "/api/v1/control").status == 204);
    }

    SUBCASE("control errors")
    {
        CHECK(call(port, http::verb::post, "/api/v1/control", "{nope").status == 400);
        CHECK(post(port, "/api/v1/control", {{"cmd", "launch"}}).status == 400);
        CHECK(post(port, "/api/v1/control", {{"cmd", "kill_node"}}).status == 400);
        auto bad = post(port, "/api/v1/control", {{"cmd", "kill_node"}, {"target", 30}});
        CHECK(bad.status == 400);
        CHECK(bad.body["error"].get<std::string>().find("30") != std::string::npos);
        CHECK(post(port, "/api/v1/control", {{"cmd", "speed"}, {"value", -2}}).status == 400);
    }

    SUBCASE("stream delivers the whole run and control faults verify")
    {
        auto victim = test::expected_roles(cfg, 2).producer;
        CHECK(post(port, "/api/v1/control", {{"cmd", "kill_node"}, {"target", victim.index}}).status == 200);
        std::vector<std::string> frames;
        std::thread reader([&] { frames = read_stream(port); });
        std::vector<std::string> late;
        std::thread late_reader([&] { late = read_stream(port, "/api/v1/stream?from=5"); });
        CHECK(post(port, "/api/v1/control", {{"cmd", "resume"}}).status == 200);
        reader.join();
        late_reader.join();

        auto expected = s.stream().lines(0);
        CHECK(frames == expected);
        REQUIRE(late.size() == expected.size() - 5);
        CHECK(late.front() == expected[5]);
        CHECK(verify_stream(frames).ok());
        CHECK(get(port, "/api/v1/snapshot/2").body["outcome"]["reason"] == "producer_dead");

        auto done = get(port, "/api/v1/meta");
        CHECK(done.body["state"] == "finished");
        CHECK(post(port, "/api/v1/control", {{"cmd", "pause"}}).status == 409);
    }

    svc.stop();
}

TEST_CASE("replay service")
{
    auto cfg = test::demo_config(3);
    auto events = run(cfg);
    auto recording = std::make_unique<event_store>();
    for (const auto& e : events) recording->append(e);
    recording->close();

    replay_session r(std::move(recording), 0.0);
    r.control({control_cmd::pause, {}, {}});
    http_service svc(r, {"127.0.0.1", 0});
    svc.start();
    r.start();
    const auto port = svc.port();

    // The whole recording is queryable before playback reaches it.
    CHECK(get(port, "/api/v1/events?kinds=slot_outcome").body["count"] == 3);
    CHECK(get(port, "/api/v1/meta").body["mode"] == "replay");
    CHECK(post(port, "/api/v1/control", {{"cmd", "kill_node"}, {"target", 1}}).status == 409);

    std::vector<std::string> frames;
    std::thread reader([&] { frames = read_stream(port); });
    CHECK(post(port, "/api/v1/control", {{"cmd", "resume"}}).status == 200);
    reader.join();
    CHECK(frames.size() == events.size());
    CHECK(frames.back() == to_jsonl(events.back()));
}

TEST_CASE("stopping the service releases blocked streams")
{
    auto cfg = test::demo_config(50);
    live_session s(cfg, std::nullopt, 0.0, true);
    http_service svc(s, {"127.0.0.1", 0});
    svc.start();
    s.start();
    std::thread reader([&] {
        asio::io_context ioc;
        tcp::resolver resolver(ioc);
        beast::websocket::stream<tcp::socket> ws(ioc);
        asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(svc.port())));
        ws.handshake("127.0.0.1", "/api/v1/stream");
        beast::flat_buffer buf;
        beast::error_code ec;
        while (!ec) ws.read(buf, ec);
    });
    std::this_thread::sleep_for(50ms);
    auto t0 = std::chrono::steady_clock::now();
    svc.stop();
    reader.join();
    CHECK(std::chrono::steady_clock::now() - t0 < 2s);
}

TEST_CASE("binding a busy port is an I/O error")
{
    auto cfg = test::demo_config(1);
    live_session s(cfg, std::nullopt, 0.0, true);
    http_service a(s, {"127.0.0.1", 0});
    a.start();
    http_service b(s, {"127.0.0.1", a.port()});
    CHECK_THROWS_AS(b.start(), io_error);
}
