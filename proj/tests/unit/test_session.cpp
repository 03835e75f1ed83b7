#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <sstream>
#include <thread>

#include "heartbees/server.hpp"
#include "heartbees/session.hpp"
#include "support/streams.hpp"
#include "support/tcp_client.hpp"

using namespace heartbees;
using json = nlohmann::json;
using testnet::Client;

namespace {

SessionOptions small(std::size_t n = 20) {
    SessionOptions o;
    o.flock_size = n;
    return o;
}

std::string rr_line(const std::string& person, std::int64_t ts, double rr) {
    return json{{"kind", "rr_sample"}, {"person_id", person}, {"timestamp_ms", ts}, {"rr_ms", rr}}.dump();
}

std::vector<std::string> kinds(const std::vector<Outbound>& ms) {
    std::vector<std::string> out;
    for (const auto& m : ms) out.push_back(m.kind);
    return out;
}

// Feeds interleaved per-person streams in timestamp order.
std::vector<Outbound> feed(Session& s, const std::vector<std::pair<std::string, std::vector<RRSample>>>& people) {
    std::vector<std::tuple<std::int64_t, std::size_t, RRSample>> all;
    for (std::size_t p = 0; p < people.size(); ++p)
        for (const auto& x : people[p].second) all.emplace_back(x.timestamp_ms, p, x);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    std::vector<Outbound> out;
    for (const auto& [ts, p, x] : all) {
        auto r = s.handle_rr(people[p].first, x.timestamp_ms, x.rr_ms);
        for (auto& m : r.messages) out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

TEST_CASE("session defaults and overrides", "[session]") {
    Session s{SessionOptions{}};
    CHECK(s.emotion() == Emotion::Joy);
    CHECK(s.active_config().max_speed == 2);
    CHECK(s.active_config().perception_range == 60);
    CHECK(s.flock().boids.size() == 100);

    Session ten{small(10)};
    CHECK(ten.flock().boids.size() == 10);

    SessionOptions bad;
    bad.tick_rate = 0;
    CHECK_THROWS_WITH(Session{bad}, Catch::Matchers::ContainsSubstring("tick_rate"));
    bad.flock_size = 0;
    CHECK_THROWS_WITH(Session{bad}, Catch::Matchers::ContainsSubstring("flock_size"));
}

TEST_CASE("set_emotion", "[session][override]") {
    Session s{small()};
    auto out = s.handle_line(R"({"kind":"set_emotion","emotion":"anger"})");
    REQUIRE(kinds(out) == std::vector<std::string>{"ack", "emotion_changed"});
    CHECK(s.emotion() == Emotion::Anger);
    REQUIRE(s.transition_target().has_value());
    CHECK(s.transition_target()->max_speed == 10);
    CHECK(json::parse(out[1].data)["target"]["max_speed"] == 10);
    CHECK(s.override_active());

    Session j{small()};
    out = j.handle_line(R"({"kind":"set_emotion","emotion":"joy"})");
    REQUIRE(kinds(out) == std::vector<std::string>{"ack"});
    CHECK(json::parse(out[0].data)["changed"] == false);

    out = j.handle_line(R"({"kind":"set_emotion","emotion":"bliss"})");
    REQUIRE(kinds(out) == std::vector<std::string>{"error"});
    const auto msg = json::parse(out[0].data)["message"].get<std::string>();
    for (Emotion e : kAllEmotions) CHECK(msg.find(name_of(e)) != std::string::npos);
    CHECK(j.emotion() == Emotion::Joy);
}

TEST_CASE("transition reaches the target after its duration", "[session][override]") {
    Session s{small()};
    s.handle_override("anger");
    for (int i = 0; i < 59; ++i) s.advance();
    CHECK(s.pending_transition().has_value());
    s.advance();
    CHECK_FALSE(s.pending_transition().has_value());
    CHECK(s.active_config() == config_for(Emotion::Anger, 20));
}

TEST_CASE("malformed input never escapes", "[session][robustness]") {
    Session s{small()};
    const std::vector<std::string> junk{"", "not json", "[1,2]", R"({"kind":3})", R"({"kind":"teleport"})",
                                        R"({"kind":"set_emotion"})", R"({"kind":"set_config","config":{"max_speed":-1}})",
                                        R"({"kind":"set_aesthetics","aesthetics":{"stroke_length":101}})",
                                        R"({"kind":"set_aesthetics","aesthetics":{"palette":"neon"}})",
                                        R"({"kind":"rr_sample","person_id":"a"})"};
    for (const auto& line : junk) {
        std::vector<Outbound> out;
        REQUIRE_NOTHROW(out = s.handle_line(line));
        REQUIRE(out.size() == 1);
        CHECK(out[0].kind == "error");
    }
    CHECK(s.active_config() == config_for(Emotion::Joy, 20));
    CHECK(s.aesthetics() == Aesthetics{});
    CHECK_NOTHROW(s.advance());
}

TEST_CASE("set_config and set_aesthetics apply immediately", "[session]") {
    Session s{small()};
    auto out = s.handle_line(R"({"kind":"set_config","config":{"max_speed":7,"flock_size":25}})");
    REQUIRE(kinds(out) == std::vector<std::string>{"ack"});
    CHECK(s.active_config().max_speed == 7);
    CHECK(s.flock().boids.size() == 25);
    s.advance();
    for (const auto& b : s.flock().boids) CHECK(b.velocity.norm() <= 7.0 + 1e-12);

    out = s.handle_line(R"({"kind":"set_aesthetics","aesthetics":{"stroke_length":100,"background":"bright"}})");
    REQUIRE(kinds(out) == std::vector<std::string>{"ack"});
    CHECK(s.aesthetics().stroke_length == 100);
    CHECK(s.aesthetics().background == Background::Bright);
    CHECK(json::parse(s.snapshot().data)["aesthetics"]["background"] == "bright");
}

TEST_CASE("rr artifacts are counted and dropped", "[session][rr]") {
    Session s{small()};
    auto r = s.handle_rr("a", 1000, 9999);
    CHECK_FALSE(r.changed);
    CHECK(r.messages.empty());
    CHECK(s.dropped_samples() == 1);
    s.handle_line(rr_line("a", 2000, 800));
    s.handle_line(rr_line("a", 1500, 800));
    CHECK(s.dropped_samples() == 2);
    s.handle_line(R"({"kind":"rr_sample","person_id":"a","timestamp_ms":"soon","rr_ms":800})");
    CHECK(s.malformed_messages() == 1);
}

TEST_CASE("snapshots quantise boids and carry collective state only", "[session][snapshot]") {
    Session s{small(5)};
    s.advance();
    const auto snap = s.snapshot();
    CHECK(snap.kind == "state_snapshot");
    const auto d = json::parse(snap.data);
    CHECK(d["tick"] == 1);
    CHECK(d["emotion"] == "joy");
    REQUIRE(d["boids"].size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& b = s.flock().boids[i];
        CHECK(d["boids"][i][0].get<double>() == Catch::Approx(b.position.x).margin(0.005));
        CHECK(d["boids"][i][3].get<double>() == Catch::Approx(b.velocity.y).margin(0.005));
    }
    // Two decimals on the wire.
    CHECK(snap.data.find("\"boids\":[[") != std::string::npos);
    const auto pos = snap.data.find("\"boids\":[[") + 10;
    const auto comma = snap.data.find(',', pos);
    const auto dot = snap.data.find('.', pos);
    CHECK(comma - dot == 3);

    for (const auto& line : {rr_line("zed", 1000, 800), rr_line("zed", 2000, 810)}) s.handle_line(line);
    CHECK(s.snapshot().data.find("zed") == std::string::npos);
}

TEST_CASE("sequence numbers increase per connection", "[session][protocol]") {
    Session s{small()};
    Sequencer a;
    std::uint64_t prev = 0;
    for (int i = 0; i < 100; ++i) {
        const auto j = json::parse(a.frame(s.advance()));
        REQUIRE(j["seq"].get<std::uint64_t>() > prev);
        prev = j["seq"];
        REQUIRE(j["kind"] == "state_snapshot");
    }
}

TEST_CASE("steady participants cause no emotion change", "[session][rr]") {
    Session s{small()};
    const auto out = feed(s, {{"a", streams::constant(420, 1000)}, {"b", streams::constant(420, 1000, 3)}});
    for (const auto& m : out) REQUIRE(m.kind != "emotion_changed");
    CHECK(s.emotion() == Emotion::Joy);
    CHECK(std::count_if(out.begin(), out.end(), [](const auto& m) { return m.kind == "metrics_update"; }) > 50);
}

TEST_CASE("a joyful group drives the collective emotion to joy", "[session][rr]") {
    SessionOptions o = small();
    o.emotion = Emotion::Sadness;
    Session s{o};
    const auto out = feed(s, {{"a", streams::joy_after_rest()},
                              {"b", streams::joy_after_rest(600, 180, 137)},
                              {"c", streams::joy_after_rest(600, 180, 411)}});
    CHECK(s.emotion() == Emotion::Joy);
    const auto last = std::find_if(out.rbegin(), out.rend(), [](const auto& m) { return m.kind == "emotion_changed"; });
    REQUIRE(last != out.rend());
    CHECK(json::parse(last->data)["to"] == "joy");
    CHECK(json::parse(last->data)["source"] == "physio");
    // Metrics updates expose only tallies.
    for (const auto& m : out) {
        if (m.kind != "metrics_update") continue;
        const auto d = json::parse(m.data);
        REQUIRE_FALSE(d.contains("a"));
        REQUIRE_FALSE(d.contains("hr"));
    }
}

TEST_CASE("an override holds until physiology disagrees twice", "[session][override]") {
    Session s{small()};
    // Warm everyone up on the joyful stream first.
    auto stream = streams::joy_after_rest();
    const auto split = static_cast<std::size_t>(stream.size() * 0.9);
    std::vector<RRSample> head(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(split));
    std::vector<RRSample> tail(stream.begin() + static_cast<std::ptrdiff_t>(split), stream.end());
    feed(s, {{"a", head}});
    REQUIRE(s.emotion() == Emotion::Joy);

    s.handle_override("fear");
    CHECK(s.emotion() == Emotion::Fear);
    // The first diverging aggregate is not enough.
    std::size_t i = 0;
    for (; i < tail.size(); ++i) {
        if (!s.handle_rr("a", tail[i].timestamp_ms, tail[i].rr_ms).messages.empty()) break;
    }
    CHECK(s.emotion() == Emotion::Fear);
    CHECK(s.override_active());
    std::optional<Emotion> changed;
    for (++i; i < tail.size() && !changed; ++i) changed = s.handle_rr("a", tail[i].timestamp_ms, tail[i].rr_ms).changed;
    CHECK(changed == Emotion::Joy);
    CHECK_FALSE(s.override_active());
}

TEST_CASE("one participant's garbage leaves others untouched", "[session][isolation]") {
    const auto good = streams::joy_after_rest(300, 60);
    Session clean{small()}, noisy{small()};
    for (const auto& x : good) {
        clean.handle_rr("a", x.timestamp_ms, x.rr_ms);
        noisy.handle_rr("a", x.timestamp_ms, x.rr_ms);
        noisy.handle_line(rr_line("b", x.timestamp_ms, 9999));
        noisy.handle_line(R"({"kind":"rr_sample","person_id":"b","timestamp_ms":1})");
        noisy.handle_line("garbage");
    }
    const auto* pa = clean.person("a");
    const auto* pb = noisy.person("a");
    REQUIRE(pa);
    REQUIRE(pb);
    REQUIRE(pa->latest().has_value() == pb->latest().has_value());
    if (pa->latest()) CHECK(pa->latest()->footprint == pb->latest()->footprint);
    CHECK(pa->last_chosen() == pb->last_chosen());
    CHECK(pb->dropped() == 0);
}

TEST_CASE("inbound logs round-trip and replay deterministically", "[session][replay]") {
    std::stringstream log;
    InboundRecorder rec(log);
    SessionOptions o = small(30);
    o.seed = 9;
    rec.header(o);
    rec.message(3, R"({"kind":"set_emotion","emotion":"anger"})");
    rec.message(3, rr_line("p", 1000, 800));
    rec.message(40, R"({"kind":"set_emotion","emotion":"anger"})");
    rec.message(41, R"({"kind":"set_emotion","emotion":"trust"})");
    rec.end(90);

    const auto parsed = read_inbound_log(log);
    REQUIRE(parsed.header.has_value());
    CHECK(parsed.header->seed == 9);
    CHECK(parsed.messages.size() == 4);
    CHECK(parsed.end_tick == 90);

    auto run = [&] {
        std::vector<std::string> out;
        replay(parsed, *parsed.header, 0, [&](std::string s) { out.push_back(std::move(s)); });
        return out;
    };
    const auto a = run();
    const auto b = run();
    CHECK(a == b);
    const auto snaps = std::count_if(a.begin(), a.end(), [](const auto& l) { return json::parse(l)["kind"] == "state_snapshot"; });
    CHECK(snaps == 91);

    // Independent count: a set_emotion changes state only when it names a new emotion.
    std::size_t expect_changes = 0;
    std::string current = name_of(o.emotion).data();
    for (const auto& m : parsed.messages) {
        const auto j = json::parse(m.raw);
        if (j["kind"] == "set_emotion" && j["emotion"] != current) {
            ++expect_changes;
            current = j["emotion"];
        }
    }
    const auto changes =
        std::count_if(a.begin(), a.end(), [](const auto& l) { return json::parse(l)["kind"] == "emotion_changed"; });
    CHECK(static_cast<std::size_t>(changes) == expect_changes);
}

TEST_CASE("replay of a single set_emotion emits one emotion_changed", "[session][replay]") {
    InboundLog log;
    log.messages.push_back({10, R"({"kind":"set_emotion","emotion":"surprise"})"});
    std::vector<std::string> out;
    replay(log, small(), 50, [&](std::string s) { out.push_back(std::move(s)); });
    CHECK(std::count_if(out.begin(), out.end(), [](const auto& l) { return json::parse(l)["kind"] == "emotion_changed"; }) == 1);

    InboundLog empty;
    out.clear();
    replay(empty, small(), 20, [&](std::string s) { out.push_back(std::move(s)); });
    CHECK(out.size() == 21);
    for (const auto& l : out) CHECK(json::parse(l)["kind"] == "state_snapshot");
}

TEST_CASE("corrupt log lines report their position", "[session][replay]") {
    std::stringstream log;
    log << R"({"header":{"seed":1}})" << "\n" << R"({"tick":1,"raw":"x"})" << "\n" << "{broken\n";
    try {
        read_inbound_log(log);
        FAIL("expected LogParseError");
    } catch (const LogParseError& e) {
        CHECK(e.line() == 3);
    }
    std::stringstream backwards;
    backwards << R"({"tick":5,"raw":"x"})" << "\n" << R"({"tick":4,"raw":"y"})" << "\n";
    CHECK_THROWS_AS(read_inbound_log(backwards), LogParseError);
}

TEST_CASE("viewer channel holds at most one snapshot", "[server][backpressure]") {
    detail::ViewerChannel ch;
    for (int i = 0; i < 50; ++i) {
        ch.push({"state_snapshot", "{\"tick\":" + std::to_string(i) + "}"});
        REQUIRE(ch.queued_snapshots() <= 1);
    }
    ch.push({"emotion_changed", "{}"});
    ch.push({"state_snapshot", "{\"tick\":99}"});
    CHECK(ch.queued_snapshots() == 1);
    const auto first = json::parse(*ch.pop_framed());
    CHECK(first["kind"] == "emotion_changed");
    CHECK(first["seq"] == 1);
    const auto second = json::parse(*ch.pop_framed());
    CHECK(second["data"]["tick"] == 99);
    CHECK(second["seq"] == 2);
    ch.close();
    CHECK_FALSE(ch.pop_framed().has_value());
}

TEST_CASE("live server over TCP", "[server][tcp]") {
    SessionOptions o = small(12);
    o.tick_rate = 100;
    o.seed = 5;
    std::stringstream log, recorded;
    Server server(o, 0, &log, &recorded);
    server.start();
    REQUIRE(server.port() != 0);

    {
        Client a(server.port());
        const auto first = a.next();
        REQUIRE(first.has_value());
        CHECK((*first)["kind"] == "state_snapshot");
        CHECK((*first)["seq"] == 1);
        CHECK((*first)["data"]["boids"].size() == 12);

        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        Client b(server.port());
        const auto late = b.next();
        REQUIRE(late.has_value());
        CHECK((*late)["kind"] == "state_snapshot");
        CHECK((*late)["data"]["tick"].get<int>() > 0);

        a.send(R"({"kind":"set_emotion","emotion":"anger"})");
        const auto ack = a.next_of("ack");
        REQUIRE(ack.has_value());
        CHECK((*ack)["data"]["changed"] == true);
        const auto changed = b.next_of("emotion_changed");
        REQUIRE(changed.has_value());
        CHECK((*changed)["data"]["to"] == "anger");
        CHECK(server.emotion() == Emotion::Anger);

        b.send("nonsense");
        const auto err = b.next_of("error");
        REQUIRE(err.has_value());

        // Same tick, same bytes for both viewers.
        std::map<int, std::string> sa, sb;
        for (int i = 0; i < 40; ++i) {
            if (auto m = a.next(); m && (*m)["kind"] == "state_snapshot") sa[(*m)["data"]["tick"]] = (*m)["data"].dump();
            if (auto m = b.next(); m && (*m)["kind"] == "state_snapshot") sb[(*m)["data"]["tick"]] = (*m)["data"].dump();
        }
        int common = 0;
        for (const auto& [tick, payload] : sa) {
            if (auto it = sb.find(tick); it != sb.end()) {
                ++common;
                CHECK(payload == it->second);
            }
        }
        CHECK(common > 0);

        // A viewer that never reads does not stall the loop.
        Client idle(server.port());
        const auto t0 = server.ticks();
        std::this_thread::sleep_for(std::chrono::milliseconds(300));
        CHECK(server.ticks() > t0 + 10);
    }
    server.stop();
    server.stop();

    // The live recording is exactly what replay produces from the inbound log.
    const auto parsed = read_inbound_log(log);
    REQUIRE(parsed.header.has_value());
    REQUIRE(parsed.end_tick.has_value());
    std::vector<std::string> live, again;
    for (std::string line; std::getline(recorded, line);) live.push_back(line);
    replay(parsed, *parsed.header, 0, [&](std::string s) { again.push_back(std::move(s)); });
    CHECK(live.size() == again.size());
    CHECK(live == again);
}

TEST_CASE("server refuses a busy port", "[server][tcp]") {
    Server first(small(), 0);
    first.start();
    Server second(small(), first.port());
    CHECK_THROWS_AS(second.start(), ServerError);
    first.stop();
}
