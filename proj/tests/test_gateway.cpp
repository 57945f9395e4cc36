#include "ditto/harness/gateway.hpp"
#include "ditto/harness/record.hpp"

#include "support.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>

#include <chrono>
#include <condition_variable>
#include <future>
#include <mutex>
#include <thread>

using namespace ditto;
using namespace ditto::harness;
using namespace std::chrono_literals;

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class Client {
public:
    explicit Client(unsigned short port) : ws_(ioc_) {
        tcp::resolver resolver(ioc_);
        net::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/");
        read();
        thread_ = std::thread([this] { ioc_.run(); });
    }

    ~Client() {
        net::post(ioc_, [this] {
            beast::error_code ec;
            ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
            ws_.next_layer().close(ec);
        });
        thread_.join();
    }

    void send(const Json& message) { send_text(message.dump()); }

    void send_text(std::string text) {
        auto owned = std::make_shared<std::string>(std::move(text));
        std::promise<void> sent;
        auto done = sent.get_future();
        net::post(ioc_, [this, owned, &sent] {
            ws_.text(true);
            ws_.async_write(net::buffer(*owned), [owned, &sent](beast::error_code, std::size_t) { sent.set_value(); });
        });
        done.wait();
    }

    // Waits for the next received message matching `pred`, skipping (but keeping) others.
    std::optional<Json> next(const std::function<bool(const Json&)>& pred, std::chrono::milliseconds timeout = 3s) {
        std::unique_lock lock(mutex_);
        std::optional<Json> found;
        cv_.wait_for(lock, timeout, [&] {
            while (cursor_ < received_.size()) {
                const auto& m = received_[cursor_++];
                if (pred(m)) {
                    found = m;
                    return true;
                }
            }
            return closed_;
        });
        return found;
    }

    std::optional<Json> next_type(const std::string& type, std::chrono::milliseconds timeout = 3s) {
        return next([&](const Json& m) { return m["type"] == type; }, timeout);
    }

    std::vector<Json> received() {
        std::lock_guard lock(mutex_);
        return received_;
    }

    bool closed() {
        std::lock_guard lock(mutex_);
        return closed_;
    }

private:
    void read() {
        ws_.async_read(buffer_, [this](beast::error_code ec, std::size_t) {
            std::lock_guard lock(mutex_);
            if (ec) {
                closed_ = true;
                cv_.notify_all();
                return;
            }
            received_.push_back(Json::parse(beast::buffers_to_string(buffer_.data())));
            buffer_.consume(buffer_.size());
            cv_.notify_all();
            read();
        });
    }

    net::io_context ioc_;
    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    std::thread thread_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<Json> received_;
    std::size_t cursor_ = 0;
    bool closed_ = false;
};

std::unique_ptr<Runtime> walkup_runtime() {
    const auto sc = load_scenario(fixtures::scenario_path("jack_walkup"));
    RuntimeOptions o;
    o.setup = sc.setup;
    o.responder = std::make_unique<conversation::ScriptedResponder>(sc.setup.daily.script);
    return std::make_unique<Runtime>(std::move(o));
}

GatewayOptions lockstep() {
    GatewayOptions o;
    o.port = 0;
    o.mode = ClockMode::Lockstep;
    return o;
}

Json move(double x, double y, double facing, Millis ts, const std::string& track = "t1") {
    return {{"type", "move"}, {"track_id", track}, {"x", x}, {"y", y}, {"facing_deg", facing}, {"ts", ts}};
}

bool has_track_near(const Json& m, double distance) {
    return m["type"] == "state" && !m["tracks"].empty() && std::abs(m["tracks"][0]["distance"].get<double>() - distance) < 1e-3;
}

}  // namespace

TEST(Gateway, SnapshotOnConnect) {
    Gateway gw(lockstep(), walkup_runtime());
    Client c(gw.start());
    const auto snap = c.next_type("state");
    ASSERT_TRUE(snap);
    EXPECT_TRUE((*snap)["snapshot"].get<bool>());
    EXPECT_EQ((*snap)["mode"], "NotEngaged");
    EXPECT_TRUE((*snap)["journal"].empty());
}

TEST(Gateway, MoveBroadcastsState) {
    Gateway gw(lockstep(), walkup_runtime());
    Client c(gw.start());
    ASSERT_TRUE(c.next_type("state"));
    c.send(move(0.5, 0.5, -135, 0));
    const auto state = c.next([](const Json& m) { return has_track_near(m, std::sqrt(0.5)); });
    ASSERT_TRUE(state);
    EXPECT_EQ((*state)["tracks"][0]["zone"], "social");
    EXPECT_TRUE((*state)["tracks"][0]["facing"].get<bool>());
    const auto all = c.received();
    const auto journal = std::find_if(all.begin(), all.end(), [](const Json& m) { return m["type"] == "journal"; });
    ASSERT_NE(journal, all.end());
    EXPECT_EQ((*journal)["entry"]["rendered"], "Passerby has entered the zone, 1 meter away, facing you.");
}

TEST(Gateway, MalformedMessageLeavesStateUnchanged) {
    Gateway gw(lockstep(), walkup_runtime());
    Client c(gw.start());
    ASSERT_TRUE(c.next_type("state"));
    c.send_text("{\"type\":\"move\",\"x\":1}");
    const auto err = c.next_type("error");
    ASSERT_TRUE(err);
    EXPECT_EQ((*err)["code"], "schema_error");
    c.send_text("not json at all");
    EXPECT_TRUE(c.next_type("error"));
    c.send({{"type", "control"}, {"action", "snapshot"}});
    const auto snap = c.next([](const Json& m) { return m["type"] == "state" && m.contains("snapshot"); });
    ASSERT_TRUE(snap);
    EXPECT_TRUE((*snap)["tracks"].empty());
    EXPECT_TRUE((*snap)["journal"].empty());
    gw.stop();
    EXPECT_TRUE(gw.runtime().inputs().empty());
}

TEST(Gateway, OrderingErrorIsReportedToSender) {
    Gateway gw(lockstep(), walkup_runtime());
    Client c(gw.start());
    ASSERT_TRUE(c.next_type("state"));
    c.send(move(0, 2, -90, 100));
    c.send(move(0, 1, -90, 50));
    const auto err = c.next_type("error");
    ASSERT_TRUE(err);
    EXPECT_EQ((*err)["code"], "ordering_error");
}

TEST(Gateway, ClientsSeeIdenticalBroadcasts) {
    Gateway gw(lockstep(), walkup_runtime());
    const auto port = gw.start();
    Client a(port);
    Client b(port);
    ASSERT_TRUE(a.next_type("state"));
    ASSERT_TRUE(b.next_type("state"));
    // inputs from one client so the arrival order is fixed
    for (Millis t = 0; t <= 3000; t += 500) a.send(move(0, 1, -90, t));
    a.send({{"type", "speech"}, {"track_id", "t1"}, {"text", "Hello there"}, {"final", true}, {"ts", 3100}});
    a.send({{"type", "control"}, {"action", "tick"}, {"ts", 20000}});
    ASSERT_TRUE(a.next([](const Json& m) { return m["type"] == "utterance" && m["speaker"] == "agent"; }));
    ASSERT_TRUE(b.next([](const Json& m) { return m["type"] == "utterance" && m["speaker"] == "agent"; }));
    std::this_thread::sleep_for(200ms);
    auto strip = [](std::vector<Json> all) {
        std::vector<Json> out;
        for (auto& m : all)
            if (!m.contains("snapshot")) out.push_back(std::move(m));
        return out;
    };
    const auto sa = strip(a.received());
    const auto sb = strip(b.received());
    EXPECT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb);
}

TEST(Gateway, LockstepSessionCapturesReplayableRecord) {
    const auto sc = load_scenario(fixtures::scenario_path("jack_walkup"));
    Gateway gw(lockstep(), walkup_runtime());
    {
        Client c(gw.start());
        ASSERT_TRUE(c.next_type("state"));
        for (const auto& in : sc.timeline) c.send(to_json(in));
        c.send({{"type", "control"}, {"action", "tick"}, {"ts", 120000}});
        ASSERT_TRUE(c.next([](const Json& m) { return m["type"] == "summary"; }));
    }
    gw.stop();
    const auto record = capture(gw.runtime(), "gateway", sc.setup, "scripted", false);
    const auto offline = run_scenario(sc, EngineConfig{});
    EXPECT_EQ(journal_hash(record.journal), journal_hash(offline.journal));
    const auto v = replay(record, EngineConfig{});
    EXPECT_EQ(v.status, ReplayVerdict::Status::Pass) << v.detail;
}

TEST(Gateway, LiveModeStampsInputs) {
    auto o = lockstep();
    o.mode = ClockMode::Live;
    Gateway gw(o, walkup_runtime());
    Client c(gw.start());
    ASSERT_TRUE(c.next_type("state"));
    c.send({{"type", "move"}, {"track_id", "t1"}, {"x", 0}, {"y", 2}, {"facing_deg", -90}, {"ts", 0}});
    c.send({{"type", "move"}, {"track_id", "t1"}, {"x", 0}, {"y", 1.9}, {"facing_deg", -90}, {"ts", 0}});
    ASSERT_TRUE(c.next([](const Json& m) { return has_track_near(m, 1.9); }));
    gw.stop();
    const auto& inputs = gw.runtime().inputs();
    ASSERT_EQ(inputs.size(), 2u);
    EXPECT_LT(*timestamp_of(inputs[0]), *timestamp_of(inputs[1]));
}

TEST(Gateway, FullQueueAsksClientsToRetry) {
    auto o = lockstep();
    o.queue_limit = 0;
    Gateway gw(o, walkup_runtime());
    Client c(gw.start());
    ASSERT_TRUE(c.next_type("state"));
    c.send(move(0, 2, -90, 0));
    const auto err = c.next_type("error");
    ASSERT_TRUE(err);
    EXPECT_EQ((*err)["code"], "backpressure");
    EXPECT_TRUE((*err)["retry"].get<bool>());
}

TEST(Gateway, StopIsIdempotent) {
    Gateway gw(lockstep(), walkup_runtime());
    gw.start();
    gw.stop();
    gw.stop();
    EXPECT_TRUE(gw.runtime().journal().empty());
}
