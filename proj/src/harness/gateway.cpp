#include "ditto/harness/gateway.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

namespace ditto::harness {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

ClockMode clock_mode_from_string(std::string_view s) {
    if (s == "live") return ClockMode::Live;
    if (s == "lockstep") return ClockMode::Lockstep;
    throw InputError("unknown mode '" + std::string(s) + "' (expected live or lockstep)");
}

namespace {

class Session;
using SessionPtr = std::shared_ptr<Session>;

struct Hub {
    virtual ~Hub() = default;
    virtual void opened(const SessionPtr& s) = 0;
    virtual void closed(const SessionPtr& s) = 0;
    virtual void received(const SessionPtr& s, std::string text) = 0;
};

class Session : public std::enable_shared_from_this<Session> {
public:
    Session(tcp::socket socket, Hub& hub, std::size_t buffer_limit)
        : ws_(std::move(socket)), hub_(hub), buffer_limit_(buffer_limit) {}

    void run() {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->hub_.opened(self);
            self->read();
        });
    }

    // I/O thread only.
    void send(std::shared_ptr<const std::string> message) {
        if (closed_) return;
        if (outbox_.size() >= buffer_limit_) {
            close();
            return;
        }
        outbox_.push_back(std::move(message));
        if (outbox_.size() == 1) write();
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        outbox_.clear();
        hub_.closed(shared_from_this());
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws_).close();
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->close();
                return;
            }
            std::string text = beast::buffers_to_string(self->buffer_.data());
            self->buffer_.consume(self->buffer_.size());
            self->hub_.received(self, std::move(text));
            self->read();
        });
    }

    void write() {
        ws_.text(true);
        auto message = outbox_.front();
        ws_.async_write(net::buffer(*message), [self = shared_from_this(), message](beast::error_code ec, std::size_t) {
            if (ec) {
                self->close();
                return;
            }
            if (self->outbox_.empty()) return;
            self->outbox_.pop_front();
            if (!self->outbox_.empty()) self->write();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    Hub& hub_;
    std::size_t buffer_limit_;
    std::deque<std::shared_ptr<const std::string>> outbox_;
    bool closed_ = false;
};

}  // namespace

struct Gateway::Impl final : Hub {
    struct Item {
        std::weak_ptr<Session> from;
        std::optional<Inbound> input;  // nullopt: the client just connected
    };

    Impl(GatewayOptions o, std::unique_ptr<Runtime> r) : options(std::move(o)), runtime(std::move(r)), acceptor(ioc) {}

    GatewayOptions options;
    std::unique_ptr<Runtime> runtime;
    net::io_context ioc;
    tcp::acceptor acceptor;
    std::set<SessionPtr> sessions;  // I/O thread only

    std::mutex mutex;
    std::condition_variable wake;
    std::deque<Item> queue;
    bool stopping = false;
    bool stopped = false;
    std::condition_variable done;

    std::vector<Json> outbound;  // engine thread only
    std::chrono::steady_clock::time_point epoch;
    Millis clock_offset = 0;
    Millis last_live = -1;  // live stamps strictly increase so per-track ordering always holds

    std::thread io_thread;
    std::thread engine_thread;

    // --- I/O thread -------------------------------------------------------

    void accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Session>(std::move(socket), *this, options.client_buffer)->run();
            accept();
        });
    }

    void opened(const SessionPtr& s) override {
        sessions.insert(s);
        enqueue(Item{s, std::nullopt}, s);
    }

    void closed(const SessionPtr& s) override { sessions.erase(s); }

    void received(const SessionPtr& s, std::string text) override {
        Inbound input;
        try {
            input = parse_inbound_text(text);
        } catch (const Error& e) {
            s->send(std::make_shared<const std::string>(error_message(to_string(e.code()), e.what()).dump()));
            return;
        }
        enqueue(Item{s, std::move(input)}, s);
    }

    void enqueue(Item item, const SessionPtr& s) {
        {
            std::lock_guard lock(mutex);
            if (item.input && queue.size() >= options.queue_limit) {
                Json err = error_message("backpressure", "event queue full; retry later");
                err["retry"] = true;
                s->send(std::make_shared<const std::string>(err.dump()));
                return;
            }
            queue.push_back(std::move(item));
        }
        wake.notify_one();
    }

    void broadcast(std::vector<Json> messages) {
        std::vector<std::shared_ptr<const std::string>> texts;
        for (const auto& m : messages) texts.push_back(std::make_shared<const std::string>(m.dump()));
        net::post(ioc, [this, texts = std::move(texts)] {
            const auto targets = sessions;  // send() may drop a slow client
            for (const auto& t : texts)
                for (const auto& s : targets) s->send(t);
        });
    }

    void reply(const std::weak_ptr<Session>& to, const Json& message) {
        auto text = std::make_shared<const std::string>(message.dump());
        net::post(ioc, [to, text] {
            if (auto s = to.lock()) s->send(text);
        });
    }

    // --- engine thread ----------------------------------------------------

    Millis wall() const {
        return clock_offset +
               std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch).count();
    }

    void flush() {
        if (outbound.empty()) return;
        broadcast(std::move(outbound));
        outbound.clear();
    }

    void process(Item& item) {
        if (!item.input) {
            reply(item.from, runtime->snapshot());
            return;
        }
        Inbound input = std::move(*item.input);
        const auto* control = std::get_if<ControlInput>(&input);
        if (control && control->action == "snapshot") {
            reply(item.from, runtime->snapshot());
            return;
        }
        if (options.mode == ClockMode::Live) {
            last_live = std::max({wall(), runtime->now(), last_live + 1});
            input = with_timestamp(std::move(input), last_live);
        } else if (!timestamp_of(input)) {
            input = with_timestamp(std::move(input), runtime->now());
        }
        try {
            runtime->submit(input);
        } catch (const Error& e) {
            reply(item.from, error_message(to_string(e.code()), e.what()));
        } catch (const std::exception& e) {
            reply(item.from, error_message("internal", e.what()));
        }
    }

    void engine_loop() {
        for (;;) {
            std::deque<Item> batch;
            {
                std::unique_lock lock(mutex);
                if (options.mode == ClockMode::Live) {
                    wake.wait_for(lock, std::chrono::milliseconds(options.live_tick), [&] { return stopping || !queue.empty(); });
                } else {
                    wake.wait(lock, [&] { return stopping || !queue.empty(); });
                }
                if (stopping) return;
                batch.swap(queue);
            }
            for (auto& item : batch) {
                process(item);
                flush();
            }
            if (options.mode == ClockMode::Live) {
                const Millis now = wall();
                if (auto due = runtime->next_due(); due && *due <= now && now >= runtime->now()) {
                    try {
                        runtime->submit(ControlInput{"tick", now, Json::object()});
                    } catch (const Error&) {
                    }
                    flush();
                }
            }
        }
    }
};

Gateway::Gateway(GatewayOptions options, std::unique_ptr<Runtime> runtime)
    : impl_(std::make_unique<Impl>(std::move(options), std::move(runtime))) {
    if (!impl_->runtime) throw ConfigError("gateway needs a runtime");
    impl_->runtime->set_listener([impl = impl_.get()](const Json& m) { impl->outbound.push_back(m); });
}

Gateway::~Gateway() { stop(); }

unsigned short Gateway::start() {
    auto& i = *impl_;
    const tcp::endpoint endpoint(net::ip::make_address(i.options.host), i.options.port);
    i.acceptor.open(endpoint.protocol());
    i.acceptor.set_option(net::socket_base::reuse_address(true));
    i.acceptor.bind(endpoint);
    i.acceptor.listen(net::socket_base::max_listen_connections);
    i.epoch = std::chrono::steady_clock::now();
    i.clock_offset = i.runtime->now();
    i.accept();
    i.io_thread = std::thread([&i] {
        auto guard = net::make_work_guard(i.ioc);
        i.ioc.run();
    });
    i.engine_thread = std::thread([&i] { i.engine_loop(); });
    return i.acceptor.local_endpoint().port();
}

void Gateway::stop() {
    auto& i = *impl_;
    {
        std::lock_guard lock(i.mutex);
        if (i.stopped) return;
        i.stopping = true;
    }
    i.wake.notify_all();
    if (i.engine_thread.joinable()) i.engine_thread.join();
    net::post(i.ioc, [&i] {
        beast::error_code ec;
        i.acceptor.close(ec);
        const auto all = i.sessions;
        for (const auto& s : all) s->close();
        i.ioc.stop();
    });
    if (i.io_thread.joinable()) i.io_thread.join();
    {
        std::lock_guard lock(i.mutex);
        i.stopped = true;
    }
    i.done.notify_all();
}

void Gateway::wait() {
    auto& i = *impl_;
    std::unique_lock lock(i.mutex);
    i.done.wait(lock, [&] { return i.stopped; });
}

Runtime& Gateway::runtime() { return *impl_->runtime; }

}  // namespace ditto::harness
