#pragma once

#include "ditto/harness/runtime.hpp"

#include <memory>
#include <string>

namespace ditto::harness {

enum class ClockMode { Live, Lockstep };

ClockMode clock_mode_from_string(std::string_view s);

struct GatewayOptions {
    std::string host = "127.0.0.1";
    unsigned short port = 8765;  // 0 picks a free port
    ClockMode mode = ClockMode::Lockstep;
    std::size_t queue_limit = 10000;    // pending inbound messages before clients are told to retry
    std::size_t client_buffer = 4096;   // queued outbound messages before a slow client is dropped
    Millis live_tick = 20;              // how often the live clock fires due timers
};

// WebSocket front end. One I/O thread serves every connection; a single engine thread
// drains the shared inbound queue in arrival order and fans results out to all clients.
// In live mode inputs are stamped with the gateway clock; in lockstep clients supply ts.
class Gateway {
public:
    Gateway(GatewayOptions options, std::unique_ptr<Runtime> runtime);
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    // Binds and starts serving; returns the bound port.
    unsigned short start();
    void stop();
    void wait();  // blocks until stop() is called from another thread

    // Only safe once stopped.
    Runtime& runtime();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ditto::harness
