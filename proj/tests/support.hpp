#pragma once

#include "ditto/chat.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace ditto::fixtures {

inline std::filesystem::path source_dir() { return DITTO_SOURCE_DIR; }
inline std::filesystem::path scenario_path(const std::string& name) { return source_dir() / "scenarios" / (name + ".json"); }
inline std::filesystem::path data_path(const std::string& name) { return source_dir() / "tests" / "data" / name; }

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "ditto-tests";
    std::filesystem::create_directories(dir);
    auto path = dir / name;
    std::filesystem::remove(path);
    return path;
}

// In-process chat client: answers through a callback and records every request.
class FakeClient final : public chat::Client {
public:
    using Handler = std::function<std::string(const chat::Request&)>;
    explicit FakeClient(Handler handler) : handler_(std::move(handler)) {}
    std::string complete(const chat::Request& request, std::chrono::milliseconds) override {
        requests.push_back(request);
        return handler_(request);
    }
    std::vector<chat::Request> requests;

private:
    Handler handler_;
};

inline std::shared_ptr<FakeClient> replying(std::string text) {
    return std::make_shared<FakeClient>([text](const chat::Request&) { return text; });
}

inline std::shared_ptr<FakeClient> failing(std::string why = "connection refused") {
    return std::make_shared<FakeClient>([why](const chat::Request&) -> std::string { throw chat::TransportError(why); });
}

}  // namespace ditto::fixtures
