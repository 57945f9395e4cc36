#include "ditto/chat.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <future>
#include <thread>

namespace ditto::chat {

namespace {

struct Outcome {
    bool ok = false;
    std::string value;
};

}  // namespace

HttpClient::HttpClient(std::string endpoint) : endpoint_(std::move(endpoint)) {
    const std::string scheme = "http://";
    if (endpoint_.rfind(scheme, 0) != 0) throw InputError("only http:// endpoints are supported: " + endpoint_);
    const auto slash = endpoint_.find('/', scheme.size());
    host_ = endpoint_.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : endpoint_.substr(slash);
}

std::string request_body(const Request& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body{{"messages", messages}};
    if (!request.model.empty()) body["model"] = request.model;
    return body.dump();
}

std::string parse_completion(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw TransportError(std::string("unparseable completion: ") + e.what());
    }
    try {
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw TransportError("completion content is not a string");
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed completion: ") + e.what());
    }
}

std::string HttpClient::complete(const Request& request, std::chrono::milliseconds timeout) {
    auto promise = std::make_shared<std::promise<Outcome>>();
    auto future = promise->get_future();
    std::thread([promise, host = host_, path = path_, body = request_body(request), timeout] {
        Outcome out;
        try {
            httplib::Client cli(host);
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
            const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
            cli.set_connection_timeout(secs.count(), usecs.count());
            cli.set_read_timeout(secs.count(), usecs.count());
            cli.set_write_timeout(secs.count(), usecs.count());
            auto res = cli.Post(path, body, "application/json");
            if (!res) {
                out.value = "transport failure: " + httplib::to_string(res.error());
            } else if (res->status != 200) {
                out.value = "endpoint returned HTTP " + std::to_string(res->status);
            } else {
                out.ok = true;
                out.value = res->body;
            }
        } catch (const std::exception& e) {
            out.value = e.what();
        }
        promise->set_value(std::move(out));
    }).detach();

    if (future.wait_for(timeout) != std::future_status::ready) {
        throw TransportError("no reply from " + endpoint_ + " within " + std::to_string(timeout.count()) + " ms");
    }
    Outcome out = future.get();
    if (!out.ok) throw TransportError(out.value);
    return parse_completion(out.value);
}

std::shared_ptr<Client> client_from_env(const char* variable) {
    const char* value = std::getenv(variable);
    if (!value || !*value) return nullptr;
    return std::make_shared<HttpClient>(value);
}

}  // namespace ditto::chat
