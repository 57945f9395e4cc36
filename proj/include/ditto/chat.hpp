#pragma once

#include "ditto/common.hpp"

#include <chrono>
#include <memory>
#include <string>
#include <vector>

namespace ditto::chat {

struct Message {
    std::string role;  // system | user | assistant
    std::string content;
};

struct Request {
    std::string model;
    std::vector<Message> messages;
};

class TransportError : public Error {
public:
    explicit TransportError(const std::string& what) : Error(ErrorCode::Transport, what) {}
};

// A chat-completion style service. Implementations must return or throw within `timeout`.
class Client {
public:
    virtual ~Client() = default;
    // Throws TransportError on timeout, connection failure or a malformed reply.
    virtual std::string complete(const Request& request, std::chrono::milliseconds timeout) = 0;
};

// POSTs {"model", "messages"} to an http:// endpoint and reads choices[0].message.content.
// The call runs on a detached worker so a slow server can never hold the caller past the
// deadline; a reply that lands after it is dropped.
class HttpClient final : public Client {
public:
    explicit HttpClient(std::string endpoint);
    std::string complete(const Request& request, std::chrono::milliseconds timeout) override;
    const std::string& endpoint() const { return endpoint_; }

private:
    std::string endpoint_;
    std::string host_;  // scheme://host:port
    std::string path_;
};

std::string request_body(const Request& request);
// Extracts the assistant content from a chat-completion response body.
std::string parse_completion(const std::string& body);

// Reads an endpoint from the environment; nullptr when unset or empty.
std::shared_ptr<Client> client_from_env(const char* variable);

inline constexpr const char* kResponderEndpointEnv = "DITTO_RESPONDER_ENDPOINT";
inline constexpr const char* kDecisionEndpointEnv = "DITTO_DECISION_ENDPOINT";

}  // namespace ditto::chat
