#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ditto {

// Logical time in milliseconds. Scenario runs never read the wall clock.
using Millis = std::int64_t;

using TrackId = std::string;
using TagId = std::string;

enum class ErrorCode {
    Input,
    Ordering,
    State,
    Validation,
    Config,
    Transport,
    Schema,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(ErrorCode::Input, what) {}
};

class OrderingError : public Error {
public:
    explicit OrderingError(const std::string& what) : Error(ErrorCode::Ordering, what) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& what) : Error(ErrorCode::State, what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCode::Validation, what) {}
};

}  // namespace ditto
