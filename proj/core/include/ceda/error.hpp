#pragma once

#include <stdexcept>
#include <string>

namespace ceda {

/// Broad failure class; the CLI maps each kind onto its exit code.
enum class ErrorKind {
    config = 1,
    data = 2,
    computation = 3,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& message) {
    throw Error(ErrorKind::config, message);
}

[[noreturn]] inline void throw_data(const std::string& message) {
    throw Error(ErrorKind::data, message);
}

[[noreturn]] inline void throw_computation(const std::string& message) {
    throw Error(ErrorKind::computation, message);
}

}  // namespace ceda
