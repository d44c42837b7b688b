#pragma once

#include <stdexcept>
#include <string>

namespace wr {

// Exit-code families used by the CLI: schema problems map to 3, numeric ones to 4.
enum class ErrorKind { domain, config, schema, input, numeric, separation, degenerate, usage };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error(ErrorKind::schema, w) {}
};
struct InputError : Error {
    explicit InputError(const std::string& w) : Error(ErrorKind::input, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorKind::numeric, w) {}
};
struct SeparationError : Error {
    explicit SeparationError(const std::string& w) : Error(ErrorKind::separation, w) {}
};
struct DegenerateError : Error {
    explicit DegenerateError(const std::string& w) : Error(ErrorKind::degenerate, w) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& w) : Error(ErrorKind::usage, w) {}
};

}  // namespace wr
