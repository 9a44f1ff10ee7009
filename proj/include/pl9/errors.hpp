#pragma once

#include <stdexcept>
#include <string>

namespace pl9 {

// Every recoverable runtime failure of the system is an Error with a kind
// tag. Logical failure (a goal that just fails) is never an exception.
enum class ErrorKind {
    parse,
    unknown_predicate,
    unresolved_function_call,
    instantiation,
    type,
    index,
    domain,
    context,
    unsupported_constraint,
    contract,
    config,
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    static Error parse_at(const std::string& file, int line, int col,
                          const std::string& msg) {
        return Error(ErrorKind::parse,
                     file + ":" + std::to_string(line) + ":" +
                         std::to_string(col) + ": " + msg);
    }

private:
    ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::parse: return "parse_error";
        case ErrorKind::unknown_predicate: return "unknown_predicate";
        case ErrorKind::unresolved_function_call: return "unresolved_function_call";
        case ErrorKind::instantiation: return "instantiation_error";
        case ErrorKind::type: return "type_error";
        case ErrorKind::index: return "index_error";
        case ErrorKind::domain: return "domain_error";
        case ErrorKind::context: return "context_error";
        case ErrorKind::unsupported_constraint: return "unsupported_constraint";
        case ErrorKind::contract: return "contract_violation";
        case ErrorKind::config: return "config_error";
        case ErrorKind::internal: return "internal_error";
    }
    return "error";
}

}  // namespace pl9
