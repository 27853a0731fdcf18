#pragma once

#include <stdexcept>
#include <string>

namespace streamst {

enum class ErrorKind { Config, Input, Numeric, Io };

/// Exception carrying a machine-readable category used as the CLI exit line.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    const char* category() const noexcept {
        switch (kind_) {
            case ErrorKind::Config: return "config-error";
            case ErrorKind::Input: return "input-error";
            case ErrorKind::Numeric: return "numeric-error";
            case ErrorKind::Io: return "io-error";
        }
        return "error";
    }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::Config, msg}; }
inline Error input_error(const std::string& msg) { return {ErrorKind::Input, msg}; }
inline Error numeric_error(const std::string& msg) { return {ErrorKind::Numeric, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::Io, msg}; }

}  // namespace streamst
