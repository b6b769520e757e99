#pragma once

#include <stdexcept>
#include <string>

namespace calib {

// Invalid configuration, plan-time capability mismatch, bad flags. CLI exit 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unrecoverable backend failure (auth, malformed payload, retry exhaustion
// marked fatal). CLI exit 3.
struct BackendError : std::runtime_error {
    explicit BackendError(const std::string& what, bool fatal = false)
        : std::runtime_error(what), fatal(fatal) {}
    bool fatal;
};

} // namespace calib
