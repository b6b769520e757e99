#pragma once

#include <optional>
#include <string>

namespace calib {

struct DecodeParams {
    double temperature = 0.0;  // greedy decoding by default, for reproducible runs
    double top_p = 1.0;
    int max_tokens = 512;

    bool operator==(const DecodeParams&) const = default;
    // Stable serialization, part of the cache key.
    std::string canonical() const;
};

// Per-request overrides; unset fields fall back to the backend defaults.
struct DecodeOverrides {
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<int> max_tokens;

    DecodeParams apply(DecodeParams base) const {
        if (temperature) base.temperature = *temperature;
        if (top_p) base.top_p = *top_p;
        if (max_tokens) base.max_tokens = *max_tokens;
        return base;
    }
};

} // namespace calib
