#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace calib {

// SHA-256 of the input bytes, lowercase hex. Used for content-addressed
// cache entries and config/plan digests.
std::string sha256_hex(std::string_view data);

// FNV-1a 64-bit. Used to derive per-subtask shuffle seeds, not for identity.
std::uint64_t fnv1a64(std::string_view data);

} // namespace calib
