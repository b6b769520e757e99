#include "calib/decode.hpp"

#include <cstdio>

namespace calib {

std::string DecodeParams::canonical() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "t=%.17g;p=%.17g;m=%d", temperature, top_p, max_tokens);
    return buf;
}

} // namespace calib
