#pragma once

#include <stdexcept>
#include <string>

namespace socbal {

inline constexpr const char* kVersion = "0.1.0";

// Base error for all failures raised by the library. The C API maps these
// to status codes; messages are plain text suitable for end users.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace socbal
