#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mspt {

// Error taxonomy, mapped to CLI exit codes: ConfigError -> 2, DataError -> 3,
// NumericError -> 4. Anything else is an internal error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Shape/contract mismatches between tensors or model pieces.
struct DimensionError : ConfigError {
    using ConfigError::ConfigError;
};

// Broken files, malformed manifests, impossible dataset states.
struct DataError : Error {
    using Error::Error;
};

// A persisted cache whose config digest does not match the requested config.
struct StaleCacheError : ConfigError {
    using ConfigError::ConfigError;
};

// NaN losses and other runtime numeric failures.
struct NumericError : Error {
    using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// 16-hex-char digest of a canonical string (nlohmann dumps objects with
// sorted keys, so digesting a dump() is stable).
std::string digest_hex(std::string_view canonical);

std::string shape_str(std::size_t rows, std::size_t cols);

} // namespace mspt
