#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dbsa {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// First 8 bytes of SHA-256 as a big-endian integer.
std::uint64_t sha256_u64(std::string_view data);

}  // namespace dbsa
