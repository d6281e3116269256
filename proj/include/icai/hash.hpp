#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace icai {

// SHA-256 of the input, lowercase hex.
std::string sha256_hex(std::string_view data);

// First 8 bytes of SHA-256, big-endian. Used to derive per-stage RNG seeds
// and stable pseudo-random decisions from string labels.
std::uint64_t sha256_u64(std::string_view data);

// SHA-256 of a file's contents. Throws ValidationError if unreadable.
std::string sha256_file_hex(const std::string& path);

}  // namespace icai
