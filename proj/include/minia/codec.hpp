#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace minia {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ProtocolViolation on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Lower-case hex SHA-256 of the input.
std::string sha256_hex(std::string_view data);

}  // namespace minia
