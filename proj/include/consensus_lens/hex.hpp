#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clens {

using bytes32 = std::array<std::uint8_t, 32>;

// Lowercase, no prefix.
std::string to_hex(std::span<const std::uint8_t> bytes);

// Accepts upper or lower case; throws std::invalid_argument on odd length or
// non-hex characters.
std::vector<std::uint8_t> from_hex(std::string_view text);

// Exactly 64 hex characters.
bytes32 bytes32_from_hex(std::string_view text);

} // namespace clens
