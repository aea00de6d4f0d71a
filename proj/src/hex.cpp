#include "consensus_lens/hex.hpp"

#include <algorithm>
#include <stdexcept>

namespace clens {

namespace {

int nibble(char c)
{
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

} // namespace

std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

std::vector<std::uint8_t> from_hex(std::string_view text)
{
    if (text.size() % 2 != 0)
        throw std::invalid_argument("hex string has odd length");
    std::vector<std::uint8_t> out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = nibble(text[2 * i]);
        int lo = nibble(text[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw std::invalid_argument("invalid hex character in '" + std::string(text) + "'");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

bytes32 bytes32_from_hex(std::string_view text)
{
    if (text.size() != 64)
        throw std::invalid_argument("expected 64 hex characters, got " + std::to_string(text.size()));
    auto raw = from_hex(text);
    bytes32 out{};
    std::copy(raw.begin(), raw.end(), out.begin());
    return out;
}

} // namespace clens
