#pragma once

#include "consensus_lens/hex.hpp"

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>
#include <algorithm>

namespace clens {

/// SHA-256 over the concatenation of `parts`.
bytes32 sha256(std::initializer_list<std::span<const std::uint8_t>> parts);
bytes32 sha256(std::span<const std::uint8_t> data);

/// 8-byte big-endian encoding used for every integer fed into a hash.
std::array<std::uint8_t, 8> be64(std::uint64_t value);
std::uint64_t read_be64(std::span<const std::uint8_t, 8> bytes);

inline std::span<const std::uint8_t> as_bytes(std::string_view s)
{
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Counter-mode pseudo-random stream.
///
/// Block j is SHA-256(key || domain || be64(j)); every block yields four
/// big-endian 64-bit words, consumed in order. Distinct domain strings give
/// independent streams over the same key, so adding a consumer never
/// perturbs another consumer's draws.
class hash_stream {
public:
    hash_stream(const bytes32& key, std::string_view domain);

    std::uint64_t next_u64();

    /// Uniform integer in [0, bound) by rejection sampling on the top of the
    /// 64-bit range. bound == 1 returns 0 without consuming a word.
    std::uint64_t uniform(std::uint64_t bound);

    std::uint64_t words_consumed() const { return consumed_; }

private:
    std::vector<std::uint8_t> prefix_;
    std::uint64_t block_ = 0;
    bytes32 buffer_{};
    unsigned offset_ = 32;
    std::uint64_t consumed_ = 0;
};

/// Forward Fisher-Yates: for i in [0, min(count, n-1)), swap a[i] with
/// a[i + uniform(n - i)]. After the call the first `count` positions hold a
/// uniform random ordered selection.
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t count, hash_stream& rng)
{
    const std::size_t n = items.size();
    if (n < 2) return;
    const std::size_t limit = std::min(count, n - 1);
    for (std::size_t i = 0; i < limit; ++i) {
        auto j = i + static_cast<std::size_t>(rng.uniform(n - i));
        std::swap(items[i], items[j]);
    }
}

} // namespace clens
