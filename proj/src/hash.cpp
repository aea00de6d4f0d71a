#include "consensus_lens/hash.hpp"

#include <openssl/evp.h>

#include <memory>
#include <stdexcept>

namespace clens {

namespace {

struct md_ctx_deleter {
    void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

} // namespace

bytes32 sha256(std::initializer_list<std::span<const std::uint8_t>> parts)
{
    std::unique_ptr<EVP_MD_CTX, md_ctx_deleter> ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256: digest init failed");
    for (auto part : parts)
        if (!part.empty() && EVP_DigestUpdate(ctx.get(), part.data(), part.size()) != 1)
            throw std::runtime_error("sha256: digest update failed");
    bytes32 out{};
    unsigned len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), out.data(), &len) != 1 || len != out.size())
        throw std::runtime_error("sha256: digest final failed");
    return out;
}

bytes32 sha256(std::span<const std::uint8_t> data)
{
    return sha256({data});
}

std::array<std::uint8_t, 8> be64(std::uint64_t value)
{
    std::array<std::uint8_t, 8> out{};
    for (int i = 7; i >= 0; --i) {
        out[i] = static_cast<std::uint8_t>(value & 0xff);
        value >>= 8;
    }
    return out;
}

std::uint64_t read_be64(std::span<const std::uint8_t, 8> bytes)
{
    std::uint64_t v = 0;
    for (auto b : bytes) v = (v << 8) | b;
    return v;
}

hash_stream::hash_stream(const bytes32& key, std::string_view domain)
{
    prefix_.assign(key.begin(), key.end());
    auto d = as_bytes(domain);
    prefix_.insert(prefix_.end(), d.begin(), d.end());
}

std::uint64_t hash_stream::next_u64()
{
    if (offset_ == buffer_.size()) {
        auto ctr = be64(block_++);
        buffer_ = sha256({prefix_, ctr});
        offset_ = 0;
    }
    auto word = read_be64(std::span<const std::uint8_t, 8>(buffer_.data() + offset_, 8));
    offset_ += 8;
    ++consumed_;
    return word;
}

std::uint64_t hash_stream::uniform(std::uint64_t bound)
{
    if (bound == 0) throw std::invalid_argument("hash_stream::uniform: bound must be positive");
    if (bound == 1) return 0;
    // 2^64 mod bound, computed without overflow.
    const std::uint64_t rem = (0 - bound) % bound;
    const std::uint64_t limit = rem == 0 ? 0 : 0 - rem; // 0 means the full range is usable
    for (;;) {
        auto x = next_u64();
        if (limit == 0 || x < limit) return x % bound;
    }
}

} // namespace clens
