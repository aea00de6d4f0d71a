#include "consensus_lens/hash.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <map>
#include <numeric>

using namespace clens;

TEST_CASE("sha256 known vectors")
{
    CHECK(to_hex(sha256(as_bytes(""))) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(to_hex(sha256(as_bytes("abc"))) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    // Split input hashes like the concatenation.
    CHECK(sha256({as_bytes("a"), as_bytes("bc")}) == sha256(as_bytes("abc")));
}

TEST_CASE("hex encoding")
{
    std::array<std::uint8_t, 3> raw{0x00, 0xab, 0xff};
    CHECK(to_hex(raw) == "00abff");
    CHECK(from_hex("00ABff") == std::vector<std::uint8_t>{0x00, 0xab, 0xff});
    CHECK_THROWS_AS(from_hex("abc"), std::invalid_argument);
    CHECK_THROWS_AS(from_hex("zz"), std::invalid_argument);
    CHECK_THROWS_AS(bytes32_from_hex("00"), std::invalid_argument);

    auto s = test::reference_seed();
    CHECK(bytes32_from_hex(to_hex(s.bytes)) == s.bytes);
}

TEST_CASE("be64 round trip")
{
    auto b = be64(0x0102030405060708ull);
    CHECK(b == std::array<std::uint8_t, 8>{1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(read_be64(b) == 0x0102030405060708ull);
}

TEST_CASE("hash_stream first word matches reference")
{
    hash_stream rng(test::reference_seed().bytes, "roles");
    CHECK(rng.next_u64() == 14396646659227605727ull);
    CHECK(rng.words_consumed() == 1);
}

TEST_CASE("hash_stream domains are independent and replayable")
{
    auto key = test::reference_seed().bytes;
    hash_stream a(key, "jitter"), b(key, "jitter"), c(key, "roles");
    bool differs = false;
    for (int i = 0; i < 20; ++i) {
        auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs |= x != c.next_u64();
    }
    CHECK(differs);
}

TEST_CASE("uniform stays in range and does not consume for bound 1")
{
    hash_stream rng(test::reference_seed().bytes, "u");
    CHECK(rng.uniform(1) == 0);
    CHECK(rng.words_consumed() == 0);
    std::map<std::uint64_t, int> hist;
    for (int i = 0; i < 6000; ++i) ++hist[rng.uniform(6)];
    CHECK(hist.size() == 6);
    for (auto [v, c] : hist) {
        CHECK(v < 6);
        CHECK(c > 800);
        CHECK(c < 1200);
    }
    CHECK_THROWS(rng.uniform(0));
}

TEST_CASE("partial_shuffle is a permutation")
{
    hash_stream rng(test::reference_seed().bytes, "perm");
    for (std::size_t n : {1u, 2u, 7u, 30u}) {
        std::vector<int> v(n);
        std::iota(v.begin(), v.end(), 0);
        partial_shuffle(std::span<int>(v), n, rng);
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == static_cast<int>(i));
    }
}
