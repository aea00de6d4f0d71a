#pragma once

#include "consensus_lens/protocol.hpp"

namespace clens {

/// Aggregatable signature interface. combine must be commutative and
/// associative with identity() as neutral element.
class signature_scheme {
public:
    virtual ~signature_scheme() = default;

    virtual std::string_view name() const = 0;
    virtual bytes32 sign(const node_key& key, const block_digest& digest) const = 0;
    virtual bytes32 combine(const bytes32& a, const bytes32& b) const = 0;
    virtual bytes32 identity() const = 0;

    virtual bool verify(const node_key& key, const block_digest& digest, const bytes32& tag) const
    {
        return sign(key, digest) == tag;
    }
};

/// tag = SHA-256(key || digest), combine = byte-wise XOR.
///
/// Not a secure aggregate signature: XOR cancels and anyone holding the keys
/// can forge. It keeps determinism, commutativity and signer-set binding,
/// which is all the simulator checks.
class xor_sha256_scheme final : public signature_scheme {
public:
    std::string_view name() const override { return "xor-sha256"; }
    bytes32 sign(const node_key& key, const block_digest& digest) const override;
    bytes32 combine(const bytes32& a, const bytes32& b) const override;
    bytes32 identity() const override { return {}; }
};

} // namespace clens
