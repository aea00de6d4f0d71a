#include "consensus_lens/signature.hpp"

namespace clens {

bytes32 xor_sha256_scheme::sign(const node_key& key, const block_digest& digest) const
{
    return sha256({key.bytes, digest.bytes});
}

bytes32 xor_sha256_scheme::combine(const bytes32& a, const bytes32& b) const
{
    bytes32 out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] ^ b[i];
    return out;
}

const signature_scheme& default_scheme()
{
    static const xor_sha256_scheme scheme;
    return scheme;
}

} // namespace clens
