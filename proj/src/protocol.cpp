#include "consensus_lens/protocol.hpp"
#include "consensus_lens/signature.hpp"

#include <algorithm>
#include <bit>
#include <charconv>

namespace clens {

entropy_proof entropy_step(const seed& prev, std::uint64_t iterations)
{
    seed out = prev;
    for (std::uint64_t i = 0; i < iterations; ++i) out.bytes = sha256(out.bytes);
    return {prev, iterations, out};
}

bool verify_entropy(const entropy_proof& proof)
{
    return entropy_step(proof.input, proof.iterations).output == proof.output;
}

seed derive_slot_seed(const seed& beacon, slot_index slot)
{
    auto ctr = be64(slot);
    return {sha256({beacon.bytes, ctr})};
}

std::string_view role_name(role r)
{
    switch (r) {
    case role::validator: return "Validator";
    case role::committee: return "Committee";
    case role::block_producer: return "BlockProducer";
    }
    return "Unknown";
}

role_registry::role_registry()
    : roles_{{"Validator", "blue"}, {"Committee", "violet"}, {"BlockProducer", "green"}}
{
}

std::size_t role_registry::add(std::string name, std::string color)
{
    if (name.empty()) throw invalid_configuration("role name must not be empty");
    if (find(name)) throw invalid_configuration("role '" + name + "' already registered");
    roles_.push_back({std::move(name), std::move(color)});
    return roles_.size() - 1;
}

std::optional<std::size_t> role_registry::find(std::string_view name) const
{
    for (std::size_t i = 0; i < roles_.size(); ++i)
        if (roles_[i].name == name) return i;
    return std::nullopt;
}

role role_assignment::role_of(node_id node) const
{
    if (node == producer) return role::block_producer;
    if (std::binary_search(committee.begin(), committee.end(), node)) return role::committee;
    return role::validator;
}

std::size_t default_committee_size(std::size_t n)
{
    if (n <= 1) return 0;
    return std::min((n + 2) / 3, n - 1);
}

role_assignment elect_roles(const seed& slot_seed, std::span<const node_id> validator_set,
                            std::size_t committee_size, slot_index slot)
{
    const auto n = validator_set.size();
    if (n == 0) throw invalid_configuration("validator set is empty");
    if (committee_size >= n)
        throw invalid_configuration("committee_size " + std::to_string(committee_size) +
                                    " must be at most n - 1 = " + std::to_string(n - 1));

    std::vector<node_id> order(validator_set.begin(), validator_set.end());
    std::sort(order.begin(), order.end());
    if (std::adjacent_find(order.begin(), order.end()) != order.end())
        throw invalid_configuration("validator set contains duplicate node ids");

    hash_stream rng(slot_seed.bytes, "roles");
    partial_shuffle(std::span<node_id>(order), n, rng);

    role_assignment out;
    out.slot = slot;
    out.producer = order.front();
    out.committee.assign(order.begin() + 1, order.begin() + 1 + static_cast<std::ptrdiff_t>(committee_size));
    out.validators.assign(order.begin() + 1 + static_cast<std::ptrdiff_t>(committee_size), order.end());
    std::sort(out.committee.begin(), out.committee.end());
    std::sort(out.validators.begin(), out.validators.end());
    return out;
}

node_key derive_node_key(node_id node)
{
    auto idx = be64(node.index);
    return {sha256({as_bytes("consensus-lens/node-key"), idx})};
}

std::vector<node_key> derive_node_keys(std::size_t n)
{
    std::vector<node_key> keys;
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i) keys.push_back(derive_node_key(node_id(static_cast<std::uint32_t>(i))));
    return keys;
}

void signer_bitmap::set(std::size_t i, bool on)
{
    if (i >= size_) throw std::out_of_range("signer index outside validator set");
    auto mask = static_cast<std::uint8_t>(1u << (i % 8));
    if (on)
        bytes_[i / 8] |= mask;
    else
        bytes_[i / 8] &= static_cast<std::uint8_t>(~mask);
}

std::size_t signer_bitmap::count() const
{
    std::size_t c = 0;
    for (auto b : bytes_) c += static_cast<std::size_t>(std::popcount(b));
    return c;
}

std::vector<node_id> signer_bitmap::signers() const
{
    std::vector<node_id> out;
    for (std::size_t i = 0; i < size_; ++i)
        if (test(i)) out.emplace_back(static_cast<std::uint32_t>(i));
    return out;
}

signer_bitmap signer_bitmap::from_hex(std::string_view text, std::size_t validator_count)
{
    signer_bitmap out(validator_count);
    auto raw = clens::from_hex(text);
    if (raw.size() != out.bytes_.size())
        throw std::invalid_argument("signer bitmap length does not match validator count");
    out.bytes_ = std::move(raw);
    // Padding bits beyond validator_count must be clear.
    for (std::size_t i = validator_count; i < out.bytes_.size() * 8; ++i)
        if ((out.bytes_[i / 8] >> (i % 8)) & 1u)
            throw std::invalid_argument("signer bitmap has bits set beyond the validator set");
    return out;
}

vote sign_vote(slot_index slot, node_id voter, const node_key& key, const block_digest& digest,
               const signature_scheme& scheme)
{
    return {slot, voter, digest, scheme.sign(key, digest)};
}

bool verify_vote(const vote& v, const node_key& key, const signature_scheme& scheme)
{
    return scheme.verify(key, v.digest, v.tag);
}

aggregate_vote aggregate_votes(std::span<const vote> votes, std::size_t validator_count,
                               const signature_scheme& scheme)
{
    if (votes.empty()) throw aggregation_error("cannot aggregate an empty vote set");
    const auto& first = votes.front();
    aggregate_vote agg{first.digest, signer_bitmap(validator_count), scheme.identity()};
    for (const auto& v : votes) {
        if (v.digest != first.digest) throw aggregation_error("votes reference different block digests");
        if (v.slot != first.slot) throw aggregation_error("votes reference different slots");
        if (v.voter.index >= validator_count)
            throw aggregation_error("voter " + std::to_string(v.voter.index) + " outside validator set");
        if (agg.signers.test(v.voter.index))
            throw aggregation_error("duplicate vote from node " + std::to_string(v.voter.index));
        agg.signers.set(v.voter.index);
        agg.tag = scheme.combine(agg.tag, v.tag);
    }
    return agg;
}

bool verify_aggregate(const aggregate_vote& agg, const block_digest& digest, std::span<const node_key> keys,
                      const signature_scheme& scheme)
{
    if (agg.digest != digest || agg.signers.size() != keys.size()) return false;
    auto expected = scheme.identity();
    for (auto signer : agg.signers.signers())
        expected = scheme.combine(expected, scheme.sign(keys[signer.index], digest));
    return expected == agg.tag;
}

std::size_t quorum::threshold(std::size_t committee_size) const
{
    const auto num = static_cast<std::uint64_t>(numerator) * committee_size;
    return static_cast<std::size_t>((num + denominator - 1) / denominator);
}

void quorum::validate() const
{
    if (denominator == 0) throw invalid_configuration("quorum denominator must be positive");
    if (numerator == 0 || numerator > denominator)
        throw invalid_configuration("quorum must lie in (0, 1], got " + str());
}

quorum quorum::parse(std::string_view text)
{
    auto slash = text.find('/');
    if (slash == std::string_view::npos) throw invalid_configuration("quorum must be written as 'num/den'");
    quorum q{};
    auto parse_part = [&](std::string_view part, std::uint32_t& out) {
        auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
        if (ec != std::errc{} || ptr != part.data() + part.size() || part.empty())
            throw invalid_configuration("malformed quorum '" + std::string(text) + "'");
    };
    parse_part(text.substr(0, slash), q.numerator);
    parse_part(text.substr(slash + 1), q.denominator);
    q.validate();
    return q;
}

slot_outcome finalize_slot(slot_index slot, const block_digest& digest, std::span<const vote> votes,
                           std::size_t committee_size, const quorum& q, std::size_t validator_count,
                           const signature_scheme& scheme)
{
    slot_outcome out;
    out.slot = slot;
    out.vote_count = votes.size();
    out.threshold = q.threshold(committee_size);
    if (out.vote_count < out.threshold) {
        out.kind = outcome_kind::skip;
        return out;
    }
    out.kind = outcome_kind::finalized;
    out.digest = digest;
    if (votes.empty())
        out.aggregate = aggregate_vote{digest, signer_bitmap(validator_count), scheme.identity()};
    else
        out.aggregate = aggregate_votes(votes, validator_count, scheme);
    return out;
}

block_digest make_block_digest(const seed& slot_seed, slot_index slot, node_id producer)
{
    auto s = be64(slot);
    auto p = be64(producer.index);
    return {sha256({as_bytes("consensus-lens/block"), slot_seed.bytes, s, p})};
}

} // namespace clens
