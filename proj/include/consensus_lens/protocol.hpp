#pragma once

#include "consensus_lens/hash.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace clens {

/// Thrown when parameters violate a precondition of the protocol or overlay
/// (committee larger than n - 1, k out of range, bad quorum ...).
class invalid_configuration : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using slot_index = std::uint64_t;

struct node_id {
    std::uint32_t index = 0;

    constexpr node_id() = default;
    constexpr explicit node_id(std::uint32_t i) : index(i) {}
    friend constexpr auto operator<=>(node_id, node_id) = default;
};

struct seed {
    bytes32 bytes{};

    std::string hex() const { return to_hex(bytes); }
    static seed from_hex(std::string_view text) { return {bytes32_from_hex(text)}; }
    friend bool operator==(const seed&, const seed&) = default;
};

struct block_digest {
    bytes32 bytes{};

    std::string hex() const { return to_hex(bytes); }
    friend bool operator==(const block_digest&, const block_digest&) = default;
};

// ---------------------------------------------------------------------------
// Entropy beacon

/// Iterated hash chain standing in for a verifiable delay function.
struct entropy_proof {
    seed input;
    std::uint64_t iterations = 0;
    seed output;

    friend bool operator==(const entropy_proof&, const entropy_proof&) = default;
};

entropy_proof entropy_step(const seed& prev, std::uint64_t iterations);

/// Recomputes the chain; no succinct proof.
bool verify_entropy(const entropy_proof& proof);

/// SHA-256(beacon || be64(slot)).
seed derive_slot_seed(const seed& beacon, slot_index slot);

// ---------------------------------------------------------------------------
// Roles

enum class role : std::uint8_t { validator, committee, block_producer };

std::string_view role_name(role r);

struct role_style {
    std::string name;
    std::string color;
};

/// Display names and colors for roles. The three built-ins always occupy the
/// first slots; user roles are appended and must not reuse an existing name.
class role_registry {
public:
    role_registry();

    /// Returns the index of the new role. Throws invalid_configuration when
    /// the name is empty or already registered.
    std::size_t add(std::string name, std::string color);

    const role_style& style(role r) const { return roles_[static_cast<std::size_t>(r)]; }
    std::span<const role_style> all() const { return roles_; }
    std::optional<std::size_t> find(std::string_view name) const;

private:
    std::vector<role_style> roles_;
};

struct role_assignment {
    slot_index slot = 0;
    node_id producer;
    std::vector<node_id> committee;  // ascending
    std::vector<node_id> validators; // ascending

    role role_of(node_id node) const;
    std::size_t size() const { return 1 + committee.size() + validators.size(); }
    friend bool operator==(const role_assignment&, const role_assignment&) = default;
};

/// Seeded Fisher-Yates over the validator set in NodeId order, drawing from
/// hash_stream(slot_seed, "roles"). Position 0 becomes the producer,
/// positions 1..committee_size the committee, the rest validators.
role_assignment elect_roles(const seed& slot_seed,
                            std::span<const node_id> validator_set,
                            std::size_t committee_size,
                            slot_index slot = 0);

/// ceil(n / 3) capped at n - 1.
std::size_t default_committee_size(std::size_t n);

// ---------------------------------------------------------------------------
// Votes

/// Per-node signing key. In the stand-in scheme the public key is the same
/// value; a pairing-based scheme would derive a distinct public key.
struct node_key {
    bytes32 bytes{};
    friend bool operator==(const node_key&, const node_key&) = default;
};

/// SHA-256("consensus-lens/node-key" || be64(index)).
node_key derive_node_key(node_id node);
std::vector<node_key> derive_node_keys(std::size_t n);

struct vote {
    slot_index slot = 0;
    node_id voter;
    block_digest digest;
    bytes32 tag{};

    friend bool operator==(const vote&, const vote&) = default;
};

/// Bitmap over the validator set, bit i at byte i/8, LSB first.
class signer_bitmap {
public:
    signer_bitmap() = default;
    explicit signer_bitmap(std::size_t validator_count)
        : size_(validator_count), bytes_((validator_count + 7) / 8, 0) {}

    std::size_t size() const { return size_; }
    bool test(std::size_t i) const { return (bytes_.at(i / 8) >> (i % 8)) & 1u; }
    void set(std::size_t i, bool on = true);
    std::size_t count() const;
    std::vector<node_id> signers() const;

    std::string hex() const { return to_hex(bytes_); }
    static signer_bitmap from_hex(std::string_view text, std::size_t validator_count);

    friend bool operator==(const signer_bitmap&, const signer_bitmap&) = default;

private:
    std::size_t size_ = 0;
    std::vector<std::uint8_t> bytes_;
};

struct aggregate_vote {
    block_digest digest;
    signer_bitmap signers;
    bytes32 tag{};

    friend bool operator==(const aggregate_vote&, const aggregate_vote&) = default;
};

class aggregation_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class signature_scheme;
const signature_scheme& default_scheme();

vote sign_vote(slot_index slot, node_id voter, const node_key& key, const block_digest& digest,
               const signature_scheme& scheme = default_scheme());

bool verify_vote(const vote& v, const node_key& key, const signature_scheme& scheme = default_scheme());

/// Throws aggregation_error on an empty set, mixed digests or slots, a
/// duplicate voter, or a voter outside [0, validator_count).
aggregate_vote aggregate_votes(std::span<const vote> votes, std::size_t validator_count,
                               const signature_scheme& scheme = default_scheme());

bool verify_aggregate(const aggregate_vote& agg, const block_digest& digest,
                      std::span<const node_key> keys,
                      const signature_scheme& scheme = default_scheme());

// ---------------------------------------------------------------------------
// Finalization

struct quorum {
    std::uint32_t numerator = 2;
    std::uint32_t denominator = 3;

    /// ceil(numerator * committee_size / denominator), integer arithmetic.
    std::size_t threshold(std::size_t committee_size) const;
    void validate() const;
    std::string str() const { return std::to_string(numerator) + "/" + std::to_string(denominator); }
    static quorum parse(std::string_view text);

    friend bool operator==(const quorum&, const quorum&) = default;
};

enum class outcome_kind : std::uint8_t { finalized, skip };

struct slot_outcome {
    slot_index slot = 0;
    outcome_kind kind = outcome_kind::skip;
    std::optional<block_digest> digest;
    std::optional<aggregate_vote> aggregate;
    std::size_t vote_count = 0;
    std::size_t threshold = 0;

    friend bool operator==(const slot_outcome&, const slot_outcome&) = default;
};

/// Finalized with an aggregate iff votes.size() >= q.threshold(committee_size).
/// A zero-vote finalization (empty committee) carries an empty aggregate with
/// the combine identity as tag.
slot_outcome finalize_slot(slot_index slot, const block_digest& digest, std::span<const vote> votes,
                           std::size_t committee_size, const quorum& q, std::size_t validator_count,
                           const signature_scheme& scheme = default_scheme());

/// Candidate block identity: SHA-256("consensus-lens/block" || slot_seed ||
/// be64(slot) || be64(producer)). Block contents are not modelled.
block_digest make_block_digest(const seed& slot_seed, slot_index slot, node_id producer);

} // namespace clens
