#pragma once

#include "consensus_lens/protocol.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace clens {

enum class message_type : std::uint8_t { block_proposal, attestation, attestation_forward, final_broadcast };

std::string_view message_type_name(message_type t);
std::optional<message_type> parse_message_type(std::string_view name);

/// One inter-node message. recv_ms is fixed at send time from the latency
/// model; whether it was actually delivered is reported separately.
struct message_record {
    std::uint64_t id = 0;
    message_type type = message_type::block_proposal;
    node_id src;
    node_id dst;
    std::uint64_t payload_bytes = 0;
    std::int64_t send_ms = 0;
    std::int64_t recv_ms = 0;
    slot_index slot = 0;
    std::optional<node_id> origin; // voting committee member, attestations only

    friend bool operator==(const message_record&, const message_record&) = default;
};

enum class fault_action : std::uint8_t { kill_node, revive_node, set_latency_scale };

std::string_view fault_action_name(fault_action a);
std::optional<fault_action> parse_fault_action(std::string_view name);

struct fault_command {
    std::int64_t at_ms = 0;
    fault_action action = fault_action::kill_node;
    std::optional<node_id> target;
    std::optional<double> scale;

    friend bool operator==(const fault_command&, const fault_command&) = default;
};

} // namespace clens
