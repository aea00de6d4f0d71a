#pragma once

#include "consensus_lens/config.hpp"
#include "consensus_lens/overlay.hpp"
#include "consensus_lens/records.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clens {

using json = nlohmann::ordered_json;

enum class event_kind : std::uint8_t { role_assignment, topology, message, slot_outcome, fault, counter };

std::string_view event_kind_name(event_kind k);
std::optional<event_kind> parse_event_kind(std::string_view name);

struct telemetry_event {
    std::int64_t ts_ms = 0;
    std::uint64_t seq = 0;
    event_kind kind = event_kind::counter;
    json body;

    bool precedes(const telemetry_event& other) const
    {
        return ts_ms < other.ts_ms || (ts_ms == other.ts_ms && seq < other.seq);
    }
};

/// Malformed line or a body that does not match its kind's schema.
class schema_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One JSONL line (no trailing newline) with keys ts_ms, seq, kind, body.
std::string to_jsonl(const telemetry_event& ev);
json to_json(const telemetry_event& ev);

/// Parses and schema-checks one line.
telemetry_event parse_event(std::string_view line);
telemetry_event event_from_json(const json& j);
void validate_body(event_kind kind, const json& body);

// ---------------------------------------------------------------------------
// Bodies. Each encoder has a matching decoder; decoders throw schema_error.

/// Everything emitted at SlotStart about roles and the entropy that chose them.
struct role_event {
    role_assignment roles;
    entropy_proof beacon;
    seed slot_seed;
    std::size_t committee_size = 0;
    std::int64_t slot_start_ms = 0;
    std::vector<node_id> dead;

    friend bool operator==(const role_event&, const role_event&) = default;
};

json encode(const role_event& ev);
role_event decode_role_event(const json& body);

json encode(const topology_snapshot& topo, std::size_t max_iters);
topology_snapshot decode_topology(const json& body);

json encode(const message_record& msg);
message_record decode_message(const json& body);

enum class skip_reason : std::uint8_t { none, producer_dead, sub_quorum };
std::string_view skip_reason_name(skip_reason r);

struct outcome_event {
    slot_outcome outcome;
    node_id producer;
    std::size_t committee_size = 0;
    skip_reason reason = skip_reason::none;

    friend bool operator==(const outcome_event&, const outcome_event&) = default;
};

json encode(const outcome_event& ev);
outcome_event decode_outcome(const json& body);

enum class fault_source : std::uint8_t { schedule, control };

struct fault_event {
    fault_command command;
    bool effective = false;
    fault_source source = fault_source::schedule;
    slot_index slot = 0;

    friend bool operator==(const fault_event&, const fault_event&) = default;
};

json encode(const fault_event& ev);
fault_event decode_fault(const json& body);

json encode(const sim_config& cfg);

/// Slot referenced by an event body, when it has one.
std::optional<slot_index> event_slot(const telemetry_event& ev);

/// Whether an event body mentions a node: message src/dst/origin, membership
/// of a role assignment, a cluster representative, an aggregate signer or the
/// block producer of an outcome, or a fault target.
bool references_node(const telemetry_event& ev, node_id node);

} // namespace clens
