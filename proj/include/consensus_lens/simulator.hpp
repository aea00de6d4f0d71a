#pragma once

#include "consensus_lens/config.hpp"
#include "consensus_lens/overlay.hpp"
#include "consensus_lens/telemetry.hpp"

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <vector>

namespace clens {

enum class sim_event_kind : std::uint8_t { slot_start, slot_timeout, message_delivery, fault_command };

std::string_view sim_event_kind_name(sim_event_kind k);

struct sim_event {
    std::int64_t time_ms = 0;
    std::uint64_t seq = 0;
    sim_event_kind kind = sim_event_kind::slot_start;
    slot_index slot = 0;
    std::size_t message = 0; // index into the in-flight table
    fault_command fault;
    fault_source source = fault_source::schedule;
};

struct sim_stats {
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_delivered = 0;
    std::uint64_t messages_dropped = 0;
    std::uint64_t late_votes = 0;
    std::uint64_t finalized = 0;
    std::uint64_t skipped = 0;
};

struct latency_params {
    double base_ms = 0.0;
    double per_unit_distance_ms = 0.0;
    double bandwidth_bytes_per_ms = 1.0;
    std::int64_t jitter_max_ms = 0;
    double scale = 1.0;
};

/// ceil((base + distance * per_unit + payload / bandwidth + jitter) * scale)
/// with jitter uniform over the integers [0, jitter_max_ms] drawn from `rng`.
std::int64_t latency(const point2& src, const point2& dst, std::uint64_t payload_bytes, const latency_params& p,
                     hash_stream& rng);

/// Discrete-event engine for the slot lifecycle.
///
/// Single-threaded. Events run in (time_ms, seq) order; telemetry is pushed
/// to the sink as it is produced. The loop can be driven one event at a time
/// so a controller may interleave commands between events.
class simulation {
public:
    using sink_fn = std::function<void(const telemetry_event&)>;

    /// Validates the config; throws config_error before anything is emitted.
    simulation(sim_config cfg, sink_fn sink);

    const sim_config& config() const { return cfg_; }
    bool done() const { return finished_; }
    std::int64_t now() const { return now_; }
    std::optional<std::int64_t> next_event_time() const;

    /// Highest slot whose SlotStart has been processed.
    std::optional<slot_index> current_slot() const { return current_slot_; }

    /// Processes one event (the first call also emits the run header; the
    /// call after the queue drains emits the run summary). Returns the event
    /// processed, or nullopt once finished.
    std::optional<sim_event> step();
    void run_to_end();

    /// Queues a fault at `at_ms` (default: the current simulated time),
    /// clamped to [now(), next_event_time()] and ordered after anything
    /// already scheduled for that instant. Returns the time used.
    std::int64_t inject(const fault_command& cmd, std::optional<std::int64_t> at_ms = std::nullopt);

    bool is_live(node_id node) const { return live_.at(node.index); }
    const sim_stats& stats() const { return stats_; }
    const std::vector<outcome_event>& outcomes() const { return outcomes_; }
    const std::vector<sim_event>& processed() const { return processed_; }

private:
    struct slot_state {
        slot_state(role_event r, topology_snapshot t, block_digest d, hash_stream j)
            : roles(std::move(r)), topology(std::move(t)), digest(d), jitter(std::move(j))
        {
        }

        role_event roles;
        topology_snapshot topology;
        block_digest digest;
        hash_stream jitter;
        bool producer_live_at_start = false;
        bool concluded = false;
        std::vector<vote> votes;
        std::vector<bool> voted;
    };

    struct in_flight {
        message_record record;
        std::optional<vote> payload;
    };

    struct later {
        bool operator()(const sim_event& a, const sim_event& b) const
        {
            return a.time_ms > b.time_ms || (a.time_ms == b.time_ms && a.seq > b.seq);
        }
    };

    void schedule(sim_event ev);
    void emit(event_kind kind, json body);
    void emit_counter(const char* name, std::int64_t value, json extra = json::object());

    void on_slot_start(slot_index slot);
    void on_slot_timeout(slot_index slot);
    void on_delivery(std::size_t index);
    void on_fault(const sim_event& ev);
    void collect_vote(slot_state& st, const vote& v);

    void send(message_type type, node_id src, node_id dst, std::uint64_t payload, slot_index slot,
              std::optional<vote> v);
    void finish();

    sim_config cfg_;
    sink_fn sink_;
    std::vector<node_key> keys_;
    std::priority_queue<sim_event, std::vector<sim_event>, later> queue_;
    std::uint64_t next_event_seq_ = 0;
    std::uint64_t next_telemetry_seq_ = 0;
    std::uint64_t next_message_id_ = 0;
    std::int64_t now_ = 0;
    bool started_ = false;
    bool finished_ = false;
    std::optional<slot_index> current_slot_;

    seed beacon_;
    std::vector<bool> live_;
    std::set<node_id> pending_revive_;
    double latency_scale_ = 1.0;

    std::map<slot_index, slot_state> slots_;
    std::vector<in_flight> messages_;
    std::vector<outcome_event> outcomes_;
    std::vector<sim_event> processed_;
    sim_stats stats_;
};

/// Runs a whole scenario, pushing every event to the sink.
sim_stats run(const sim_config& cfg, const simulation::sink_fn& sink);

/// Runs a whole scenario and collects the stream.
std::vector<telemetry_event> run(const sim_config& cfg);

} // namespace clens
