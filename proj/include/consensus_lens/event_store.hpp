#pragma once

#include "consensus_lens/telemetry.hpp"

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace clens {

class ordering_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class query_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct query_filter {
    std::optional<std::int64_t> from_ms; // inclusive
    std::optional<std::int64_t> to_ms;   // inclusive
    std::optional<std::set<event_kind>> kinds;
    std::optional<slot_index> slot;
    std::optional<node_id> node;

    void validate() const;
    bool matches(const telemetry_event& ev) const;
};

/// Render payload for one slot.
struct slot_snapshot {
    slot_index slot = 0;
    role_event roles;
    topology_snapshot topology;
    std::optional<outcome_event> outcome;
    std::vector<message_record> messages;
};

json encode(const slot_snapshot& snap);

class unknown_slot : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Append-only, (ts_ms, seq)-ordered telemetry log with an optional JSONL
/// sink. One writer, any number of concurrent readers; readers wait on
/// wait_for_more() to follow the log live.
class event_store {
public:
    event_store() = default;
    /// Truncates and writes every accepted line to `sink`.
    explicit event_store(const std::filesystem::path& sink);

    event_store(const event_store&) = delete;
    event_store& operator=(const event_store&) = delete;

    /// Throws ordering_error unless the event follows the last one.
    void append(telemetry_event ev);

    std::size_t size() const;
    std::vector<telemetry_event> query(const query_filter& filter) const;
    std::vector<std::string> query_lines(const query_filter& filter) const;

    /// Serialized lines [from, from + max) exactly as written to the sink.
    std::vector<std::string> lines(std::size_t from, std::size_t max = SIZE_MAX) const;
    std::optional<telemetry_event> at(std::size_t index) const;

    /// Throws unknown_slot when the slot has no role_assignment yet.
    slot_snapshot snapshot(slot_index slot) const;

    /// Blocks until size() > known, the store is closed, or the timeout
    /// elapses. Returns the current size.
    std::size_t wait_for_more(std::size_t known, std::chrono::milliseconds timeout) const;

    /// Marks the log complete and wakes all waiters.
    void close();
    bool closed() const;

    /// Loads a recorded JSONL stream, enforcing the same ordering contract.
    static std::unique_ptr<event_store> load(const std::filesystem::path& jsonl);

private:
    struct entry {
        telemetry_event event;
        std::string line;
    };

    mutable std::shared_mutex mutex_;
    mutable std::mutex wait_mutex_;
    mutable std::condition_variable_any cv_;
    std::vector<entry> log_;
    std::optional<std::ofstream> sink_;
    bool closed_ = false;
};

} // namespace clens
