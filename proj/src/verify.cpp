#include "consensus_lens/verify.hpp"

#include "consensus_lens/config.hpp"
#include "consensus_lens/overlay.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace clens {

namespace {

struct slot_record {
    std::optional<role_event> roles;
    std::optional<topology_snapshot> topology;
    std::optional<outcome_event> outcome;
    std::int64_t outcome_ts = 0;
    std::map<std::uint32_t, std::int64_t> proposal_recv; // committee member -> recv_ms
    std::vector<std::uint64_t> final_hop_votes;          // message ids reaching the producer
    std::size_t final_broadcasts = 0;
    std::size_t expected_broadcasts = 0;
};

class checker {
public:
    explicit checker(std::size_t max_violations) : max_(max_violations) {}

    verify_report run(std::span<const std::string> lines);

private:
    template <typename... Parts>
    void fail(std::size_t line, const Parts&... parts)
    {
        ++report_.violation_count;
        if (report_.violations.size() >= max_) return;
        std::string msg = "line " + std::to_string(line) + ": ";
        ((msg += parts), ...);
        report_.violations.push_back(std::move(msg));
    }

    void check(bool cond, std::size_t line, const std::string& what)
    {
        if (!cond) fail(line, what);
    }

    void on_event(std::size_t line, const telemetry_event& ev);
    void on_fault(std::size_t line, const telemetry_event& ev);
    void on_roles(std::size_t line, const telemetry_event& ev);
    void on_topology(std::size_t line, const telemetry_event& ev);
    void on_message(std::size_t line, const telemetry_event& ev);
    void on_outcome(std::size_t line, const telemetry_event& ev);
    void on_counter(std::size_t line, const telemetry_event& ev);
    void finish(std::size_t line);

    slot_record* slot_at(std::size_t line, slot_index s)
    {
        auto it = slots_.find(s);
        if (it == slots_.end() || !it->second.roles) {
            fail(line, "reference to slot ", std::to_string(s), " before its role assignment");
            return nullptr;
        }
        return &it->second;
    }

    std::size_t max_;
    verify_report report_;

    std::optional<sim_config> cfg_;
    std::vector<node_key> keys_;
    std::vector<bool> live_;
    std::set<std::uint32_t> pending_revive_;
    seed beacon_;
    slot_index next_slot_ = 0;

    std::optional<telemetry_event> prev_;
    std::map<slot_index, slot_record> slots_;
    std::vector<message_record> messages_;
    std::vector<bool> dropped_;
    std::uint64_t dropped_count_ = 0;
    std::uint64_t late_count_ = 0;
    std::map<std::string, std::int64_t> summary_;
    bool complete_ = false;
};

verify_report checker::run(std::span<const std::string> lines)
{
    std::size_t lineno = 0;
    for (const auto& raw : lines) {
        ++lineno;
        if (raw.empty()) {
            fail(lineno, "empty line");
            continue;
        }
        telemetry_event ev;
        try {
            ev = parse_event(raw);
        } catch (const schema_error& e) {
            fail(lineno, "schema: ", e.what());
            continue;
        }
        ++report_.events;
        if (complete_) fail(lineno, "event after run_complete");

        const std::uint64_t expected_seq = prev_ ? prev_->seq + 1 : 0;
        if (ev.seq != expected_seq)
            fail(lineno, "seq ", std::to_string(ev.seq), " where ", std::to_string(expected_seq),
                 " was expected (missing or reordered event)");
        if (prev_ && !prev_->precedes(ev)) fail(lineno, "(ts_ms, seq) not strictly increasing");

        if (!cfg_) {
            if (ev.kind != event_kind::counter || ev.body.value("name", "") != "run_start" ||
                !ev.body.contains("config")) {
                fail(lineno, "stream must begin with the run_start counter");
                prev_ = ev;
                continue;
            }
            try {
                cfg_ = parse_config_text(ev.body["config"].dump());
            } catch (const std::exception& e) {
                fail(lineno, "run_start config invalid: ", e.what());
                return report_;
            }
            keys_ = derive_node_keys(cfg_->n);
            live_.assign(cfg_->n, true);
            beacon_ = cfg_->beacon_seed;
            check(ev.body["value"] == cfg_->n, lineno, "run_start value must equal n");
            prev_ = ev;
            continue;
        }
        try {
            on_event(lineno, ev);
        } catch (const std::exception& e) {
            fail(lineno, "inconsistent event: ", e.what());
        }
        prev_ = ev;
    }
    if (cfg_) finish(lineno);
    else if (lines.empty()) fail(0, "empty stream");
    return report_;
}

void checker::on_event(std::size_t line, const telemetry_event& ev)
{
    switch (ev.kind) {
    case event_kind::fault: on_fault(line, ev); break;
    case event_kind::role_assignment: on_roles(line, ev); break;
    case event_kind::topology: on_topology(line, ev); break;
    case event_kind::message: on_message(line, ev); break;
    case event_kind::slot_outcome: on_outcome(line, ev); break;
    case event_kind::counter: on_counter(line, ev); break;
    }
}

void checker::on_fault(std::size_t line, const telemetry_event& ev)
{
    auto f = decode_fault(ev.body);
    check(f.command.at_ms == ev.ts_ms, line, "fault at_ms differs from its timestamp");
    bool effective = false;
    switch (f.command.action) {
    case fault_action::kill_node:
    case fault_action::revive_node: {
        if (!f.command.target || f.command.target->index >= cfg_->n) {
            fail(line, "fault target outside validator set");
            return;
        }
        auto t = f.command.target->index;
        if (f.command.action == fault_action::kill_node) {
            effective = live_[t] || pending_revive_.erase(t) > 0;
            live_[t] = false;
        } else {
            effective = !live_[t] && !pending_revive_.count(t);
            if (effective) pending_revive_.insert(t);
        }
        break;
    }
    case fault_action::set_latency_scale:
        effective = true;
        check(f.command.scale && *f.command.scale >= 0.0, line, "latency scale must be non-negative");
        break;
    }
    check(f.effective == effective, line, "fault 'effective' flag disagrees with the live set");
}

void checker::on_roles(std::size_t line, const telemetry_event& ev)
{
    auto r = decode_role_event(ev.body);
    const auto s = r.roles.slot;
    if (s != next_slot_) fail(line, "role assignment for slot ", std::to_string(s), ", expected slot ",
                              std::to_string(next_slot_));
    if (s >= cfg_->slots) fail(line, "slot beyond configured slot count");
    next_slot_ = s + 1;

    for (auto t : pending_revive_) live_[t] = true;
    pending_revive_.clear();

    const auto start = static_cast<std::int64_t>(s) * cfg_->slot_duration_ms;
    check(r.slot_start_ms == start && ev.ts_ms == start, line, "slot start time inconsistent with slot_duration_ms");

    std::vector<node_id> dead;
    for (std::uint32_t i = 0; i < cfg_->n; ++i)
        if (!live_[i]) dead.emplace_back(i);
    check(r.dead == dead, line, "dead list disagrees with replayed faults");

    check(r.beacon.input == beacon_, line, "beacon input does not chain from the previous slot");
    check(r.beacon.iterations == cfg_->vdf_iterations, line, "beacon iterations differ from vdf_iterations");
    check(verify_entropy(r.beacon), line, "entropy proof does not verify");
    beacon_ = r.beacon.output;
    check(r.slot_seed == derive_slot_seed(r.beacon.output, s), line, "slot seed not derived from beacon");
    check(r.committee_size == cfg_->committee_size, line, "committee_size differs from config");

    // Partition and counts.
    std::vector<int> seen(cfg_->n, 0);
    bool in_range = r.roles.producer.index < cfg_->n;
    if (in_range) ++seen[r.roles.producer.index];
    for (const auto* group : {&r.roles.committee, &r.roles.validators})
        for (auto n : *group) {
            if (n.index >= cfg_->n) in_range = false;
            else ++seen[n.index];
        }
    check(in_range && std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }), line,
          "roles do not partition the validator set");
    check(r.roles.committee.size() == cfg_->committee_size, line, "committee size mismatch");

    std::vector<node_id> nodes(cfg_->n);
    for (std::uint32_t i = 0; i < cfg_->n; ++i) nodes[i] = node_id(i);
    check(elect_roles(r.slot_seed, nodes, cfg_->committee_size, s) == r.roles, line,
          "role assignment differs from local recomputation");

    auto& rec = slots_[s];
    if (rec.roles) fail(line, "duplicate role assignment for slot ", std::to_string(s));
    rec.roles = r;
}

void checker::on_topology(std::size_t line, const telemetry_event& ev)
{
    auto t = decode_topology(ev.body);
    auto* rec = slot_at(line, t.slot);
    if (!rec) return;
    if (rec->topology) fail(line, "duplicate topology for slot ", std::to_string(t.slot));
    check(ev.body["max_iters"] == cfg_->kmeans_max_iters, line, "topology max_iters differs from config");
    check(t.k == cfg_->k && t.assignment.size() == cfg_->n, line, "topology shape differs from config");

    auto recomputed = build_topology(rec->roles->slot_seed, t.slot, cfg_->n, cfg_->k, cfg_->kmeans_max_iters);
    check(recomputed == t, line, "topology differs from local recomputation");

    for (std::size_t i = 1; i < t.objectives.size(); ++i)
        if (t.objectives[i] > t.objectives[i - 1]) {
            fail(line, "k-means objective increased at iteration ", std::to_string(i));
            break;
        }
    for (std::size_t i = 0; i < t.assignment.size() && i < t.points.size(); ++i) {
        auto own = squared_distance(t.points[i], t.centroids[t.assignment[i]]);
        for (const auto& c : t.centroids)
            if (squared_distance(t.points[i], c) < own) {
                fail(line, "node ", std::to_string(i), " is not assigned to its nearest centroid");
                break;
            }
    }
    rec->topology = std::move(t);
}

void checker::on_message(std::size_t line, const telemetry_event& ev)
{
    auto m = decode_message(ev.body);
    check(m.id == messages_.size(), line, "message ids must be dense and increasing");
    check(m.send_ms == ev.ts_ms, line, "message send_ms differs from its timestamp");
    check(m.src != m.dst, line, "message to self");
    if (m.src.index >= cfg_->n || m.dst.index >= cfg_->n) {
        fail(line, "message endpoint outside validator set");
        return;
    }
    check(live_[m.src.index], line, "message sent by a dead node");

    auto* rec = slot_at(line, m.slot);
    messages_.push_back(m);
    dropped_.push_back(false);
    if (!rec || !rec->topology) return;
    const auto& roles = rec->roles->roles;
    const auto producer = roles.producer;

    switch (m.type) {
    case message_type::block_proposal:
        check(m.src == producer && roles.role_of(m.dst) == role::committee, line,
              "BlockProposal must go from the producer to a committee member");
        check(!rec->outcome, line, "BlockProposal after slot outcome");
        check(m.payload_bytes == cfg_->proposal_payload_bytes, line, "BlockProposal payload size");
        rec->proposal_recv[m.dst.index] = m.recv_ms;
        break;
    case message_type::attestation: {
        check(m.origin && *m.origin == m.src, line, "Attestation origin must be its sender");
        check(roles.role_of(m.src) == role::committee, line, "Attestation from a non-committee node");
        auto path = route_attestation(m.src, producer, *rec->topology);
        check(path.size() >= 2 && path[1] == m.dst, line, "Attestation first hop disagrees with route_attestation");
        auto it = rec->proposal_recv.find(m.src.index);
        check(it != rec->proposal_recv.end() && m.send_ms >= it->second, line,
              "Attestation sent before its BlockProposal arrived");
        if (m.dst == producer) rec->final_hop_votes.push_back(m.id);
        break;
    }
    case message_type::attestation_forward: {
        if (!m.origin || m.origin->index >= cfg_->n) {
            fail(line, "AttestationForward without a valid origin");
            break;
        }
        auto path = route_attestation(*m.origin, producer, *rec->topology);
        check(path.size() == 3 && path[1] == m.src && m.dst == producer, line,
              "AttestationForward does not follow the member -> representative -> producer route");
        bool caused = std::any_of(messages_.begin(), messages_.end(), [&](const message_record& prev) {
            return prev.type == message_type::attestation && prev.slot == m.slot && prev.origin == m.origin &&
                   prev.dst == m.src && prev.recv_ms <= m.send_ms;
        });
        check(caused, line, "AttestationForward without a preceding Attestation at the relay");
        rec->final_hop_votes.push_back(m.id);
        break;
    }
    case message_type::final_broadcast:
        check(m.src == producer, line, "FinalBroadcast not sent by the producer");
        check(rec->outcome && rec->outcome->outcome.kind == outcome_kind::finalized && m.send_ms == rec->outcome_ts,
              line, "FinalBroadcast without a finalized outcome");
        for (auto id : rec->final_hop_votes) {
            const auto& v = messages_[id];
            if (v.recv_ms < rec->outcome_ts && !dropped_[id] && v.recv_ms > m.send_ms) {
                fail(line, "FinalBroadcast precedes a counted vote");
                break;
            }
        }
        ++rec->final_broadcasts;
        break;
    }
}

void checker::on_outcome(std::size_t line, const telemetry_event& ev)
{
    auto o = decode_outcome(ev.body);
    const auto s = o.outcome.slot;
    auto* rec = slot_at(line, s);
    if (!rec) return;
    if (rec->outcome) fail(line, "duplicate outcome for slot ", std::to_string(s));
    const auto& roles = *rec->roles;
    const auto timeout = roles.slot_start_ms + cfg_->slot_duration_ms;
    check(ev.ts_ms == timeout, line, "outcome not emitted at slot timeout");
    check(o.producer == roles.roles.producer, line, "outcome producer differs from elected producer");
    check(o.committee_size == cfg_->committee_size, line, "outcome committee_size differs from config");

    const auto threshold = cfg_->quorum.threshold(cfg_->committee_size);
    check(o.outcome.threshold == threshold, line, "outcome threshold differs from quorum");
    const bool finalized = o.outcome.kind == outcome_kind::finalized;
    check(finalized == (o.outcome.vote_count >= threshold), line,
          "finalized must hold exactly when vote_count reaches the threshold");

    const bool producer_dead = std::binary_search(roles.dead.begin(), roles.dead.end(), roles.roles.producer) ||
                               !live_[roles.roles.producer.index];
    if (producer_dead) {
        check(!finalized && o.outcome.vote_count == 0 && o.reason == skip_reason::producer_dead, line,
              "slot with a dead producer must skip with zero votes");
    } else {
        std::set<std::uint32_t> counted;
        for (auto id : rec->final_hop_votes) {
            const auto& m = messages_[id];
            if (m.recv_ms < timeout && !dropped_[id] && m.origin) counted.insert(m.origin->index);
        }
        check(o.outcome.vote_count == counted.size(), line,
              "vote_count " + std::to_string(o.outcome.vote_count) + " differs from " +
                  std::to_string(counted.size()) + " timely delivered attestations");
        check(o.reason == (finalized ? skip_reason::none : skip_reason::sub_quorum), line,
              "skip reason inconsistent with vote count");
        if (finalized) {
            auto digest = make_block_digest(roles.slot_seed, s, roles.roles.producer);
            check(o.outcome.digest == digest, line, "block digest differs from recomputation");
            const auto& agg = *o.outcome.aggregate;
            check(verify_aggregate(agg, digest, keys_), line, "aggregate vote does not verify");
            std::vector<node_id> expect;
            for (auto c : counted) expect.emplace_back(c);
            check(agg.signers.signers() == expect, line, "aggregate signers differ from counted voters");
        }
    }
    if (finalized)
        for (std::uint32_t i = 0; i < cfg_->n; ++i)
            if (i != roles.roles.producer.index && live_[i]) ++rec->expected_broadcasts;
    rec->outcome = o;
    rec->outcome_ts = ev.ts_ms;
}

void checker::on_counter(std::size_t line, const telemetry_event& ev)
{
    const auto name = ev.body["name"].get<std::string>();
    const auto value = ev.body["value"].get<std::int64_t>();
    if (name == "message_dropped") {
        auto id = ev.body.value("message_id", std::uint64_t{0});
        if (!ev.body.contains("message_id") || id >= messages_.size()) {
            fail(line, "message_dropped references an unknown message");
            return;
        }
        const auto& m = messages_[id];
        check(!dropped_[id], line, "message dropped twice");
        check(ev.ts_ms == m.recv_ms, line, "drop not at the message's delivery time");
        check(!live_[m.src.index] || !live_[m.dst.index], line, "message dropped although both endpoints live");
        dropped_[id] = true;
        ++dropped_count_;
        check(value == static_cast<std::int64_t>(dropped_count_), line, "message_dropped counter not cumulative");
    } else if (name == "late_votes") {
        auto id = ev.body.value("message_id", std::uint64_t{0});
        if (!ev.body.contains("message_id") || id >= messages_.size()) {
            fail(line, "late_votes references an unknown message");
            return;
        }
        const auto& m = messages_[id];
        auto it = slots_.find(m.slot);
        check(it != slots_.end() && it->second.outcome && m.recv_ms >= it->second.outcome_ts, line,
              "late vote arrived before its slot timed out");
        ++late_count_;
        check(value == static_cast<std::int64_t>(late_count_), line, "late_votes counter not cumulative");
    } else if (name == "run_complete") {
        check(value == static_cast<std::int64_t>(ev.seq), line, "run_complete count differs from events seen");
        complete_ = true;
    } else if (name == "run_start") {
        fail(line, "second run_start");
    } else {
        summary_[name] = value;
    }
}

void checker::finish(std::size_t line)
{
    check(complete_, line, "stream does not end with run_complete (truncated)");
    check(next_slot_ == cfg_->slots, line, "stream covers " + std::to_string(next_slot_) + " of " +
                                               std::to_string(cfg_->slots) + " slots");
    std::uint64_t finalized = 0;
    std::uint64_t skipped = 0;
    for (const auto& [s, rec] : slots_) {
        if (!rec.topology) fail(line, "slot ", std::to_string(s), " has no topology");
        if (!rec.outcome) {
            fail(line, "slot ", std::to_string(s), " has no outcome");
            continue;
        }
        if (rec.final_broadcasts != rec.expected_broadcasts)
            fail(line, "slot ", std::to_string(s), " has ", std::to_string(rec.final_broadcasts),
                 " FinalBroadcast messages, expected ", std::to_string(rec.expected_broadcasts));
        if (rec.outcome->outcome.kind == outcome_kind::finalized) ++finalized;
        else ++skipped;
    }
    report_.slots = slots_.size();

    auto expect = [&](const char* name, std::uint64_t v) {
        auto it = summary_.find(name);
        if (it == summary_.end())
            fail(line, "missing summary counter ", name);
        else if (it->second != static_cast<std::int64_t>(v))
            fail(line, "summary counter ", name, " = ", std::to_string(it->second), ", stream shows ",
                 std::to_string(v));
    };
    const auto sent = static_cast<std::uint64_t>(messages_.size());
    expect("messages_sent", sent);
    expect("messages_dropped", dropped_count_);
    expect("messages_delivered", sent - dropped_count_);
    expect("late_votes_total", late_count_);
    expect("slots_finalized", finalized);
    expect("slots_skipped", skipped);
    if (prev_)
        for (const auto& m : messages_)
            if (m.recv_ms > prev_->ts_ms) {
                fail(line, "message ", std::to_string(m.id), " still in flight at end of stream");
                break;
            }
}

} // namespace

verify_report verify_stream(std::span<const std::string> lines, std::size_t max_violations)
{
    checker c(max_violations);
    return c.run(lines);
}

verify_report verify_file(const std::filesystem::path& jsonl, std::size_t max_violations)
{
    std::ifstream in(jsonl);
    if (!in) throw io_error("cannot read telemetry stream '" + jsonl.string() + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (in.bad()) throw io_error("error reading '" + jsonl.string() + "'");
    return verify_stream(lines, max_violations);
}

} // namespace clens
