#include "consensus_lens/simulator.hpp"

#include <cmath>

namespace clens {

std::string_view sim_event_kind_name(sim_event_kind k)
{
    switch (k) {
    case sim_event_kind::slot_start: return "SlotStart";
    case sim_event_kind::slot_timeout: return "SlotTimeout";
    case sim_event_kind::message_delivery: return "MessageDelivery";
    case sim_event_kind::fault_command: return "FaultCommand";
    }
    return "Unknown";
}

std::int64_t latency(const point2& src, const point2& dst, std::uint64_t payload_bytes, const latency_params& p,
                     hash_stream& rng)
{
    const double distance = (src - dst).norm();
    const auto jitter = static_cast<double>(rng.uniform(static_cast<std::uint64_t>(p.jitter_max_ms) + 1));
    const double transfer = static_cast<double>(payload_bytes) / p.bandwidth_bytes_per_ms;
    const double total = (p.base_ms + distance * p.per_unit_distance_ms + transfer + jitter) * p.scale;
    return static_cast<std::int64_t>(std::ceil(total));
}

simulation::simulation(sim_config cfg, sink_fn sink)
    : cfg_(std::move(cfg)), sink_(std::move(sink))
{
    cfg_.validate();
    keys_ = derive_node_keys(cfg_.n);
    live_.assign(cfg_.n, true);
    beacon_ = cfg_.beacon_seed;
    for (const auto& f : cfg_.faults) {
        sim_event ev;
        ev.time_ms = f.at_ms;
        ev.kind = sim_event_kind::fault_command;
        ev.fault = f;
        ev.source = fault_source::schedule;
        schedule(ev);
    }
    if (cfg_.slots > 0) {
        sim_event ev;
        ev.kind = sim_event_kind::slot_start;
        ev.slot = 0;
        schedule(ev);
    }
}

std::optional<std::int64_t> simulation::next_event_time() const
{
    if (queue_.empty()) return std::nullopt;
    return queue_.top().time_ms;
}

void simulation::schedule(sim_event ev)
{
    ev.seq = next_event_seq_++;
    queue_.push(std::move(ev));
}

void simulation::emit(event_kind kind, json body)
{
    telemetry_event ev{now_, next_telemetry_seq_++, kind, std::move(body)};
    if (sink_) sink_(ev);
}

void simulation::emit_counter(const char* name, std::int64_t value, json extra)
{
    json body;
    body["name"] = name;
    body["value"] = value;
    for (auto& [k, v] : extra.items()) body[k] = v;
    emit(event_kind::counter, std::move(body));
}

std::int64_t simulation::inject(const fault_command& cmd, std::optional<std::int64_t> at_ms)
{
    if (finished_) throw std::logic_error("simulation already finished");
    if (cmd.target && cmd.target->index >= cfg_.n)
        throw unknown_node("node " + std::to_string(cmd.target->index) + " outside validator set");
    std::int64_t t = now_;
    if (at_ms) {
        t = std::max(t, *at_ms);
        if (auto next = next_event_time()) t = std::min(t, *next);
    }
    sim_event ev;
    ev.time_ms = t;
    ev.kind = sim_event_kind::fault_command;
    ev.fault = cmd;
    ev.fault.at_ms = t;
    ev.source = fault_source::control;
    schedule(ev);
    return t;
}

std::optional<sim_event> simulation::step()
{
    if (finished_) return std::nullopt;
    if (!started_) {
        started_ = true;
        emit_counter("run_start", static_cast<std::int64_t>(cfg_.n), json{{"config", encode(cfg_)}});
    }
    if (queue_.empty()) {
        finish();
        return std::nullopt;
    }
    auto ev = queue_.top();
    queue_.pop();
    now_ = ev.time_ms;
    processed_.push_back(ev);
    switch (ev.kind) {
    case sim_event_kind::slot_start: on_slot_start(ev.slot); break;
    case sim_event_kind::slot_timeout: on_slot_timeout(ev.slot); break;
    case sim_event_kind::message_delivery: on_delivery(ev.message); break;
    case sim_event_kind::fault_command: on_fault(ev); break;
    }
    return ev;
}

void simulation::run_to_end()
{
    while (step()) {
    }
}

void simulation::on_slot_start(slot_index slot)
{
    for (auto node : pending_revive_) live_[node.index] = true;
    pending_revive_.clear();
    current_slot_ = slot;

    auto proof = entropy_step(beacon_, cfg_.vdf_iterations);
    beacon_ = proof.output;
    auto slot_seed = derive_slot_seed(beacon_, slot);

    std::vector<node_id> nodes(cfg_.n);
    for (std::size_t i = 0; i < cfg_.n; ++i) nodes[i] = node_id(static_cast<std::uint32_t>(i));

    role_event roles;
    roles.roles = elect_roles(slot_seed, nodes, cfg_.committee_size, slot);
    roles.beacon = proof;
    roles.slot_seed = slot_seed;
    roles.committee_size = cfg_.committee_size;
    roles.slot_start_ms = now_;
    for (auto node : nodes)
        if (!live_[node.index]) roles.dead.push_back(node);

    auto digest = make_block_digest(slot_seed, slot, roles.roles.producer);
    auto [it, inserted] =
        slots_.try_emplace(slot, roles, build_topology(slot_seed, slot, cfg_.n, cfg_.k, cfg_.kmeans_max_iters), digest,
                           hash_stream(slot_seed.bytes, "jitter"));
    auto& st = it->second;
    st.producer_live_at_start = live_[roles.roles.producer.index];
    st.voted.assign(cfg_.n, false);

    emit(event_kind::role_assignment, encode(st.roles));
    emit(event_kind::topology, encode(st.topology, cfg_.kmeans_max_iters));

    sim_event timeout;
    timeout.time_ms = now_ + cfg_.slot_duration_ms;
    timeout.kind = sim_event_kind::slot_timeout;
    timeout.slot = slot;
    schedule(timeout);
    if (slot + 1 < cfg_.slots) {
        sim_event next;
        next.time_ms = now_ + cfg_.slot_duration_ms;
        next.kind = sim_event_kind::slot_start;
        next.slot = slot + 1;
        schedule(next);
    }

    if (!st.producer_live_at_start) return;
    const auto producer = st.roles.roles.producer;
    for (auto member : st.roles.roles.committee)
        send(message_type::block_proposal, producer, member, cfg_.proposal_payload_bytes, slot, std::nullopt);
}

void simulation::send(message_type type, node_id src, node_id dst, std::uint64_t payload, slot_index slot,
                      std::optional<vote> v)
{
    auto& st = slots_.at(slot);
    latency_params params{cfg_.base_latency_ms, cfg_.per_unit_distance_ms, cfg_.bandwidth_bytes_per_ms,
                          cfg_.jitter_max_ms, latency_scale_};
    auto delay = latency(st.topology.points[src.index], st.topology.points[dst.index], payload, params, st.jitter);

    message_record rec;
    rec.id = next_message_id_++;
    rec.type = type;
    rec.src = src;
    rec.dst = dst;
    rec.payload_bytes = payload;
    rec.send_ms = now_;
    rec.recv_ms = now_ + delay;
    rec.slot = slot;
    if (v) rec.origin = v->voter;

    ++stats_.messages_sent;
    emit(event_kind::message, encode(rec));

    sim_event ev;
    ev.time_ms = rec.recv_ms;
    ev.kind = sim_event_kind::message_delivery;
    ev.slot = slot;
    ev.message = messages_.size();
    messages_.push_back({rec, std::move(v)});
    schedule(ev);
}

void simulation::on_delivery(std::size_t index)
{
    const auto rec = messages_[index].record;
    const bool src_dead = !live_[rec.src.index];
    const bool dst_dead = !live_[rec.dst.index];
    if (src_dead || dst_dead) {
        ++stats_.messages_dropped;
        emit_counter("message_dropped", static_cast<std::int64_t>(stats_.messages_dropped),
                     json{{"slot", rec.slot}, {"message_id", rec.id}, {"reason", src_dead ? "src_dead" : "dst_dead"}});
        return;
    }
    ++stats_.messages_delivered;

    auto& st = slots_.at(rec.slot);
    const auto producer = st.roles.roles.producer;
    switch (rec.type) {
    case message_type::block_proposal: {
        auto v = sign_vote(rec.slot, rec.dst, keys_[rec.dst.index], st.digest);
        auto path = route_attestation(rec.dst, producer, st.topology);
        send(message_type::attestation, rec.dst, path[1], cfg_.vote_payload_bytes, rec.slot, v);
        break;
    }
    case message_type::attestation:
    case message_type::attestation_forward: {
        const vote v = *messages_[index].payload;
        if (rec.dst == producer) {
            if (st.concluded) {
                ++stats_.late_votes;
                emit_counter("late_votes", static_cast<std::int64_t>(stats_.late_votes),
                             json{{"slot", rec.slot}, {"message_id", rec.id}});
            } else {
                collect_vote(st, v);
            }
        } else {
            send(message_type::attestation_forward, rec.dst, producer, cfg_.vote_payload_bytes, rec.slot, v);
        }
        break;
    }
    case message_type::final_broadcast: break;
    }
}

void simulation::collect_vote(slot_state& st, const vote& v)
{
    if (!verify_vote(v, keys_[v.voter.index])) return;
    if (st.roles.roles.role_of(v.voter) != role::committee || st.voted[v.voter.index]) return;
    st.voted[v.voter.index] = true;
    st.votes.push_back(v);
}

void simulation::on_slot_timeout(slot_index slot)
{
    auto& st = slots_.at(slot);
    st.concluded = true;
    const auto producer = st.roles.roles.producer;

    outcome_event oe;
    oe.producer = producer;
    oe.committee_size = cfg_.committee_size;
    if (!st.producer_live_at_start || !live_[producer.index]) {
        // A crashed producer loses whatever votes it had collected.
        oe.outcome.slot = slot;
        oe.outcome.kind = outcome_kind::skip;
        oe.outcome.threshold = cfg_.quorum.threshold(cfg_.committee_size);
        oe.reason = skip_reason::producer_dead;
    } else {
        oe.outcome = finalize_slot(slot, st.digest, st.votes, cfg_.committee_size, cfg_.quorum, cfg_.n);
        oe.reason = oe.outcome.kind == outcome_kind::skip ? skip_reason::sub_quorum : skip_reason::none;
    }
    if (oe.outcome.kind == outcome_kind::finalized)
        ++stats_.finalized;
    else
        ++stats_.skipped;
    emit(event_kind::slot_outcome, encode(oe));
    outcomes_.push_back(oe);
    st.votes.clear();

    if (oe.outcome.kind != outcome_kind::finalized) return;
    for (std::uint32_t i = 0; i < cfg_.n; ++i) {
        node_id node(i);
        if (node == producer || !live_[i]) continue;
        send(message_type::final_broadcast, producer, node, cfg_.proposal_payload_bytes + cfg_.aggregate_payload_bytes,
             slot, std::nullopt);
    }
}

void simulation::on_fault(const sim_event& ev)
{
    fault_event fe;
    fe.command = ev.fault;
    fe.command.at_ms = now_;
    fe.source = ev.source;
    fe.slot = current_slot_.value_or(0);
    switch (ev.fault.action) {
    case fault_action::kill_node: {
        auto t = ev.fault.target->index;
        // A kill also cancels a revive still waiting for the next slot.
        fe.effective = live_[t] || pending_revive_.erase(node_id(t)) > 0;
        live_[t] = false;
        break;
    }
    case fault_action::revive_node: {
        auto t = *ev.fault.target;
        if (!live_[t.index] && !pending_revive_.count(t)) {
            pending_revive_.insert(t);
            fe.effective = true;
        }
        break;
    }
    case fault_action::set_latency_scale:
        latency_scale_ = *ev.fault.scale;
        fe.effective = true;
        break;
    }
    emit(event_kind::fault, encode(fe));
}

void simulation::finish()
{
    auto as_i64 = [](std::uint64_t v) { return static_cast<std::int64_t>(v); };
    emit_counter("messages_sent", as_i64(stats_.messages_sent));
    emit_counter("messages_delivered", as_i64(stats_.messages_delivered));
    emit_counter("messages_dropped", as_i64(stats_.messages_dropped));
    emit_counter("late_votes_total", as_i64(stats_.late_votes));
    emit_counter("slots_finalized", as_i64(stats_.finalized));
    emit_counter("slots_skipped", as_i64(stats_.skipped));
    emit_counter("run_complete", as_i64(next_telemetry_seq_));
    finished_ = true;
}

sim_stats run(const sim_config& cfg, const simulation::sink_fn& sink)
{
    simulation sim(cfg, sink);
    sim.run_to_end();
    return sim.stats();
}

std::vector<telemetry_event> run(const sim_config& cfg)
{
    std::vector<telemetry_event> out;
    run(cfg, [&](const telemetry_event& ev) { out.push_back(ev); });
    return out;
}

} // namespace clens
