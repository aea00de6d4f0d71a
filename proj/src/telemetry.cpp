#include "consensus_lens/telemetry.hpp"

#include <algorithm>

namespace clens {

std::string_view event_kind_name(event_kind k)
{
    switch (k) {
    case event_kind::role_assignment: return "role_assignment";
    case event_kind::topology: return "topology";
    case event_kind::message: return "message";
    case event_kind::slot_outcome: return "slot_outcome";
    case event_kind::fault: return "fault";
    case event_kind::counter: return "counter";
    }
    return "unknown";
}

std::optional<event_kind> parse_event_kind(std::string_view name)
{
    for (auto k : {event_kind::role_assignment, event_kind::topology, event_kind::message, event_kind::slot_outcome,
                   event_kind::fault, event_kind::counter})
        if (event_kind_name(k) == name) return k;
    return std::nullopt;
}

std::string_view skip_reason_name(skip_reason r)
{
    switch (r) {
    case skip_reason::none: return "none";
    case skip_reason::producer_dead: return "producer_dead";
    case skip_reason::sub_quorum: return "sub_quorum";
    }
    return "none";
}

namespace {

[[noreturn]] void bad(const std::string& what)
{
    throw schema_error(what);
}

const json& field(const json& obj, const char* key)
{
    if (!obj.is_object()) bad("expected an object while reading '" + std::string(key) + "'");
    auto it = obj.find(key);
    if (it == obj.end()) bad("missing field '" + std::string(key) + "'");
    return *it;
}

std::uint64_t get_u64(const json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_number_unsigned()) bad("field '" + std::string(key) + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::int64_t get_i64(const json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_number_integer()) bad("field '" + std::string(key) + "' must be an integer");
    return v.get<std::int64_t>();
}

double get_double(const json& v, const std::string& what)
{
    if (!v.is_number()) bad(what + " must be a number");
    return v.get<double>();
}

std::string get_string(const json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_string()) bad("field '" + std::string(key) + "' must be a string");
    return v.get<std::string>();
}

bool get_bool(const json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_boolean()) bad("field '" + std::string(key) + "' must be a boolean");
    return v.get<bool>();
}

node_id as_node(const json& v, const std::string& what)
{
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() > 0xffffffffull) bad(what + " must be a node index");
    return node_id(v.get<std::uint32_t>());
}

node_id get_node(const json& obj, const char* key)
{
    return as_node(field(obj, key), std::string("field '") + key + "'");
}

std::vector<node_id> get_nodes(const json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_array()) bad("field '" + std::string(key) + "' must be an array");
    std::vector<node_id> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(as_node(e, std::string("element of '") + key + "'"));
    return out;
}

bytes32 get_hex32(const json& obj, const char* key)
{
    try {
        return bytes32_from_hex(get_string(obj, key));
    } catch (const std::invalid_argument& e) {
        bad("field '" + std::string(key) + "': " + e.what());
    }
}

json nodes_json(std::span<const node_id> nodes)
{
    json arr = json::array();
    for (auto n : nodes) arr.push_back(n.index);
    return arr;
}

json point_json(const point2& p)
{
    return json::array({p.x(), p.y()});
}

point2 get_point(const json& v, const std::string& what)
{
    if (!v.is_array() || v.size() != 2) bad(what + " must be an [x, y] pair");
    return {get_double(v[0], what), get_double(v[1], what)};
}

std::vector<point2> get_points(const json& obj, const char* key)
{
    const auto& v = field(obj, key);
    if (!v.is_array()) bad("field '" + std::string(key) + "' must be an array");
    std::vector<point2> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(get_point(e, std::string("element of '") + key + "'"));
    return out;
}

} // namespace

json to_json(const telemetry_event& ev)
{
    json j;
    j["ts_ms"] = ev.ts_ms;
    j["seq"] = ev.seq;
    j["kind"] = event_kind_name(ev.kind);
    j["body"] = ev.body;
    return j;
}

std::string to_jsonl(const telemetry_event& ev)
{
    return to_json(ev).dump();
}

telemetry_event event_from_json(const json& j)
{
    if (!j.is_object()) bad("event must be a JSON object");
    if (j.size() != 4) bad("event must have exactly the keys ts_ms, seq, kind, body");
    telemetry_event ev;
    ev.ts_ms = get_i64(j, "ts_ms");
    ev.seq = get_u64(j, "seq");
    auto kind_name = get_string(j, "kind");
    auto kind = parse_event_kind(kind_name);
    if (!kind) bad("unknown event kind '" + kind_name + "'");
    ev.kind = *kind;
    ev.body = field(j, "body");
    validate_body(ev.kind, ev.body);
    return ev;
}

telemetry_event parse_event(std::string_view line)
{
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        bad(std::string("malformed JSON: ") + e.what());
    }
    return event_from_json(j);
}

void validate_body(event_kind kind, const json& body)
{
    if (!body.is_object()) bad("body must be an object");
    switch (kind) {
    case event_kind::role_assignment: decode_role_event(body); break;
    case event_kind::topology: decode_topology(body); break;
    case event_kind::message: decode_message(body); break;
    case event_kind::slot_outcome: decode_outcome(body); break;
    case event_kind::fault: decode_fault(body); break;
    case event_kind::counter:
        get_string(body, "name");
        get_i64(body, "value");
        break;
    }
}

// --- role_assignment -------------------------------------------------------

json encode(const role_event& ev)
{
    json j;
    j["slot"] = ev.roles.slot;
    j["slot_start_ms"] = ev.slot_start_ms;
    j["beacon"] = {{"input", ev.beacon.input.hex()},
                   {"iterations", ev.beacon.iterations},
                   {"output", ev.beacon.output.hex()}};
    j["slot_seed"] = ev.slot_seed.hex();
    j["producer"] = ev.roles.producer.index;
    j["committee"] = nodes_json(ev.roles.committee);
    j["validators"] = nodes_json(ev.roles.validators);
    j["committee_size"] = ev.committee_size;
    j["dead"] = nodes_json(ev.dead);
    return j;
}

role_event decode_role_event(const json& body)
{
    role_event ev;
    ev.roles.slot = get_u64(body, "slot");
    ev.slot_start_ms = get_i64(body, "slot_start_ms");
    const auto& beacon = field(body, "beacon");
    ev.beacon.input.bytes = get_hex32(beacon, "input");
    ev.beacon.iterations = get_u64(beacon, "iterations");
    ev.beacon.output.bytes = get_hex32(beacon, "output");
    ev.slot_seed.bytes = get_hex32(body, "slot_seed");
    ev.roles.producer = get_node(body, "producer");
    ev.roles.committee = get_nodes(body, "committee");
    ev.roles.validators = get_nodes(body, "validators");
    ev.committee_size = get_u64(body, "committee_size");
    ev.dead = get_nodes(body, "dead");
    return ev;
}

// --- topology --------------------------------------------------------------

json encode(const topology_snapshot& topo, std::size_t max_iters)
{
    json j;
    j["slot"] = topo.slot;
    j["k"] = topo.k;
    j["max_iters"] = max_iters;
    json pts = json::array();
    for (const auto& p : topo.points) pts.push_back(point_json(p));
    j["points"] = std::move(pts);
    j["assignment"] = topo.assignment;
    json cents = json::array();
    for (const auto& c : topo.centroids) cents.push_back(point_json(c));
    j["centroids"] = std::move(cents);
    json reps = json::array();
    for (const auto& r : topo.representatives) reps.push_back(r ? json(r->index) : json(nullptr));
    j["representatives"] = std::move(reps);
    j["objectives"] = topo.objectives;
    j["iterations"] = topo.iterations;
    j["converged"] = topo.converged;
    return j;
}

topology_snapshot decode_topology(const json& body)
{
    topology_snapshot t;
    t.slot = get_u64(body, "slot");
    t.k = get_u64(body, "k");
    get_u64(body, "max_iters");
    t.points = get_points(body, "points");
    const auto& assignment = field(body, "assignment");
    if (!assignment.is_array()) bad("field 'assignment' must be an array");
    for (const auto& a : assignment) {
        if (!a.is_number_unsigned() || a.get<std::uint64_t>() >= t.k) bad("assignment entry outside [0, k)");
        t.assignment.push_back(a.get<std::uint32_t>());
    }
    if (t.assignment.size() != t.points.size()) bad("assignment and points differ in length");
    t.centroids = get_points(body, "centroids");
    if (t.centroids.size() != t.k) bad("centroid count differs from k");
    const auto& reps = field(body, "representatives");
    if (!reps.is_array() || reps.size() != t.k) bad("representatives must have one entry per cluster");
    for (const auto& r : reps) {
        if (r.is_null())
            t.representatives.emplace_back(std::nullopt);
        else
            t.representatives.emplace_back(as_node(r, "representative"));
    }
    const auto& objectives = field(body, "objectives");
    if (!objectives.is_array()) bad("field 'objectives' must be an array");
    for (const auto& o : objectives) t.objectives.push_back(get_double(o, "objective"));
    t.iterations = get_u64(body, "iterations");
    t.converged = get_bool(body, "converged");
    return t;
}

// --- message ---------------------------------------------------------------

json encode(const message_record& msg)
{
    json j;
    j["id"] = msg.id;
    j["slot"] = msg.slot;
    j["msg_type"] = message_type_name(msg.type);
    j["src"] = msg.src.index;
    j["dst"] = msg.dst.index;
    j["payload_bytes"] = msg.payload_bytes;
    j["send_ms"] = msg.send_ms;
    j["recv_ms"] = msg.recv_ms;
    if (msg.origin) j["origin"] = msg.origin->index;
    return j;
}

message_record decode_message(const json& body)
{
    message_record m;
    m.id = get_u64(body, "id");
    m.slot = get_u64(body, "slot");
    auto type_name = get_string(body, "msg_type");
    auto type = parse_message_type(type_name);
    if (!type) bad("unknown msg_type '" + type_name + "'");
    m.type = *type;
    m.src = get_node(body, "src");
    m.dst = get_node(body, "dst");
    m.payload_bytes = get_u64(body, "payload_bytes");
    m.send_ms = get_i64(body, "send_ms");
    m.recv_ms = get_i64(body, "recv_ms");
    if (body.contains("origin")) m.origin = get_node(body, "origin");
    if (m.recv_ms < m.send_ms) bad("message recv_ms precedes send_ms");
    return m;
}

// --- slot_outcome ----------------------------------------------------------

json encode(const outcome_event& ev)
{
    const auto& o = ev.outcome;
    json j;
    j["slot"] = o.slot;
    j["kind"] = o.kind == outcome_kind::finalized ? "finalized" : "skip";
    j["producer"] = ev.producer.index;
    j["vote_count"] = o.vote_count;
    j["threshold"] = o.threshold;
    j["committee_size"] = ev.committee_size;
    j["reason"] = ev.reason == skip_reason::none ? json(nullptr) : json(skip_reason_name(ev.reason));
    if (o.digest) j["block_digest"] = o.digest->hex();
    if (o.aggregate) {
        const auto& a = *o.aggregate;
        j["aggregate"] = {{"block_digest", a.digest.hex()},
                          {"validator_count", a.signers.size()},
                          {"signers", a.signers.hex()},
                          {"signer_ids", nodes_json(a.signers.signers())},
                          {"tag", to_hex(a.tag)}};
    }
    return j;
}

outcome_event decode_outcome(const json& body)
{
    outcome_event ev;
    auto& o = ev.outcome;
    o.slot = get_u64(body, "slot");
    auto kind = get_string(body, "kind");
    if (kind == "finalized")
        o.kind = outcome_kind::finalized;
    else if (kind == "skip")
        o.kind = outcome_kind::skip;
    else
        bad("unknown outcome kind '" + kind + "'");
    ev.producer = get_node(body, "producer");
    o.vote_count = get_u64(body, "vote_count");
    o.threshold = get_u64(body, "threshold");
    ev.committee_size = get_u64(body, "committee_size");
    const auto& reason = field(body, "reason");
    if (reason.is_null()) {
        ev.reason = skip_reason::none;
    } else {
        auto r = get_string(body, "reason");
        if (r == "producer_dead")
            ev.reason = skip_reason::producer_dead;
        else if (r == "sub_quorum")
            ev.reason = skip_reason::sub_quorum;
        else
            bad("unknown skip reason '" + r + "'");
    }
    const bool finalized = o.kind == outcome_kind::finalized;
    if (finalized != body.contains("block_digest") || finalized != body.contains("aggregate"))
        bad("block_digest and aggregate must be present exactly when finalized");
    if (finalized) {
        o.digest = block_digest{get_hex32(body, "block_digest")};
        const auto& a = field(body, "aggregate");
        aggregate_vote agg;
        agg.digest.bytes = get_hex32(a, "block_digest");
        try {
            agg.signers = signer_bitmap::from_hex(get_string(a, "signers"), get_u64(a, "validator_count"));
        } catch (const std::invalid_argument& e) {
            bad(std::string("aggregate signers: ") + e.what());
        }
        auto ids = get_nodes(a, "signer_ids");
        if (ids != agg.signers.signers()) bad("aggregate signer_ids disagree with the signer bitmap");
        agg.tag = get_hex32(a, "tag");
        o.aggregate = std::move(agg);
    }
    return ev;
}

// --- fault -----------------------------------------------------------------

json encode(const fault_event& ev)
{
    json j;
    j["slot"] = ev.slot;
    j["at_ms"] = ev.command.at_ms;
    j["action"] = fault_action_name(ev.command.action);
    if (ev.command.target) j["target"] = ev.command.target->index;
    if (ev.command.scale) j["scale"] = *ev.command.scale;
    j["effective"] = ev.effective;
    j["source"] = ev.source == fault_source::schedule ? "schedule" : "control";
    return j;
}

fault_event decode_fault(const json& body)
{
    fault_event ev;
    ev.slot = get_u64(body, "slot");
    ev.command.at_ms = get_i64(body, "at_ms");
    auto action = get_string(body, "action");
    auto parsed = parse_fault_action(action);
    if (!parsed) bad("unknown fault action '" + action + "'");
    ev.command.action = *parsed;
    if (body.contains("target")) ev.command.target = get_node(body, "target");
    if (body.contains("scale")) ev.command.scale = get_double(body["scale"], "scale");
    ev.effective = get_bool(body, "effective");
    auto source = get_string(body, "source");
    if (source == "schedule")
        ev.source = fault_source::schedule;
    else if (source == "control")
        ev.source = fault_source::control;
    else
        bad("unknown fault source '" + source + "'");
    return ev;
}

// --- config echo -----------------------------------------------------------

json encode(const sim_config& cfg)
{
    json j;
    j["n"] = cfg.n;
    j["slots"] = cfg.slots;
    j["beacon_seed"] = cfg.beacon_seed.hex();
    j["committee_size"] = cfg.committee_size;
    j["k"] = cfg.k;
    j["quorum"] = cfg.quorum.str();
    j["slot_duration_ms"] = cfg.slot_duration_ms;
    j["base_latency_ms"] = cfg.base_latency_ms;
    j["per_unit_distance_ms"] = cfg.per_unit_distance_ms;
    j["bandwidth_bytes_per_ms"] = cfg.bandwidth_bytes_per_ms;
    j["jitter_max_ms"] = cfg.jitter_max_ms;
    j["proposal_payload_bytes"] = cfg.proposal_payload_bytes;
    j["vote_payload_bytes"] = cfg.vote_payload_bytes;
    j["aggregate_payload_bytes"] = cfg.aggregate_payload_bytes;
    j["vdf_iterations"] = cfg.vdf_iterations;
    j["kmeans_max_iters"] = cfg.kmeans_max_iters;
    json faults = json::array();
    for (const auto& f : cfg.faults) {
        json e;
        e["at_ms"] = f.at_ms;
        e["action"] = fault_action_name(f.action);
        if (f.target) e["target"] = f.target->index;
        if (f.scale) e["scale"] = *f.scale;
        faults.push_back(std::move(e));
    }
    j["faults"] = std::move(faults);
    return j;
}

// --- filters ---------------------------------------------------------------

std::optional<slot_index> event_slot(const telemetry_event& ev)
{
    auto it = ev.body.find("slot");
    if (it == ev.body.end() || !it->is_number_unsigned()) return std::nullopt;
    return it->get<slot_index>();
}

bool references_node(const telemetry_event& ev, node_id node)
{
    const auto& b = ev.body;
    auto is = [&](const char* key) {
        auto it = b.find(key);
        return it != b.end() && it->is_number_unsigned() && it->get<std::uint64_t>() == node.index;
    };
    auto in = [&](const json& arr) {
        if (!arr.is_array()) return false;
        return std::any_of(arr.begin(), arr.end(), [&](const json& e) {
            return e.is_number_unsigned() && e.get<std::uint64_t>() == node.index;
        });
    };
    switch (ev.kind) {
    case event_kind::message: return is("src") || is("dst") || is("origin");
    case event_kind::role_assignment:
        return is("producer") || in(b.value("committee", json::array())) || in(b.value("validators", json::array()));
    case event_kind::topology: return in(b.value("representatives", json::array()));
    case event_kind::slot_outcome:
        return is("producer") || (b.contains("aggregate") && in(b["aggregate"].value("signer_ids", json::array())));
    case event_kind::fault: return is("target");
    case event_kind::counter: return false;
    }
    return false;
}

} // namespace clens
