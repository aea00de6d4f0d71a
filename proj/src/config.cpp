#include "consensus_lens/config.hpp"
#include "consensus_lens/overlay.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace clens {

std::string_view message_type_name(message_type t)
{
    switch (t) {
    case message_type::block_proposal: return "BlockProposal";
    case message_type::attestation: return "Attestation";
    case message_type::attestation_forward: return "AttestationForward";
    case message_type::final_broadcast: return "FinalBroadcast";
    }
    return "Unknown";
}

std::optional<message_type> parse_message_type(std::string_view name)
{
    for (auto t : {message_type::block_proposal, message_type::attestation, message_type::attestation_forward,
                   message_type::final_broadcast})
        if (message_type_name(t) == name) return t;
    return std::nullopt;
}

std::string_view fault_action_name(fault_action a)
{
    switch (a) {
    case fault_action::kill_node: return "kill_node";
    case fault_action::revive_node: return "revive_node";
    case fault_action::set_latency_scale: return "set_latency_scale";
    }
    return "unknown";
}

std::optional<fault_action> parse_fault_action(std::string_view name)
{
    for (auto a : {fault_action::kill_node, fault_action::revive_node, fault_action::set_latency_scale})
        if (fault_action_name(a) == name) return a;
    return std::nullopt;
}

sim_config sim_config::with_defaults(std::size_t n, std::uint64_t slots, const seed& beacon)
{
    sim_config cfg;
    cfg.n = n;
    cfg.slots = slots;
    cfg.beacon_seed = beacon;
    cfg.committee_size = default_committee_size(n);
    cfg.k = default_cluster_count(n);
    return cfg;
}

void sim_config::validate() const
{
    auto fail = [](const std::string& what) { throw config_error(what); };
    if (n == 0) fail("n must be at least 1");
    if (n > 0xffffffffull) fail("n too large");
    if (committee_size > n - 1)
        fail("committee_size " + std::to_string(committee_size) + " exceeds n - 1 = " + std::to_string(n - 1));
    if (k == 0 || k > n) fail("k must lie in [1, n], got " + std::to_string(k));
    try {
        quorum.validate();
    } catch (const invalid_configuration& e) {
        fail(e.what());
    }
    if (slot_duration_ms <= 0) fail("slot_duration_ms must be positive");
    auto non_negative = [&](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) fail(std::string(name) + " must be a non-negative number");
    };
    non_negative(base_latency_ms, "base_latency_ms");
    non_negative(per_unit_distance_ms, "per_unit_distance_ms");
    if (!(bandwidth_bytes_per_ms > 0.0) || !std::isfinite(bandwidth_bytes_per_ms))
        fail("bandwidth_bytes_per_ms must be positive");
    if (jitter_max_ms < 0) fail("jitter_max_ms must be non-negative");
    if (kmeans_max_iters == 0) fail("kmeans_max_iters must be at least 1");
    for (const auto& f : faults) {
        if (f.at_ms < 0) fail("fault at_ms must be non-negative");
        switch (f.action) {
        case fault_action::kill_node:
        case fault_action::revive_node:
            if (!f.target) fail(std::string(fault_action_name(f.action)) + " requires a target");
            if (f.target->index >= n) fail("fault target " + std::to_string(f.target->index) + " outside [0, n)");
            break;
        case fault_action::set_latency_scale:
            if (!f.scale) fail("set_latency_scale requires a scale");
            non_negative(*f.scale, "scale");
            break;
        }
    }
}

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& key)
{
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw config_error("invalid value for '" + key + "'");
    }
}

std::uint64_t unsigned_value(const YAML::Node& node, const std::string& key)
{
    auto text = scalar<std::string>(node, key);
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        throw config_error("'" + key + "' must be a non-negative integer, got '" + text + "'");
    return scalar<std::uint64_t>(node, key);
}

std::int64_t signed_value(const YAML::Node& node, const std::string& key)
{
    auto text = scalar<std::string>(node, key);
    if (text.empty() || text.find_first_not_of("-0123456789") != std::string::npos)
        throw config_error("'" + key + "' must be an integer, got '" + text + "'");
    return scalar<std::int64_t>(node, key);
}

fault_command parse_fault(const YAML::Node& node)
{
    if (!node.IsMap()) throw config_error("fault entries must be mappings");
    static const std::set<std::string> allowed{"at_ms", "action", "target", "scale"};
    for (const auto& kv : node) {
        auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw config_error("unknown fault key '" + key + "'");
    }
    if (!node["at_ms"] || !node["action"]) throw config_error("fault entries need at_ms and action");
    fault_command f;
    f.at_ms = signed_value(node["at_ms"], "at_ms");
    auto action = scalar<std::string>(node["action"], "action");
    auto parsed = parse_fault_action(action);
    if (!parsed) throw config_error("unknown fault action '" + action + "'");
    f.action = *parsed;
    if (node["target"]) {
        auto t = unsigned_value(node["target"], "target");
        if (t > 0xffffffffull) throw config_error("fault target out of range");
        f.target = node_id(static_cast<std::uint32_t>(t));
    }
    if (node["scale"]) f.scale = scalar<double>(node["scale"], "scale");
    return f;
}

} // namespace

sim_config parse_config_text(const std::string& text)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw config_error(std::string("malformed scenario document: ") + e.what());
    }
    if (!root.IsMap()) throw config_error("scenario document must be a mapping");

    static const std::set<std::string> allowed{
        "n", "slots", "beacon_seed", "committee_size", "k", "quorum", "slot_duration_ms", "base_latency_ms",
        "per_unit_distance_ms", "bandwidth_bytes_per_ms", "jitter_max_ms", "proposal_payload_bytes",
        "vote_payload_bytes", "aggregate_payload_bytes", "vdf_iterations", "kmeans_max_iters", "faults"};
    for (const auto& kv : root) {
        auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw config_error("unknown key '" + key + "'");
    }
    for (const char* required : {"n", "slots", "beacon_seed"})
        if (!root[required]) throw config_error(std::string("missing required key '") + required + "'");

    seed beacon;
    try {
        beacon = seed::from_hex(scalar<std::string>(root["beacon_seed"], "beacon_seed"));
    } catch (const std::invalid_argument& e) {
        throw config_error(std::string("beacon_seed: ") + e.what());
    }
    auto cfg = sim_config::with_defaults(unsigned_value(root["n"], "n"), unsigned_value(root["slots"], "slots"),
                                         beacon);
    if (auto v = root["committee_size"]) cfg.committee_size = unsigned_value(v, "committee_size");
    if (auto v = root["k"]) cfg.k = unsigned_value(v, "k");
    if (auto v = root["quorum"]) {
        try {
            cfg.quorum = quorum::parse(scalar<std::string>(v, "quorum"));
        } catch (const invalid_configuration& e) {
            throw config_error(e.what());
        }
    }
    if (auto v = root["slot_duration_ms"]) cfg.slot_duration_ms = signed_value(v, "slot_duration_ms");
    if (auto v = root["base_latency_ms"]) cfg.base_latency_ms = scalar<double>(v, "base_latency_ms");
    if (auto v = root["per_unit_distance_ms"]) cfg.per_unit_distance_ms = scalar<double>(v, "per_unit_distance_ms");
    if (auto v = root["bandwidth_bytes_per_ms"])
        cfg.bandwidth_bytes_per_ms = scalar<double>(v, "bandwidth_bytes_per_ms");
    if (auto v = root["jitter_max_ms"]) cfg.jitter_max_ms = signed_value(v, "jitter_max_ms");
    if (auto v = root["proposal_payload_bytes"])
        cfg.proposal_payload_bytes = unsigned_value(v, "proposal_payload_bytes");
    if (auto v = root["vote_payload_bytes"]) cfg.vote_payload_bytes = unsigned_value(v, "vote_payload_bytes");
    if (auto v = root["aggregate_payload_bytes"])
        cfg.aggregate_payload_bytes = unsigned_value(v, "aggregate_payload_bytes");
    if (auto v = root["vdf_iterations"]) cfg.vdf_iterations = unsigned_value(v, "vdf_iterations");
    if (auto v = root["kmeans_max_iters"]) cfg.kmeans_max_iters = unsigned_value(v, "kmeans_max_iters");
    if (auto v = root["faults"]) {
        if (!v.IsSequence()) throw config_error("'faults' must be a list");
        for (const auto& f : v) cfg.faults.push_back(parse_fault(f));
    }
    cfg.validate();
    return cfg;
}

sim_config parse_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw io_error("cannot read scenario file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw io_error("error reading scenario file '" + path.string() + "'");
    return parse_config_text(buf.str());
}

} // namespace clens
